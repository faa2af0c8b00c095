"""GS-OFDM three-gear link simulator."""

from __future__ import annotations

__version__ = "0.1.0"
