"""Pilot structures: TF lattice pilots (Gears 1-2) and the superimposed DD pilot (Gear 3)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerology import Numerology, ResourceGrid, Role, build_grid


@dataclass(frozen=True)
class TfPilotPattern:
    """Rectangular pilot lattice ``k = offset_f (mod d_f)``, ``l = offset_t (mod d_t)``."""

    d_t: int
    d_f: int
    offset_t: int = 0
    offset_f: int = 0
    sequence_seed: int = 0

    def validate(self, numerology: Numerology) -> None:
        k, l = numerology.shape
        if not 1 <= self.d_t <= l:
            raise ValueError(f"d_t={self.d_t} outside [1, {l}]")
        if not 1 <= self.d_f <= k:
            raise ValueError(f"d_f={self.d_f} outside [1, {k}]")
        if not (0 <= self.offset_t < self.d_t and 0 <= self.offset_f < self.d_f):
            raise ValueError("lattice offsets must lie inside one lattice period")

    def rows(self, numerology: Numerology) -> np.ndarray:
        return np.arange(self.offset_f, numerology.n_subcarriers, self.d_f)

    def cols(self, numerology: Numerology) -> np.ndarray:
        return np.arange(self.offset_t, numerology.n_symbols, self.d_t)

    def mask(self, numerology: Numerology) -> np.ndarray:
        m = np.zeros(numerology.shape, dtype=bool)
        m[np.ix_(self.rows(numerology), self.cols(numerology))] = True
        return m

    def values(self, numerology: Numerology) -> np.ndarray:
        """Unit-modulus QPSK pilot values on the lattice, shape (rows, cols)."""
        rng = np.random.default_rng(self.sequence_seed)
        shape = (self.rows(numerology).size, self.cols(numerology).size)
        bits = rng.integers(0, 2, size=shape + (2,))
        return ((1 - 2 * bits[..., 1]) + 1j * (1 - 2 * bits[..., 0])) / math.sqrt(2.0)

    def overhead(self, numerology: Numerology) -> float:
        return self.rows(numerology).size * self.cols(numerology).size / numerology.n_re


def build_tf_pattern(
    numerology: Numerology,
    d_t: int,
    d_f: int,
    seed: int = 0,
    offset_t: int = 0,
    offset_f: int = 0,
) -> tuple[TfPilotPattern, ResourceGrid]:
    """Pilot lattice plus a grid with its pilot REs populated (data REs zero)."""
    pattern = TfPilotPattern(d_t, d_f, offset_t, offset_f, seed)
    pattern.validate(numerology)
    mask = pattern.mask(numerology)
    roles = np.where(mask, Role.TF_PILOT, Role.DATA).astype(np.int8)
    grid = build_grid(numerology, roles)
    symbols = np.zeros(numerology.shape, dtype=np.complex128)
    symbols[np.ix_(pattern.rows(numerology), pattern.cols(numerology))] = pattern.values(numerology)
    return pattern, grid.with_symbols(symbols)


def max_estimable_doppler(pattern: TfPilotPattern, numerology: Numerology) -> float:
    """Nyquist limit of Doppler sampling at the pilot-column period."""
    return 1.0 / (2.0 * pattern.d_t * numerology.symbol_duration)


def dd_to_tf(dd: np.ndarray) -> np.ndarray:
    """ISFFT: ``tf[k,l] = sum dd[tau,nu] exp(j2pi(l nu/L - k tau/K))``."""
    dd = np.asarray(dd, dtype=np.complex128)
    n_l = dd.shape[1]
    return np.fft.fft(np.fft.ifft(dd, axis=1) * n_l, axis=0)


def tf_to_dd(tf: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`dd_to_tf` (SFFT normalised by ``1/(K L)``)."""
    tf = np.asarray(tf, dtype=np.complex128)
    n_l = tf.shape[1]
    return np.fft.ifft(np.fft.fft(tf, axis=1) / n_l, axis=0)


@dataclass(frozen=True)
class DdPilot:
    """Single DD impulse transformed to the TF grid.

    ``pdr_db`` is the total pilot energy over the frame relative to the
    per-RE data energy (``convention="frame"``), or the per-RE pilot power
    relative to per-RE data power (``convention="per_re"``).
    """

    placement: tuple[int, int]
    pdr_db: float
    amplitude: float
    tf_pilot_grid: np.ndarray
    convention: str = "frame"

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.tf_pilot_grid) ** 2))

    @property
    def power_per_re(self) -> float:
        return self.amplitude**2


def default_dd_placement(numerology: Numerology) -> tuple[int, int]:
    return (numerology.n_subcarriers // 2, 0)


def build_dd_pilot(
    numerology: Numerology,
    placement: tuple[int, int] | None = None,
    pdr_db: float = 25.0,
    convention: str = "frame",
) -> DdPilot:
    k, l = numerology.shape
    tau0, nu0 = placement if placement is not None else default_dd_placement(numerology)
    if not (0 <= tau0 < k and 0 <= nu0 < l):
        raise ValueError(f"DD placement {(tau0, nu0)} outside the {k}x{l} grid")
    ratio = 10.0 ** (pdr_db / 10.0)
    if convention == "frame":
        amplitude = math.sqrt(ratio / (k * l))
    elif convention == "per_re":
        amplitude = math.sqrt(ratio)
    else:
        raise ValueError(f"unknown PDR convention {convention!r}")
    kk = np.arange(k)[:, None]
    ll = np.arange(l)[None, :]
    tf = amplitude * np.exp(2j * np.pi * (ll * nu0 / l - kk * tau0 / k))
    tf.setflags(write=False)
    return DdPilot((int(tau0), int(nu0)), float(pdr_db), amplitude, tf, convention)


def superimpose(data_grid: ResourceGrid, pilot: DdPilot) -> ResourceGrid:
    if data_grid.shape != pilot.tf_pilot_grid.shape:
        raise ValueError("data grid and pilot grid dimensions differ")
    if data_grid.count(Role.TF_PILOT):
        raise ValueError("superimposed-pilot frames carry no TF pilot REs")
    return data_grid.with_symbols(data_grid.symbols + pilot.tf_pilot_grid)
