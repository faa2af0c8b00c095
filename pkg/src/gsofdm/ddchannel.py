"""Doubly-selective multipath channels as sparse delay-Doppler path sets."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .numerology import SPEED_OF_LIGHT, Numerology

#: Returned by :func:`coherent_symbols` when the count exceeds 100 symbols.
NC_SENTINEL = math.inf
NC_CAP = 100


class DelayBeyondCpWarning(UserWarning):
    """A path delay exceeds the cyclic prefix; ISI is being modelled."""


@dataclass(frozen=True)
class PropagationPath:
    gain: complex
    delay: float
    doppler: float


@dataclass(frozen=True)
class PathSet:
    """Sparse DD channel: per-path complex gain, delay (s) and Doppler (Hz)."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128)).copy()
        d = np.atleast_1d(np.asarray(self.delays, dtype=float)).copy()
        v = np.atleast_1d(np.asarray(self.dopplers, dtype=float)).copy()
        if not (g.shape == d.shape == v.shape) or g.ndim != 1:
            raise ValueError("gains, delays and dopplers must be 1-D arrays of equal length")
        if not np.all(np.isfinite(g)):
            raise ValueError("path gains must be finite")
        if np.any(d < 0):
            raise ValueError("path delays must be non-negative")
        for a in (g, d, v):
            a.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "dopplers", v)

    @classmethod
    def from_paths(cls, paths: Iterable[PropagationPath | tuple]) -> "PathSet":
        rows = [p if isinstance(p, PropagationPath) else PropagationPath(*p) for p in paths]
        return cls(
            np.array([p.gain for p in rows], dtype=np.complex128),
            np.array([p.delay for p in rows], dtype=float),
            np.array([p.doppler for p in rows], dtype=float),
        )

    @classmethod
    def empty(cls) -> "PathSet":
        return cls(np.zeros(0, complex), np.zeros(0), np.zeros(0))

    def __len__(self) -> int:
        return self.gains.size

    def __iter__(self) -> Iterator[PropagationPath]:
        for g, d, v in zip(self.gains, self.delays, self.dopplers):
            yield PropagationPath(complex(g), float(d), float(v))

    def __getitem__(self, idx) -> PropagationPath:
        return PropagationPath(complex(self.gains[idx]), float(self.delays[idx]), float(self.dopplers[idx]))

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    def shifted(self, doppler_offset: float) -> "PathSet":
        """Same paths with ``doppler_offset`` added to every Doppler shift."""
        return PathSet(self.gains, self.delays, self.dopplers + doppler_offset, self.normalization)

    def with_gains(self, gains) -> "PathSet":
        return PathSet(gains, self.delays, self.dopplers, self.normalization)

    def subset(self, idx) -> "PathSet":
        idx = np.asarray(idx)
        return PathSet(self.gains[idx], self.delays[idx], self.dopplers[idx], self.normalization)

    def union(self, other: "PathSet") -> "PathSet":
        return PathSet(
            np.concatenate([self.gains, other.gains]),
            np.concatenate([self.delays, other.delays]),
            np.concatenate([self.dopplers, other.dopplers]),
        )

    def to_text(self) -> str:
        """One path per line: ``re(gain) im(gain) delay_s doppler_hz``."""
        lines = [f"{g.real!r} {g.imag!r} {d!r} {v!r}" for g, d, v in
                 zip(self.gains.tolist(), self.delays.tolist(), self.dopplers.tolist())]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "PathSet":
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            re, im, d, v = map(float, parts)
            rows.append(PropagationPath(complex(re, im), d, v))
        return cls.from_paths(rows) if rows else cls.empty()


@dataclass(frozen=True)
class ChannelProfile:
    """Statistical channel description used by :func:`generate_channel`.

    ``velocity`` is in m/s. With ``los`` set, path 0 is a deterministic
    line-of-sight component at delay 0 and Doppler ``los_doppler_ratio * f_max``
    (default +f_max) carrying
    ``k_factor_db`` more power than all scattered paths together.
    ``fixed_dopplers`` replaces the isotropic angle draw with an explicit
    per-path Doppler list.
    """

    velocity: float
    n_paths: int = 12
    pdp_decay: float = 0.5e-6
    max_excess_delay: float = 1.5e-6
    los: bool = False
    k_factor_db: float = 0.0
    off_grid: bool = False
    fixed_dopplers: tuple[float, ...] | None = None
    los_doppler_ratio: float = 1.0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.pdp_decay <= 0 or self.max_excess_delay <= 0:
            raise ValueError("pdp_decay and max_excess_delay must be positive")
        if self.velocity < 0:
            raise ValueError("velocity must be non-negative")
        if self.fixed_dopplers is not None and len(self.fixed_dopplers) != self.n_paths:
            raise ValueError("fixed_dopplers must list one Doppler per path")
        if not -1.0 <= self.los_doppler_ratio <= 1.0:
            raise ValueError("los_doppler_ratio must lie in [-1, 1]")


def kmh(v_kmh: float) -> float:
    """km/h -> m/s."""
    return v_kmh / 3.6


def max_doppler(velocity: float, carrier_freq: float) -> float:
    return velocity * carrier_freq / SPEED_OF_LIGHT


def derive_seed(base_seed: int, index: int) -> int:
    """Mix ``(base_seed, index)`` into an independent 64-bit seed."""
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_channel(profile: ChannelProfile, numerology: Numerology, seed: int) -> PathSet:
    """Draw one exponential-PDP Rayleigh channel with isotropic (Jakes) Dopplers."""
    rng = np.random.default_rng(seed)
    p = profile.n_paths
    f_max = max_doppler(profile.velocity, numerology.carrier_freq)

    delays = rng.uniform(0.0, profile.max_excess_delay, size=p)
    delays[0] = 0.0
    if not profile.off_grid:
        ts = 1.0 / numerology.sample_rate
        delays = np.round(delays / ts) * ts

    powers = np.exp(-delays / profile.pdp_decay)
    gains = (rng.standard_normal(p) + 1j * rng.standard_normal(p)) / math.sqrt(2.0)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=p)
    if profile.fixed_dopplers is not None:
        dopplers = np.asarray(profile.fixed_dopplers, dtype=float)
    else:
        dopplers = f_max * np.cos(theta)

    if profile.los:
        k = 10.0 ** (profile.k_factor_db / 10.0)
        scattered = powers[1:]
        if scattered.size:
            powers[1:] = scattered / scattered.sum() / (1.0 + k)
            powers[0] = k / (1.0 + k)
        else:
            powers[0] = 1.0
        gains[0] = 1.0
        if profile.fixed_dopplers is None:
            dopplers[0] = profile.los_doppler_ratio * f_max
    else:
        powers = powers / powers.sum()

    return PathSet(gains * np.sqrt(powers), delays, dopplers, normalization=1.0)


def apply_channel(
    tx,
    paths: PathSet,
    sample_rate: float,
    snr_db: float = math.inf,
    rng: np.random.Generator | int | None = None,
    cp_len: int | None = None,
) -> np.ndarray:
    """Pass a sample stream through the linear time-varying channel.

    ``rx[n] = sum_p g_p tx[n - d_p] exp(j 2 pi nu_p n / fs) + noise`` with
    ``d_p`` the nearest-sample delay. The noise variance per sample is
    ``10**(-snr_db/10)``, i.e. referenced to a unit-power transmit stream.
    """
    if len(paths) == 0:
        raise ValueError("cannot apply an empty path set")
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")
    tx = np.asarray(tx, dtype=np.complex128)
    d = np.rint(paths.delays * sample_rate).astype(int)
    if cp_len is not None and d.max() > cp_len:
        warnings.warn(
            f"path delay of {d.max()} samples exceeds the {cp_len}-sample CP", DelayBeyondCpWarning, stacklevel=2
        )
    n_out = tx.size + int(d.max())
    rx = np.zeros(n_out, dtype=np.complex128)
    n = np.arange(n_out)
    for g, dp, nu in zip(paths.gains, d, paths.dopplers):
        contrib = np.zeros(n_out, dtype=np.complex128)
        contrib[dp:dp + tx.size] = tx
        if nu:
            contrib *= np.exp(2j * np.pi * nu * n / sample_rate)
        rx += g * contrib
    if math.isfinite(snr_db):
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        sigma2 = 10.0 ** (-snr_db / 10.0)
        rx += math.sqrt(sigma2 / 2.0) * (rng.standard_normal(n_out) + 1j * rng.standard_normal(n_out))
    return rx


def coherent_symbols(carrier_freq: float, scs: float, velocity: float) -> float:
    """Number of OFDM symbols in one coherence time.

    ``floor(scs / (2 f_max))``: coherence time ``1/(2 f_max)`` for the
    worst-case isotropic Doppler support, over the useful symbol time
    ``1/scs``. Counts above 100, and zero velocity, give ``NC_SENTINEL``.
    """
    if carrier_freq <= 0 or scs <= 0:
        raise ValueError("carrier_freq and scs must be positive")
    if velocity < 0:
        raise ValueError("velocity must be non-negative")
    if velocity == 0:
        return NC_SENTINEL
    nc = math.floor(scs * SPEED_OF_LIGHT / (2.0 * velocity * carrier_freq))
    return NC_SENTINEL if nc > NC_CAP else nc


def format_nc(nc: float) -> str:
    return f">{NC_CAP}" if nc == NC_SENTINEL else str(int(nc))


def doppler_spread_support(paths: PathSet) -> float:
    """Doppler support width ``max(nu) - min(nu)``."""
    if len(paths) == 0:
        raise ValueError("empty path set")
    return float(paths.dopplers.max() - paths.dopplers.min())


def common_doppler(paths: PathSet) -> float:
    """Doppler shift of the strongest path (first one on ties)."""
    if len(paths) == 0:
        raise ValueError("empty path set")
    return float(paths.dopplers[int(np.argmax(np.abs(paths.gains)))])


def on_grid_paths(
    numerology: Numerology,
    gains: Sequence[complex],
    delay_bins: Sequence[int],
    doppler_bins: Sequence[int],
    n_delay: int | None = None,
    n_doppler: int | None = None,
    doppler_bin_width: float | None = None,
) -> PathSet:
    """Paths lying exactly on a DD grid (default: the full K x L grid).

    Delay bin width is ``1/(n_delay * scs)``. Doppler bin width defaults to
    ``1/(n_doppler * T_sym)``.
    """
    n_delay = n_delay or numerology.n_subcarriers
    n_doppler = n_doppler or numerology.n_symbols
    dv = doppler_bin_width or 1.0 / (n_doppler * numerology.symbol_duration)
    return PathSet(
        np.asarray(gains, dtype=np.complex128),
        np.asarray(delay_bins, dtype=float) / (n_delay * numerology.scs),
        np.asarray(doppler_bins, dtype=float) * dv,
    )
