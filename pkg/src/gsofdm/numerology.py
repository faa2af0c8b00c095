"""Time/frequency bookkeeping, resource grids and the QAM constellation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 2.998e8  # m/s


@dataclass(frozen=True)
class Numerology:
    """OFDM numerology: carrier, subcarrier spacing and frame dimensions.

    Subcarrier ``k`` of the grid (``0 <= k < n_subcarriers``) sits at baseband
    frequency ``(k - n_subcarriers // 2) * scs``, i.e. the active band is
    centred on DC with the DC bin included.
    """

    carrier_freq: float
    scs: float
    n_subcarriers: int = 120
    n_symbols: int = 14
    fft_size: int = 128
    cp_len: int = 10
    name: str = ""

    def __post_init__(self):
        if self.carrier_freq <= 0 or self.scs <= 0:
            raise ValueError("carrier_freq and scs must be positive")
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("grid dimensions must be at least 1x1")
        n = self.fft_size
        if n < 1 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two, got {n}")
        if n < self.n_subcarriers:
            raise ValueError("fft_size must be >= n_subcarriers")
        if not 0 <= self.cp_len < n:
            raise ValueError("cp_len must satisfy 0 <= cp_len < fft_size")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_subcarriers, self.n_symbols)

    @property
    def n_re(self) -> int:
        return self.n_subcarriers * self.n_symbols

    @property
    def sample_rate(self) -> float:
        return self.fft_size * self.scs

    @property
    def useful_duration(self) -> float:
        return 1.0 / self.scs

    @property
    def cp_duration(self) -> float:
        return self.cp_len / self.sample_rate

    @property
    def symbol_duration(self) -> float:
        """Full OFDM symbol duration including the cyclic prefix."""
        return (self.fft_size + self.cp_len) / self.sample_rate

    @property
    def samples_per_symbol(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def frame_samples(self) -> int:
        return self.n_symbols * self.samples_per_symbol

    @property
    def frame_duration(self) -> float:
        return self.n_symbols * self.symbol_duration

    @property
    def first_subcarrier(self) -> int:
        """Signed frequency index of grid row 0."""
        return -(self.n_subcarriers // 2)

    def subcarrier_offsets(self) -> np.ndarray:
        """Signed frequency index of every grid row."""
        return np.arange(self.n_subcarriers) + self.first_subcarrier

    def fft_bins(self) -> np.ndarray:
        """FFT bin used by every grid row."""
        return self.subcarrier_offsets() % self.fft_size

    def useful_start_times(self) -> np.ndarray:
        """Start time of the useful (post-CP) part of each symbol, in seconds."""
        l = np.arange(self.n_symbols)
        return (l * self.samples_per_symbol + self.cp_len) / self.sample_rate

    def with_grid(self, **changes) -> "Numerology":
        return replace(self, **changes)


def default_cp_len(fft_size: int) -> int:
    return math.ceil(fft_size / 14)


# (carrier frequency, subcarrier spacing) for the coherence-table columns.
PRESETS: dict[str, tuple[float, float]] = {
    "cv2x": (5.9e9, 15e3),
    "fr1": (3.5e9, 30e3),
    "fr3_60": (15e9, 60e3),
    "fr3_120": (15e9, 120e3),
    "fr2": (28e9, 120e3),
    "subthz": (140e9, 480e3),
}

PRESET_LABELS = {
    "cv2x": "C-V2X, 5.9 GHz, SCS=15 kHz",
    "fr1": "FR1, 3.5 GHz, SCS=30 kHz",
    "fr3_60": "FR3, 15 GHz, SCS=60 kHz",
    "fr3_120": "FR3, 15 GHz, SCS=120 kHz",
    "fr2": "FR2, 28 GHz, SCS=120 kHz",
    "subthz": "Sub-THz, 140 GHz, SCS=480 kHz",
}


def preset(name: str, **overrides) -> Numerology:
    """Return the named numerology with the default desk-scale grid."""
    try:
        fc, scs = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown numerology preset {name!r}; choose from {sorted(PRESETS)}") from None
    fft_size = overrides.get("fft_size", 128)
    params = dict(
        carrier_freq=fc,
        scs=scs,
        n_subcarriers=120,
        n_symbols=14,
        fft_size=fft_size,
        cp_len=default_cp_len(fft_size),
        name=name,
    )
    params.update(overrides)
    return Numerology(**params)


class Role(enum.IntEnum):
    DATA = 0
    TF_PILOT = 1
    UNUSED = 2


@dataclass(frozen=True)
class ResourceGrid:
    """K x L complex TF grid with a per-RE role mask."""

    symbols: np.ndarray
    roles: np.ndarray

    def __post_init__(self):
        symbols = np.array(self.symbols, dtype=np.complex128)
        roles = np.array(self.roles, dtype=np.int8)
        if symbols.ndim != 2 or symbols.shape != roles.shape:
            raise ValueError(f"symbols {symbols.shape} and roles {roles.shape} must be equal 2-D shapes")
        symbols.setflags(write=False)
        roles.setflags(write=False)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "roles", roles)

    @property
    def shape(self) -> tuple[int, int]:
        return self.symbols.shape

    def mask(self, role: Role) -> np.ndarray:
        return self.roles == role

    def count(self, role: Role) -> int:
        return int(np.count_nonzero(self.roles == role))

    def with_symbols(self, symbols: np.ndarray) -> "ResourceGrid":
        return ResourceGrid(symbols, self.roles)

    def with_values(self, role: Role, values: np.ndarray) -> "ResourceGrid":
        """Return a copy with the REs of ``role`` (column-major order) set to ``values``."""
        out = self.symbols.copy()
        sel = self.mask(role)
        out.T[sel.T] = values
        return ResourceGrid(out, self.roles)

    def values(self, role: Role) -> np.ndarray:
        """Symbols of the REs with ``role``, symbol by symbol (column-major)."""
        return self.symbols.T[self.mask(role).T]


def build_grid(numerology: Numerology, role_pattern: np.ndarray) -> ResourceGrid:
    """Zero-initialised grid carrying ``role_pattern``."""
    roles = np.asarray(role_pattern)
    if roles.shape != numerology.shape:
        raise ValueError(f"role pattern shape {roles.shape} does not match grid {numerology.shape}")
    return ResourceGrid(np.zeros(roles.shape, dtype=np.complex128), roles)


def all_data_roles(numerology: Numerology) -> np.ndarray:
    return np.full(numerology.shape, Role.DATA, dtype=np.int8)


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


@dataclass(frozen=True)
class ConstellationSpec:
    """Gray-coded square QAM with unit average energy.

    A symbol's bits are split in two halves: the first half picks the
    imaginary level, the second half the real level. On each axis the first
    bit is the sign (0 -> positive) and the remaining bits Gray-code the
    magnitude, so for QPSK the pair ``b1 b0 = 00`` maps to ``(1 + 1j)/sqrt(2)``.
    """

    order: int = 4
    _levels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in (4, 16, 64):
            raise ValueError(f"constellation order must be 4, 16 or 64, got {self.order}")
        side = self.side
        labels = np.arange(side)
        # PAM level of every per-axis bit label, e.g. 4-PAM: 00->+3, 01->+1, 11->-1, 10->-3
        levels = (side - 1 - 2 * _gray_to_binary(labels)).astype(float)
        object.__setattr__(self, "_levels", levels * self.scale)

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.order)))

    @property
    def side(self) -> int:
        return int(round(math.sqrt(self.order)))

    @property
    def scale(self) -> float:
        # mean energy of unscaled square QAM is 2 (M - 1) / 3
        return math.sqrt(3.0 / (2.0 * (self.order - 1)))

    @property
    def max_radius(self) -> float:
        return math.sqrt(2.0) * (self.side - 1) * self.scale

    def axis_levels(self) -> np.ndarray:
        """Real-valued level of every per-axis bit label."""
        return self._levels.copy()

    def points(self) -> np.ndarray:
        """Constellation point of every symbol label (label = bits read MSB first)."""
        labels = np.arange(self.order)
        half = self.bits_per_symbol // 2
        imag = labels >> half
        real = labels & (self.side - 1)
        return self._levels[real] + 1j * self._levels[imag]


def _bits_to_int(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width) @ weights


def map_bits(bits, spec: ConstellationSpec) -> np.ndarray:
    """Map a 0/1 bit sequence onto constellation symbols."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    m = spec.bits_per_symbol
    if bits.size % m:
        raise ValueError(f"bit count {bits.size} is not a multiple of {m}")
    if bits.size == 0:
        return np.zeros(0, dtype=np.complex128)
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    half = m // 2
    groups = bits.reshape(-1, m)
    imag = _bits_to_int(groups[:, :half], half)
    real = _bits_to_int(groups[:, half:], half)
    levels = spec.axis_levels()
    return (levels[real] + 1j * levels[imag]).astype(np.complex128)


def _decide_axis(x: np.ndarray, spec: ConstellationSpec) -> np.ndarray:
    """Nearest per-axis label; exact ties go to the smaller label."""
    levels = spec.axis_levels()
    dist = np.abs(x[:, None] - levels[None, :])
    # snap near-equal distances so midpoints resolve by label, not by rounding noise
    dist = np.round(dist / spec.scale, 9)
    return np.argmin(dist, axis=1)


def demap_symbols(symbols, spec: ConstellationSpec, noise_var: float = 0.0) -> np.ndarray:
    """Hard-decision demapping back to bits (nearest constellation point)."""
    if noise_var < 0:
        raise ValueError("noise_var must be non-negative")
    s = np.asarray(symbols, dtype=np.complex128).ravel()
    m = spec.bits_per_symbol
    half = m // 2
    real = _decide_axis(s.real, spec)
    imag = _decide_axis(s.imag, spec)
    shifts = np.arange(half - 1, -1, -1)
    out = np.empty((s.size, m), dtype=np.int8)
    out[:, :half] = (imag[:, None] >> shifts) & 1
    out[:, half:] = (real[:, None] >> shifts) & 1
    return out.ravel()
