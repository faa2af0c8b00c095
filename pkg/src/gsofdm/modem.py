"""CP-OFDM modulation, common-Doppler compensation and PAPR measurement.

Scaling: the IDFT/DFT pair is unitary, and the modulator additionally
multiplies by ``sqrt(fft_size / K)`` (the demodulator divides by it), so a
unit-power grid produces unit mean power over each symbol's useful part.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .numerology import Numerology, ResourceGrid


@dataclass(frozen=True)
class SampleFrame:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.complex128).ravel()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self) -> int:
        return self.samples.size

    def to_bytes(self) -> bytes:
        """8-byte little-endian sample count, then interleaved float64 (re, im)."""
        body = np.empty(2 * self.samples.size, dtype="<f8")
        body[0::2] = self.samples.real
        body[1::2] = self.samples.imag
        return struct.pack("<Q", self.samples.size) + body.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, sample_rate: float) -> "SampleFrame":
        if len(blob) < 8:
            raise ValueError("blob too short for the length header")
        (n,) = struct.unpack("<Q", blob[:8])
        if len(blob) != 8 + 16 * n:
            raise ValueError(f"header announces {n} samples but payload holds {(len(blob) - 8) / 16}")
        body = np.frombuffer(blob[8:], dtype="<f8")
        return cls(body[0::2] + 1j * body[1::2], sample_rate)


def ofdm_modulate(grid: ResourceGrid, numerology: Numerology) -> SampleFrame:
    if grid.shape != numerology.shape:
        raise ValueError(f"grid shape {grid.shape} does not match numerology {numerology.shape}")
    n, k = numerology.fft_size, numerology.n_subcarriers
    buf = np.zeros((n, numerology.n_symbols), dtype=np.complex128)
    buf[numerology.fft_bins(), :] = grid.symbols
    useful = np.fft.ifft(buf, axis=0, norm="ortho") * math.sqrt(n / k)
    cp = numerology.cp_len
    with_cp = np.concatenate([useful[n - cp:, :], useful], axis=0) if cp else useful
    return SampleFrame(with_cp.T.ravel(), numerology.sample_rate)


def _symbol_matrix(samples: np.ndarray, numerology: Numerology) -> np.ndarray:
    """Reshape a frame into (samples_per_symbol, L)."""
    expected = numerology.frame_samples
    if samples.size != expected:
        raise ValueError(f"frame has {samples.size} samples, expected {expected}")
    return samples.reshape(numerology.n_symbols, numerology.samples_per_symbol).T


def ofdm_demodulate(frame: SampleFrame | np.ndarray, numerology: Numerology, roles=None) -> ResourceGrid:
    samples = frame.samples if isinstance(frame, SampleFrame) else np.asarray(frame, dtype=np.complex128)
    sym = _symbol_matrix(samples, numerology)
    n, k = numerology.fft_size, numerology.n_subcarriers
    spec = np.fft.fft(sym[numerology.cp_len:, :], axis=0, norm="ortho")
    values = spec[numerology.fft_bins(), :] * math.sqrt(k / n)
    if roles is None:
        roles = np.zeros(values.shape, dtype=np.int8)
    return ResourceGrid(values, roles)


def compensate_common_doppler(frame: SampleFrame, shift_hz: float) -> SampleFrame:
    if not math.isfinite(shift_hz):
        raise ValueError("shift must be finite")
    if shift_hz == 0:
        return frame
    n = np.arange(len(frame))
    return SampleFrame(frame.samples * np.exp(-2j * np.pi * shift_hz * n / frame.sample_rate), frame.sample_rate)


def leakage_kernel(offsets, doppler: float, numerology: Numerology) -> np.ndarray:
    """Inter-carrier leakage ``D(m, nu)`` by direct summation over the useful part.

    ``D(m, nu) = (1/N) sum_n exp(j 2 pi nu n / fs) exp(-j 2 pi m n / N)``.
    """
    m = np.asarray(offsets, dtype=float)
    n = np.arange(numerology.fft_size)
    phase = 2 * np.pi * (doppler / numerology.sample_rate - m[..., None] / numerology.fft_size) * n
    return np.exp(1j * phase).mean(axis=-1)


def path_tf_factor(delays, dopplers, numerology: Numerology) -> np.ndarray:
    """Per-path constant linking a physical gain to its CTF basis coefficient.

    The demodulated per-RE channel of a path is
    ``g * factor * exp(-j 2 pi k scs tau) * exp(j 2 pi nu l T_sym)`` for grid
    row ``k`` and symbol ``l``; ``factor`` absorbs the band offset, the CP
    start time and the intra-symbol Doppler average ``D(0, nu)``.
    """
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    dopplers = np.atleast_1d(np.asarray(dopplers, dtype=float))
    d0 = np.array([leakage_kernel(0, nu, numerology) for nu in dopplers], dtype=np.complex128)
    band = np.exp(-2j * np.pi * numerology.first_subcarrier * numerology.scs * delays)
    cp = np.exp(2j * np.pi * dopplers * numerology.cp_duration)
    return band * cp * d0


@dataclass(frozen=True)
class PaprMeasurement:
    values_db: np.ndarray
    skipped: int = 0


def _papr_db(sym: np.ndarray) -> tuple[np.ndarray, int]:
    power = np.abs(sym) ** 2
    mean = power.mean(axis=0)
    ok = mean > 0
    values = 10 * np.log10(power[:, ok].max(axis=0) / mean[ok])
    return values, int(np.count_nonzero(~ok))


def measure_papr(frame: SampleFrame | np.ndarray, numerology: Numerology, oversample: int = 1) -> PaprMeasurement:
    """Per-symbol PAPR in dB over the full symbol including its CP.

    ``oversample > 1`` interpolates the (cyclic) useful part by zero-padding
    its spectrum before measuring.
    """
    samples = frame.samples if isinstance(frame, SampleFrame) else np.asarray(frame, dtype=np.complex128)
    if samples.size == 0:
        raise ValueError("empty frame")
    sym = _symbol_matrix(samples, numerology)
    if oversample > 1:
        n, cp = numerology.fft_size, numerology.cp_len
        spec = np.fft.fft(sym[cp:, :], axis=0)
        half = n // 2
        padded = np.zeros((n * oversample, sym.shape[1]), dtype=np.complex128)
        padded[:half] = spec[:half]
        padded[-half:] = spec[half:]
        useful = np.fft.ifft(padded, axis=0) * oversample
        sym = np.concatenate([useful[useful.shape[0] - cp * oversample:], useful], axis=0)
    values, skipped = _papr_db(sym)
    return PaprMeasurement(values, skipped)


def papr_ccdf(values_db, thresholds_db) -> np.ndarray:
    """Fraction of PAPR samples strictly above each threshold."""
    v = np.sort(np.asarray(getattr(values_db, "values_db", values_db), dtype=float))
    if v.size == 0:
        raise ValueError("no PAPR samples")
    t = np.asarray(thresholds_db, dtype=float)
    return (v.size - np.searchsorted(v, t, side="right")) / v.size
