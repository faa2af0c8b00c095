"""Channel estimation for the three gears and the Doppler-spread report.

* Gear 1: LS at the TF pilot lattice, separable bilinear interpolation.
* Gear 2: LS lattice CTF -> periodic CSF (2-D DFT) -> greedy path
  extraction -> path-model CTF reconstruction.
* Gear 3: matched DD correlation against the superimposed pilot, path
  extraction, and iterative cancellation of hard-decided data.

Path gains returned by the extractors are physical gains (the same
convention :func:`gsofdm.ddchannel.generate_channel` uses), so path sets can
be fed straight into the path-model equalizers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import equalize
from .ddchannel import PathSet, common_doppler
from .modem import path_tf_factor
from .numerology import ConstellationSpec, Numerology
from .pilots import DdPilot, TfPilotPattern, tf_to_dd

log = logging.getLogger(__name__)



@dataclass(frozen=True)
class CtfEstimate:
    """Per-RE channel estimate (K x L)."""

    values: np.ndarray
    source: str
    time_varying: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=np.complex128)
        if not np.all(np.isfinite(v)):
            raise ValueError("CTF estimate contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_text(self) -> str:
        return matrix_to_text(self.values)


@dataclass(frozen=True)
class SparseCtf:
    """LS channel estimates on a pilot lattice."""

    values: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    pattern: TfPilotPattern


@dataclass(frozen=True)
class DdGrid:
    """Complex map over (delay bin, Doppler bin).

    ``origin`` is the (row, symbol) of the lattice sample the transform treats
    as index 0; with ``numerology`` set, the extractor converts bin values to
    physical path gains.
    """

    values: np.ndarray
    delay_res: float
    doppler_res: float
    numerology: Numerology | None = None
    origin: tuple[int, int] = (0, 0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def to_text(self) -> str:
        return matrix_to_text(self.values)


@dataclass(frozen=True)
class DopplerReport:
    spread_hz: float
    common_shift_hz: float
    n_paths_detected: int
    ue_id: int = 0

    def __post_init__(self):
        if self.spread_hz < 0:
            raise ValueError("Doppler spread must be non-negative")


def matrix_to_text(values: np.ndarray) -> str:
    """Row-major plain text, one row per line, cells ``re,im`` separated by spaces."""
    return "\n".join(" ".join(f"{z.real!r},{z.imag!r}" for z in row) for row in np.asarray(values).tolist()) + "\n"


def matrix_from_text(text: str) -> np.ndarray:
    rows = []
    for line in text.strip().splitlines():
        cells = line.split()
        rows.append([complex(float(c.split(",")[0]), float(c.split(",")[1])) for c in cells])
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError("ragged matrix text")
    return np.array(rows, dtype=np.complex128)


def ls_at_pilots(rx_grid, pattern: TfPilotPattern, numerology: Numerology) -> SparseCtf:
    """``H = rx / pilot`` at every lattice RE."""
    y = np.asarray(getattr(rx_grid, "symbols", rx_grid), dtype=np.complex128)
    rows, cols = pattern.rows(numerology), pattern.cols(numerology)
    pilots = pattern.values(numerology)
    if np.any(np.abs(pilots) == 0):
        raise RuntimeError("zero-modulus pilot value")
    return SparseCtf(y[np.ix_(rows, cols)] / pilots, rows, cols, pattern)


def _interp_axis(values: np.ndarray, known: np.ndarray, n: int) -> np.ndarray:
    """Linear interpolation of each column of ``values`` (sampled at ``known``) onto 0..n-1."""
    x = np.arange(n)
    if known.size == 1:
        return np.repeat(values, n, axis=0)
    out = np.empty((n, values.shape[1]), dtype=np.complex128)
    for j in range(values.shape[1]):
        out[:, j] = np.interp(x, known, values[:, j].real) + 1j * np.interp(x, known, values[:, j].imag)
    return out


def interpolate_2d(sparse: SparseCtf, numerology: Numerology) -> CtfEstimate:
    """Separable bilinear interpolation (frequency, then time), boundary values held."""
    if sparse.values.size == 0:
        raise ValueError("empty pilot lattice")
    freq = _interp_axis(sparse.values, sparse.rows, numerology.n_subcarriers)
    full = _interp_axis(freq.T, sparse.cols, numerology.n_symbols).T
    return CtfEstimate(full, source="gear1", time_varying=False)


def csf_from_ctf(sparse: SparseCtf, pattern: TfPilotPattern, numerology: Numerology) -> DdGrid:
    """Periodic channel spreading function of the lattice CTF.

    ``csf[m, n] = 1/(M N) sum_ij H[i, j] exp(+j2pi i m / M) exp(-j2pi j n / N)``
    so a path on the lattice's DD grid appears at (delay bin, Doppler bin)
    with its basis coefficient as value.
    """
    h = sparse.values
    m_d, n_d = pattern.rows(numerology).size, pattern.cols(numerology).size
    if h.shape != (m_d, n_d) or not np.all(np.isfinite(h)):
        raise ValueError("csf_from_ctf needs a complete lattice")
    csf = np.fft.ifft(np.fft.fft(h, axis=1) / n_d, axis=0)
    return DdGrid(
        csf,
        delay_res=1.0 / (m_d * pattern.d_f * numerology.scs),
        doppler_res=1.0 / (n_d * pattern.d_t * numerology.symbol_duration),
        numerology=numerology,
        origin=(pattern.offset_f, pattern.offset_t),
    )


def ctf_from_csf(dd: DdGrid) -> np.ndarray:
    """Inverse of :func:`csf_from_ctf` back onto the lattice."""
    n_d = dd.shape[1]
    return np.fft.ifft(np.fft.fft(dd.values, axis=0), axis=1) * n_d


def _signed_bin(n: int, size: int) -> int:
    return ((n + size // 2) % size) - size // 2


def _parabolic_offset(a: float, b: float, c: float) -> float:
    den = a - 2 * b + c
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))


def dd_basis_to_gains(values, delays, dopplers, dd: DdGrid) -> np.ndarray:
    """Convert DD bin values (CTF basis coefficients at the lattice origin) to physical gains."""
    values = np.asarray(values, dtype=np.complex128)
    if dd.numerology is None:
        return values
    num = dd.numerology
    k0, l0 = dd.origin
    origin = np.exp(-2j * np.pi * k0 * num.scs * np.asarray(delays)) * np.exp(
        2j * np.pi * np.asarray(dopplers) * l0 * num.symbol_duration
    )
    return values / (origin * path_tf_factor(delays, dopplers, num))


def extract_paths(
    dd: DdGrid,
    max_paths: int = 8,
    threshold_rel_db: float = 25.0,
    null_radius: int = 1,
    detect_floor: float | None = None,
    refine: bool = False,
) -> PathSet:
    """Greedy peak picking on the DD grid.

    Takes the strongest remaining bin, nulls its ``(2r+1) x (2r+1)``
    (cyclic) neighbourhood, and stops once the next peak falls more than
    ``threshold_rel_db`` below the first, or below the absolute power
    ``detect_floor`` (the first peak is always kept), or ``max_paths`` are
    found. Doppler bins wrap to the signed half range. ``refine`` adds
    3-point parabolic sub-bin interpolation on the magnitude.
    """
    if max_paths < 1:
        raise ValueError("max_paths must be >= 1")
    values = np.asarray(dd.values)
    mag = np.abs(values).astype(float)
    m_d, n_d = mag.shape
    if not np.any(mag > 0):
        return PathSet.empty()
    work = mag.copy()
    rel = 10.0 ** (-threshold_rel_db / 20.0)
    picks: list[tuple[int, int]] = []
    first = None
    while len(picks) < max_paths:
        idx = int(np.argmax(work))
        m, n = divmod(idx, n_d)
        peak = work[m, n]
        if peak <= 0:
            break
        if first is None:
            first = peak
        else:
            if peak < first * rel:
                break
            if detect_floor is not None and peak**2 < detect_floor:
                break
        picks.append((m, n))
        rr = np.arange(m - null_radius, m + null_radius + 1) % m_d
        cc = np.arange(n - null_radius, n + null_radius + 1) % n_d
        work[np.ix_(rr, cc)] = 0.0

    delays, dopplers, vals = [], [], []
    for m, n in picks:
        dm = dn = 0.0
        if refine:
            if m_d >= 3:
                dm = _parabolic_offset(mag[(m - 1) % m_d, n], mag[m, n], mag[(m + 1) % m_d, n])
            if n_d >= 3:
                dn = _parabolic_offset(mag[m, (n - 1) % n_d], mag[m, n], mag[m, (n + 1) % n_d])
        delays.append(max(m + dm, 0.0) * dd.delay_res)
        dopplers.append((_signed_bin(n, n_d) + dn) * dd.doppler_res)
        vals.append(values[m, n])
    delays = np.array(delays)
    dopplers = np.array(dopplers)
    gains = dd_basis_to_gains(np.array(vals), delays, dopplers, dd)
    out = PathSet(gains, delays, dopplers)
    if detect_floor is not None and first**2 < detect_floor:
        log.debug("strongest DD peak %.3g is below the detection floor %.3g", first**2, detect_floor)
    return out


def noise_floor(dd: DdGrid) -> float:
    """Per-bin floor power estimated as ``median(|v|^2) / ln 2`` (exact for complex Gaussian bins)."""
    return float(np.median(np.abs(dd.values) ** 2) / math.log(2.0))


def cfar_floor(dd: DdGrid, factor_db: float) -> float:
    """Detection floor ``factor_db`` above the estimated per-bin noise floor."""
    return noise_floor(dd) * 10.0 ** (factor_db / 10.0)


def is_low_power(dd: DdGrid, detect_floor: float) -> bool:
    """True when even the strongest DD bin is below the detection floor."""
    return float(np.max(np.abs(dd.values)) ** 2) < detect_floor


def reconstruct_ctf(paths: PathSet, numerology: Numerology) -> CtfEstimate:
    """Per-RE channel of a path set at symbol granularity.

    ``H[k, l] = sum_p g_p c_p exp(-j2pi k scs tau_p) exp(j2pi nu_p l T_sym)``
    where ``c_p`` is :func:`gsofdm.modem.path_tf_factor`; this equals the
    main diagonal of the path model's ICI matrices.
    """
    if len(paths) == 0:
        raise ValueError("cannot reconstruct from an empty path set")
    k = np.arange(numerology.n_subcarriers)
    l = np.arange(numerology.n_symbols)
    c = path_tf_factor(paths.delays, paths.dopplers, numerology)
    freq = np.exp(-2j * np.pi * k[:, None] * numerology.scs * paths.delays[None, :])
    time = np.exp(2j * np.pi * paths.dopplers[:, None] * l[None, :] * numerology.symbol_duration)
    h = freq @ ((paths.gains * c)[:, None] * time)
    return CtfEstimate(h, source="paths", time_varying=True)


def refit_gains_lattice(paths: PathSet, sparse: SparseCtf, numerology: Numerology) -> PathSet:
    """Least-squares path gains against the lattice CTF for fixed delays/Dopplers."""
    if len(paths) == 0:
        return paths
    c = path_tf_factor(paths.delays, paths.dopplers, numerology)
    freq = np.exp(-2j * np.pi * sparse.rows[:, None] * numerology.scs * paths.delays[None, :])
    time = np.exp(2j * np.pi * paths.dopplers[None, :] * sparse.cols[:, None] * numerology.symbol_duration)
    basis = (freq[:, None, :] * time[None, :, :] * c[None, None, :]).reshape(-1, len(paths))
    gains, *_ = np.linalg.lstsq(basis, sparse.values.reshape(-1), rcond=None)
    return paths.with_gains(gains)


def refit_gains_pilot(paths: PathSet, observation: np.ndarray, pilot_grid: np.ndarray,
                      numerology: Numerology, band: int) -> PathSet:
    """Least-squares path gains so the banded path model best explains ``observation`` from the pilot."""
    if len(paths) == 0:
        return paths
    unit = paths.with_gains(np.ones(len(paths)))
    op = equalize.path_operator(unit, numerology, band)
    basis = np.stack([op.apply_path(p, pilot_grid).ravel() for p in range(len(paths))], axis=1)
    gains, *_ = np.linalg.lstsq(basis, observation.ravel(), rcond=None)
    return paths.with_gains(gains)


def gear2_estimate(
    rx_grid,
    pattern: TfPilotPattern,
    numerology: Numerology,
    max_paths: int = 8,
    threshold_rel_db: float = 25.0,
    null_radius: int = 1,
    refine: bool = False,
    refit: bool = True,
) -> tuple[PathSet, CtfEstimate]:
    """LS lattice CTF -> CSF -> extracted paths -> reconstructed CTF."""
    sparse = ls_at_pilots(rx_grid, pattern, numerology)
    dd = csf_from_ctf(sparse, pattern, numerology)
    paths = extract_paths(dd, max_paths, threshold_rel_db, null_radius=null_radius, refine=refine)
    if refit:
        paths = refit_gains_lattice(paths, sparse, numerology)
    est = reconstruct_ctf(paths, numerology)
    return paths, CtfEstimate(est.values, source="gear2", time_varying=True)


def superimposed_dd_grid(observation: np.ndarray, pilot: DdPilot, numerology: Numerology) -> DdGrid:
    """Matched correlation with the superimposed pilot, taken to the DD plane."""
    a2 = pilot.amplitude**2
    if a2 == 0:
        raise ValueError("pilot has zero power")
    z = observation * np.conj(pilot.tf_pilot_grid) / a2
    return DdGrid(
        tf_to_dd(z),
        delay_res=1.0 / (numerology.n_subcarriers * numerology.scs),
        doppler_res=1.0 / (numerology.n_symbols * numerology.symbol_duration),
        numerology=numerology,
    )


@dataclass
class SuperimposedInfo:
    residual_energy: list[float] = field(default_factory=list)
    diverged: bool = False
    iterations: int = 0
    decisions: np.ndarray | None = None
    soft: np.ndarray | None = None


def estimate_superimposed(
    rx_grid,
    pilot: DdPilot,
    constellation: ConstellationSpec,
    noise_var: float,
    n_iters: int,
    numerology: Numerology,
    max_paths: int = 8,
    threshold_rel_db: float = 25.0,
    null_radius: int = 1,
    refine: bool = False,
    band: int = 4,
    refit: bool = True,
    eq_iters: int = 4,
    cfar_db: float | None = 12.0,
    return_info: bool = False,
):
    """Iterative DD estimation from a superimposed pilot.

    Each pass correlates the (data-cleaned) observation with the pilot,
    extracts paths, refits their gains against the pilot through the banded
    path model, detects the data with the IMFC-style equalizer and
    subtracts the re-modulated hard decisions from the observation. If the
    model residual grows between passes the previous estimate is returned
    and ``info.diverged`` is set. ``cfar_db`` adds a detection floor that far
    above the grid's median-estimated noise floor, which tracks the
    data-induced floor as cancellation removes it.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    y = np.asarray(getattr(rx_grid, "symbols", rx_grid), dtype=np.complex128)
    info = SuperimposedInfo()
    obs = y
    best: tuple[PathSet, CtfEstimate] | None = None
    prev_energy = math.inf
    for it in range(n_iters):
        dd = superimposed_dd_grid(obs, pilot, numerology)
        floor = cfar_floor(dd, cfar_db) if cfar_db is not None else None
        paths = extract_paths(dd, max_paths, threshold_rel_db, null_radius=null_radius,
                              detect_floor=floor, refine=refine)
        if len(paths) == 0:
            break
        if refit:
            paths = refit_gains_pilot(paths, obs, pilot.tf_pilot_grid, numerology, band)
        ctf = CtfEstimate(reconstruct_ctf(paths, numerology).values, source="gear3", time_varying=True)
        op = equalize.path_operator(paths, numerology, band)
        pilot_rx = op.apply(pilot.tf_pilot_grid)
        soft = equalize.imfc_equalize(y - pilot_rx, paths, numerology, noise_var, eq_iters,
                                      constellation=constellation, operator=op)
        decisions = equalize.hard_decisions(soft, constellation)
        data_rx = op.apply(decisions)
        resid = y - data_rx - pilot_rx
        energy = float(np.vdot(resid, resid).real)
        if energy > prev_energy and best is not None:
            info.diverged = True
            log.debug("superimposed estimation: residual grew at pass %d, keeping pass %d", it + 1, it)
            break
        best = (paths, ctf)
        info.residual_energy.append(energy)
        info.iterations = it + 1
        info.decisions, info.soft = decisions, soft
        prev_energy = energy
        obs = y - data_rx
    if best is None:
        raise RuntimeError("no DD path could be extracted from the superimposed pilot")
    if return_info:
        return best[0], best[1], info
    return best


def decision_directed_dd_grid(observation: np.ndarray, symbols: np.ndarray, numerology: Numerology) -> DdGrid:
    """Full-grid DD map of ``y / x`` using known pilots and decided data as references."""
    s = np.asarray(symbols, dtype=np.complex128)
    p = np.abs(s) ** 2
    z = np.divide(observation * np.conj(s), p, out=np.zeros_like(s), where=p > 0)
    return DdGrid(
        tf_to_dd(z),
        delay_res=1.0 / (numerology.n_subcarriers * numerology.scs),
        doppler_res=1.0 / (numerology.n_symbols * numerology.symbol_duration),
        numerology=numerology,
    )


def estimate_doppler_report(paths: PathSet, ue_id: int = 0) -> DopplerReport:
    """Spread = Doppler support after removing the strongest path's shift."""
    if len(paths) == 0:
        raise ValueError("empty path set")
    shift = common_doppler(paths)
    residual = paths.dopplers - shift
    return DopplerReport(float(residual.max() - residual.min()), shift, len(paths), ue_id)

