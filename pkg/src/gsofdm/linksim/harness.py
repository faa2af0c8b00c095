"""Monte-Carlo link harness: per-frame pipeline, batches, sweeps, PAPR, Table 1 and the closed loop.

Every frame draws its channel, payload and noise from seeds derived from
``(base_seed, frame index)`` alone, so all gears see the same channel and
noise at a given index (paired comparisons), and results do not depend on
how frames are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .. import __version__, equalize, estimate
from ..ddchannel import (
    NC_SENTINEL,
    PathSet,
    apply_channel,
    coherent_symbols,
    common_doppler,
    derive_seed,
    format_nc,
    generate_channel,
    kmh,
)
from ..gearctl import Gear, GearController, base_gear
from ..modem import compensate_common_doppler, measure_papr, ofdm_demodulate, ofdm_modulate, papr_ccdf
from ..numerology import PRESET_LABELS, PRESETS, Numerology, Role, build_grid, demap_symbols, map_bits
from ..pilots import build_dd_pilot, build_tf_pattern
from .config import ConfigError, LinkConfig

log = logging.getLogger(__name__)

TABLE1_VELOCITIES_KMH = (3, 30, 120, 350, 500, 1000)
TABLE1_PRESETS = ("cv2x", "fr1", "fr3_60", "fr3_120", "fr2", "subthz")
PAPR_GAMMA_DB = tuple(5.0 + 0.25 * i for i in range(29))

# per-frame sub-streams; the pilot scrambling sequence also changes every frame
_SEED_CHANNEL, _SEED_BITS, _SEED_NOISE, _SEED_PILOT = 0, 1, 2, 3


class FrameError(RuntimeError):
    """Numerical failure inside one frame's pipeline."""

    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"frame seed {seed}: {type(cause).__name__}: {cause}")
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class GearSpec:
    """One gear with its pilot parameter (``d_t`` for Gear 2, PDR for Gear 3)."""

    gear: int
    d_t: int | None = None
    pdr_db: float | None = None

    @property
    def label(self) -> str:
        if self.gear == 2 and self.d_t is not None:
            return f"gear2_dt{self.d_t}"
        if self.gear == 3 and self.pdr_db is not None:
            return f"gear3_pdr{self.pdr_db:g}"
        return f"gear{self.gear}"

    def resolved(self, cfg: LinkConfig) -> "GearSpec":
        if self.gear == 2:
            return GearSpec(2, self.d_t or cfg.g2_d_t, None)
        if self.gear == 3:
            return GearSpec(3, None, cfg.g3_pdr_db if self.pdr_db is None else self.pdr_db)
        return GearSpec(1)


@dataclass(frozen=True)
class FrameRecord:
    seed: int
    gear: int
    velocity_kmh: float
    n_bits: int
    bit_errors: int
    n_symbols: int
    symbol_errors: int
    n_data_re: int
    n_total_re: int
    nmse_db: float
    spread_hz: float
    common_shift_hz: float
    n_paths_detected: int
    # sufficient statistics of the post-equalization SINR on data REs
    corr_re: float = 0.0
    corr_im: float = 0.0
    soft_power: float = 0.0
    ref_power: float = 0.0

    @property
    def frame_error(self) -> bool:
        return self.bit_errors > 0

    def report(self, ue_id: int = 0) -> estimate.DopplerReport:
        return estimate.DopplerReport(self.spread_hz, self.common_shift_hz, self.n_paths_detected, ue_id)


@dataclass(frozen=True)
class FrameDump:
    """Everything a single debug frame produced."""

    record: FrameRecord
    true_paths: PathSet
    est_paths: PathSet | None
    ctf_true: np.ndarray
    ctf_est: np.ndarray
    tx_samples: np.ndarray
    sample_rate: float


def _nmse_db(est: np.ndarray, ref: np.ndarray) -> float:
    den = float(np.sum(np.abs(ref) ** 2))
    num = float(np.sum(np.abs(est - ref) ** 2))
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return 10 * math.log10(num / den) if num > 0 else -math.inf


def _sample_snr_db(cfg: LinkConfig, num: Numerology) -> float:
    # per-RE Es/N0 -> per-sample SNR of the unit-RE-power waveform
    return cfg.snr_db - 10 * math.log10(num.fft_size / num.n_subcarriers)


def _report_from_dd(dd: estimate.DdGrid, cfg: LinkConfig) -> estimate.DopplerReport:
    floor = estimate.cfar_floor(dd, cfg.g3_cfar_db) if cfg.g3_cfar_db is not None else None
    paths = estimate.extract_paths(dd, cfg.max_paths, cfg.report_threshold_db, detect_floor=floor)
    if len(paths) == 0:
        return estimate.DopplerReport(0.0, 0.0, 0)
    return estimate.estimate_doppler_report(paths)


def _report_from_paths(paths: PathSet, cfg: LinkConfig) -> estimate.DopplerReport:
    if len(paths) == 0:
        return estimate.DopplerReport(0.0, 0.0, 0)
    # Only paths within the report threshold of the strongest define the support.
    keep = np.abs(paths.gains) ** 2 >= np.max(np.abs(paths.gains) ** 2) * 10 ** (-cfg.report_threshold_db / 10)
    return estimate.estimate_doppler_report(paths.subset(np.flatnonzero(keep)))


def _frame(cfg: LinkConfig, seed: int, spec: GearSpec, velocity_kmh: float, dump: bool = False):
    num = cfg.numerology()
    const = cfg.constellation_spec()
    m = const.bits_per_symbol
    spec = spec.resolved(cfg)
    if cfg.channel_model == "awgn":
        true_paths = PathSet([1.0], [0.0], [0.0])
    else:
        true_paths = generate_channel(cfg.profile(velocity_kmh), num, derive_seed(seed, _SEED_CHANNEL))
    bit_rng = np.random.default_rng(derive_seed(seed, _SEED_BITS))
    all_bits = bit_rng.integers(0, 2, size=num.n_re * m, dtype=np.int8)

    pilot_grid = np.zeros(num.shape, dtype=np.complex128)
    if spec.gear in (1, 2):
        d_t, d_f = (cfg.g1_d_t, cfg.g1_d_f) if spec.gear == 1 else (spec.d_t, cfg.g2_d_f)
        offset_t = cfg.g1_offset_t if spec.gear == 1 else 0
        pattern, grid = build_tf_pattern(num, d_t, d_f, seed=derive_seed(seed, _SEED_PILOT), offset_t=offset_t)
        pilot_grid = grid.symbols.copy()
        data_mask = grid.mask(Role.DATA)
        beta = 1.0
        pilot = None
    else:
        pattern = None
        grid = build_grid(num, np.zeros(num.shape, dtype=np.int8))
        data_mask = np.ones(num.shape, dtype=bool)
        pilot = build_dd_pilot(num, pdr_db=spec.pdr_db, convention=cfg.g3_pdr_convention)
        beta = 1.0 / math.sqrt(1.0 + pilot.energy / num.n_re)

    n_data = int(data_mask.sum())
    bits = all_bits[: n_data * m]
    data = map_bits(bits, const)
    x = np.zeros(num.shape, dtype=np.complex128)
    x.T[data_mask.T] = data  # column-major placement
    tx_symbols = x + pilot_grid if pilot is None else x + pilot.tf_pilot_grid
    tx = ofdm_modulate(grid.with_symbols(beta * tx_symbols), num)

    rx = apply_channel(tx.samples, true_paths, num.sample_rate, _sample_snr_db(cfg, num),
                       rng=derive_seed(seed, _SEED_NOISE), cp_len=num.cp_len)[: num.frame_samples]
    eff_paths = true_paths
    if cfg.genie_common_doppler:
        shift = common_doppler(true_paths)
        rx = compensate_common_doppler(type(tx)(rx, num.sample_rate), shift).samples
        eff_paths = true_paths.shifted(-shift)
    y = ofdm_demodulate(rx, num).symbols / beta
    noise_var = 10.0 ** (-cfg.snr_db / 10.0) / beta**2
    ctf_true = estimate.reconstruct_ctf(eff_paths, num).values

    est_paths = None
    if spec.gear == 1:
        if cfg.genie_channel:
            ctf = ctf_true
        else:
            sparse = estimate.ls_at_pilots(y, pattern, num)
            ctf = estimate.interpolate_2d(sparse, num).values
        soft = equalize.single_tap_equalize(y, ctf, noise_var)
        decided = equalize.hard_decisions(soft, const)
        refs = np.where(data_mask, decided, pilot_grid)
        report = _report_from_dd(estimate.decision_directed_dd_grid(y, refs, num), cfg)
    elif spec.gear == 2:
        if cfg.genie_channel:
            est_paths = eff_paths
        else:
            est_paths, _ = estimate.gear2_estimate(y, pattern, num, cfg.max_paths, cfg.threshold_rel_db,
                                                   null_radius=cfg.null_radius, refine=cfg.refine)
        ctf = estimate.reconstruct_ctf(est_paths, num).values
        op = equalize.path_operator(est_paths, num, cfg.eq_band)
        clean = y - op.apply(pilot_grid)
        if cfg.g2_equalizer == "imfc":
            soft = equalize.imfc_equalize(clean, est_paths, num, noise_var, cfg.eq_iters,
                                          constellation=const, operator=op)
        else:
            soft = equalize.banded_mmse_equalize(clean, equalize.build_ici_matrices(est_paths, num, cfg.eq_band),
                                                 noise_var)
        report = _report_from_paths(est_paths, cfg)
    else:
        if cfg.genie_channel:
            est_paths = eff_paths
            op = equalize.path_operator(est_paths, num, cfg.eq_band)
            soft = equalize.imfc_equalize(y - op.apply(pilot.tf_pilot_grid), est_paths, num, noise_var,
                                          cfg.eq_iters, constellation=const, operator=op)
        else:
            est_paths, _, info = estimate.estimate_superimposed(
                y, pilot, const, noise_var, cfg.g3_n_iters, num, max_paths=cfg.max_paths,
                threshold_rel_db=cfg.threshold_rel_db, null_radius=cfg.null_radius, refine=cfg.refine, band=cfg.eq_band,
                eq_iters=cfg.eq_iters, cfar_db=cfg.g3_cfar_db, return_info=True)
            soft = info.soft
        ctf = estimate.reconstruct_ctf(est_paths, num).values
        report = _report_from_paths(est_paths, cfg)

    if not np.all(np.isfinite(soft)):
        raise FloatingPointError("non-finite equalizer output")
    soft_data = soft.T[data_mask.T]
    rx_bits = demap_symbols(soft_data, const)
    bit_err = int(np.count_nonzero(rx_bits != bits))
    sym_err = int(np.count_nonzero((rx_bits != bits).reshape(-1, m).any(axis=1)))
    corr = complex(np.vdot(data, soft_data))
    record = FrameRecord(
        seed=int(seed), gear=spec.gear, velocity_kmh=float(velocity_kmh), n_bits=int(bits.size),
        bit_errors=bit_err, n_symbols=n_data, symbol_errors=sym_err, n_data_re=n_data, n_total_re=num.n_re,
        nmse_db=_nmse_db(ctf, ctf_true), spread_hz=report.spread_hz, common_shift_hz=report.common_shift_hz,
        n_paths_detected=report.n_paths_detected, corr_re=corr.real, corr_im=corr.imag,
        soft_power=float(np.vdot(soft_data, soft_data).real), ref_power=float(np.vdot(data, data).real),
    )
    if dump:
        return FrameDump(record, true_paths, est_paths, ctf_true, ctf, tx.samples, num.sample_rate)
    return record


def run_frame(cfg: LinkConfig, frame_seed: int, spec: GearSpec | None = None,
              velocity_kmh: float | None = None) -> FrameRecord:
    """Run one frame end to end; numeric failures are re-raised as :class:`FrameError`."""
    spec = spec or GearSpec(cfg.gear)
    v = cfg.velocity_kmh if velocity_kmh is None else velocity_kmh
    try:
        return _frame(cfg, frame_seed, spec, v)
    except (ConfigError, FrameError):
        raise
    except (ArithmeticError, np.linalg.LinAlgError, equalize.EqualizerError, RuntimeError, ValueError) as exc:
        raise FrameError(frame_seed, exc) from exc


def dump_frame(cfg: LinkConfig, frame_seed: int, spec: GearSpec | None = None) -> FrameDump:
    try:
        return _frame(cfg, frame_seed, spec or GearSpec(cfg.gear), cfg.velocity_kmh, dump=True)
    except (ArithmeticError, np.linalg.LinAlgError, equalize.EqualizerError, RuntimeError, ValueError) as exc:
        raise FrameError(frame_seed, exc) from exc


def frame_seed(cfg: LinkConfig, index: int) -> int:
    return derive_seed(cfg.base_seed, index)


def _job(args) -> FrameRecord:
    cfg, seed, spec, v = args
    return run_frame(cfg, seed, spec, v)


def run_batch(cfg: LinkConfig, spec: GearSpec, velocity_kmh: float, n_frames: int | None = None,
              workers: int | None = None) -> list[FrameRecord]:
    """Frames ``0..n-1`` in index order, on ``workers`` processes."""
    n = cfg.n_frames if n_frames is None else n_frames
    w = cfg.workers if workers is None else workers
    jobs = [(cfg, frame_seed(cfg, i), spec, velocity_kmh) for i in range(n)]
    if w <= 1 or n <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(_job, jobs, chunksize=max(1, n // (4 * w))))


@dataclass(frozen=True)
class LinkMetrics:
    n_frames: int
    ber: float
    ser: float
    fer: float
    throughput: float
    throughput_ci: float
    fer_ci: float
    nmse_db: float
    gear_trace: tuple[int, ...] = ()


def binomial_ci(p: float, n: int) -> float:
    """Normal-approximation 95% radius of a binomial proportion."""
    return 1.96 * math.sqrt(max(p * (1 - p), 0.0) / n) if n else 0.0


def throughput_bits_per_re(records: Sequence[FrameRecord], bits_per_symbol: int) -> tuple[float, float]:
    """``(N_data / N_total) * m * (1 - FER)`` and its 95% radius, pooled over the records."""
    if not records:
        raise ValueError("no frames")
    n = len(records)
    fer = sum(r.frame_error for r in records) / n
    eff = sum(r.n_data_re / r.n_total_re for r in records) / n * bits_per_symbol
    if len({r.n_data_re for r in records}) == 1:
        return eff * (1 - fer), eff * binomial_ci(fer, n)
    # mixed gears: mean of per-frame goodput and its normal CI
    per = np.array([(r.n_data_re / r.n_total_re) * bits_per_symbol * (not r.frame_error) for r in records])
    return float(per.mean()), float(1.96 * per.std() / math.sqrt(n))


def summarize(records: Sequence[FrameRecord], bits_per_symbol: int) -> LinkMetrics:
    n = len(records)
    bits = sum(r.n_bits for r in records)
    syms = sum(r.n_symbols for r in records)
    fer = sum(r.frame_error for r in records) / n
    tp, ci = throughput_bits_per_re(records, bits_per_symbol)
    finite = [r.nmse_db for r in records if math.isfinite(r.nmse_db)]
    return LinkMetrics(
        n_frames=n,
        ber=sum(r.bit_errors for r in records) / bits,
        ser=sum(r.symbol_errors for r in records) / syms,
        fer=fer,
        throughput=tp,
        throughput_ci=ci,
        fer_ci=binomial_ci(fer, n),
        nmse_db=float(np.mean(finite)) if finite else -math.inf,
        gear_trace=tuple(r.gear for r in records),
    )


def post_eq_sinr_db(records: Sequence[FrameRecord]) -> float:
    """Bias-free SINR ``|E[x^ x*]|^2 / (E|x^|^2 E|x|^2 - |E[x^ x*]|^2)`` pooled over frames."""
    c = complex(sum(r.corr_re for r in records), sum(r.corr_im for r in records))
    p_hat = sum(r.soft_power for r in records)
    p_ref = sum(r.ref_power for r in records)
    den = p_hat * p_ref - abs(c) ** 2
    return math.inf if den <= 0 else 10 * math.log10(abs(c) ** 2 / den)


def fmt(x: float) -> str:
    return f"{x:.6g}"


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- adaptive loop


@dataclass
class AdaptiveResult:
    records: list[FrameRecord]
    gears: list[int]
    decision_log: str
    metrics: LinkMetrics | None = None
    per_block: list[LinkMetrics] = field(default_factory=list)


def run_adaptive(cfg: LinkConfig, trace_kmh: Sequence[float], cache: dict | None = None) -> AdaptiveResult:
    """Closed loop, one frame per block, one block of feedback delay.

    The gear used in block ``b`` is the controller's decision after the
    report from block ``b-1``. ``cache`` may hold records keyed by
    ``(frame index, gear, velocity)`` from fixed-gear runs at the same
    seeds; since frames are deterministic, reusing them is exact.
    """
    if len(trace_kmh) == 0:
        raise ValueError("mobility trace is empty")
    num = cfg.numerology()
    ctl = GearController(num, cfg.hysteresis_margin, Gear(cfg.initial_gear))
    records, gears = [], []
    for b, v in enumerate(trace_kmh):
        g = int(ctl.gear(0))
        key = (b, g, float(v))
        rec = cache.get(key) if cache is not None else None
        if rec is None:
            rec = run_frame(cfg, frame_seed(cfg, b), GearSpec(g), v)
        records.append(rec)
        gears.append(g)
        ctl.ingest(b, rec.report(0))
    m = cfg.constellation_spec().bits_per_symbol
    return AdaptiveResult(records, gears, ctl.log.to_csv(), summarize(records, m),
                          [summarize([r], m) for r in records])


# ---------------------------------------------------------------- experiments


def sweep_specs(cfg: LinkConfig) -> list[GearSpec]:
    return ([GearSpec(1)] + [GearSpec(2, d_t=d) for d in cfg.g2_d_t_list]
            + [GearSpec(3, pdr_db=p) for p in cfg.g3_pdr_list])


def sweep_header(cfg: LinkConfig) -> list[str]:
    cols = ["velocity_kmh"]
    for s in sweep_specs(cfg) + [None]:
        label = s.label if s else "adaptive"
        cols += [label, f"{label}_ci"]
    return cols


def sweep_velocity(cfg: LinkConfig, velocities_kmh: Sequence[float], adaptive: bool = True,
                   workers: int | None = None) -> tuple[str, dict]:
    """Throughput per gear column (and the adaptive loop) at each velocity.

    Returns the CSV text and a dict ``{velocity: {label: LinkMetrics}}``.
    """
    m = cfg.constellation_spec().bits_per_symbol
    rows, results = [], {}
    primary = {1: GearSpec(1).label, 2: GearSpec(2, d_t=cfg.g2_d_t).label,
               3: GearSpec(3, pdr_db=cfg.g3_pdr_db).label}
    for v in velocities_kmh:
        res, row, cache = {}, [float(v)], {}
        batches = {}
        for spec in sweep_specs(cfg):
            recs = run_batch(cfg, spec, v, workers=workers)
            batches[spec.label] = recs
            res[spec.label] = met = summarize(recs, m)
            row += [met.throughput, met.throughput_ci]
        if adaptive:
            for g, label in primary.items():
                recs = batches.get(label)
                if recs is None:
                    continue
                for i, r in enumerate(recs):
                    cache[(i, g, float(v))] = r
            ad = run_adaptive(cfg, [v] * cfg.n_frames, cache)
            res["adaptive"] = ad.metrics
            row += [ad.metrics.throughput, ad.metrics.throughput_ci]
        else:
            row += ["", ""]
        rows.append(row)
        results[float(v)] = res
    return _csv(sweep_header(cfg), rows), results


def _papr_frame_symbols(cfg: LinkConfig, num: Numerology, kind: str, index: int, pdr_db: float | None):
    const = cfg.constellation_spec()
    m = const.bits_per_symbol
    seed = derive_seed(cfg.base_seed, index)
    rng = np.random.default_rng(derive_seed(seed, _SEED_BITS))
    bits = rng.integers(0, 2, size=num.n_re * m, dtype=np.int8)
    if kind == "gear3":
        grid = build_grid(num, np.zeros(num.shape, dtype=np.int8))
        x = map_bits(bits, const).reshape(num.shape, order="F")
        return grid.with_symbols(x + build_dd_pilot(num, pdr_db=pdr_db, convention=cfg.g3_pdr_convention).tf_pilot_grid)
    d_t, d_f, off = (cfg.g1_d_t, cfg.g1_d_f, cfg.g1_offset_t) if kind == "gear1" else (cfg.g2_d_t, cfg.g2_d_f, 0)
    _, grid = build_tf_pattern(num, d_t, d_f, seed=derive_seed(seed, _SEED_PILOT), offset_t=off)
    return grid.with_values(Role.DATA, map_bits(bits[: grid.count(Role.DATA) * m], const))


def papr_experiment(cfg: LinkConfig, pdr_list: Sequence[float] = (20.0, 25.0), n_symbols: int = 100_000,
                    oversample: int = 4, gamma_db: Sequence[float] = PAPR_GAMMA_DB) -> tuple[str, dict]:
    """CCDF of per-symbol PAPR for Gear 1, Gear 2 and Gear 3 at each PDR, on shared data seeds."""
    if n_symbols < 10_000:
        raise ValueError("papr_experiment needs at least 1e4 symbols")
    num = cfg.numerology()
    n_frames = math.ceil(n_symbols / num.n_symbols)
    curves = [("gear1", None), ("gear2", None)] + [("gear3", float(p)) for p in pdr_list]
    samples = {}
    for kind, pdr in curves:
        label = kind if pdr is None else f"gear3_pdr{pdr:g}"
        vals = []
        for f in range(n_frames):
            grid = _papr_frame_symbols(cfg, num, kind, f, pdr)
            vals.append(measure_papr(ofdm_modulate(grid, num), num, oversample).values_db)
        samples[label] = np.concatenate(vals)[:n_symbols]
    ccdf = {label: papr_ccdf(v, gamma_db) for label, v in samples.items()}
    rows = [[float(g)] + [float(ccdf[label][i]) for label in ccdf] for i, g in enumerate(gamma_db)]
    return _csv(["gamma_db"] + list(ccdf), rows), {"ccdf": ccdf, "samples": samples}


@dataclass(frozen=True)
class Table1Cell:
    velocity_kmh: float
    preset: str
    nc: float
    gear: Gear

    @property
    def text(self) -> str:
        return format_nc(self.nc)


def table1_cells() -> list[Table1Cell]:
    cells = []
    for v in TABLE1_VELOCITIES_KMH:
        for name in TABLE1_PRESETS:
            fc, scs = PRESETS[name]
            nc = coherent_symbols(fc, scs, kmh(v))
            cells.append(Table1Cell(float(v), name, nc, base_gear(nc)))
    return cells


def table1_report() -> tuple[str, str]:
    """Formatted text table and CSV of coherent symbols and gear colors."""
    cells = table1_cells()
    csv_text = _csv(["velocity_kmh", "preset", "nc", "gear", "color"],
                    [[f"{c.velocity_kmh:g}", c.preset, c.text, int(c.gear), c.gear.color] for c in cells])
    width = 14
    lines = ["velocity".ljust(10) + "".join(n.ljust(width) for n in TABLE1_PRESETS)]
    for v in TABLE1_VELOCITIES_KMH:
        row = [c for c in cells if c.velocity_kmh == v]
        lines.append(f"{v:g} km/h".ljust(10) + "".join(f"{c.text} ({c.gear.color})".ljust(width) for c in row))
    lines.append("")
    lines += [f"{n}: {PRESET_LABELS[n]}" for n in TABLE1_PRESETS]
    return "\n".join(lines) + "\n", csv_text


def parse_table1_csv(text: str) -> list[Table1Cell]:
    out = []
    for r in csv.DictReader(io.StringIO(text)):
        nc = NC_SENTINEL if r["nc"].startswith(">") else int(r["nc"])
        out.append(Table1Cell(float(r["velocity_kmh"]), r["preset"], nc, Gear(int(r["gear"]))))
    return out


# ---------------------------------------------------------------- output


def metadata(cfg: LinkConfig, experiment: str, **extra) -> dict:
    return {
        "experiment": experiment,
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "seeds": {"base_seed": cfg.base_seed, "n_frames": cfg.n_frames,
                  "derivation": "frame i uses SeedSequence([base_seed, i]); channel/bits/noise/pilot sub-seeds 0/1/2/3"},
        "genie": {"common_doppler": cfg.genie_common_doppler, "noise_var": cfg.genie_noise_var,
                  "channel": cfg.genie_channel},
        **extra,
    }


def write_outputs(out_dir: str, name: str, csv_text: str, meta: dict) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    meta_path = os.path.join(out_dir, f"{name}.meta.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text)
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return csv_path, meta_path


def record_dict(rec: FrameRecord) -> dict:
    d = asdict(rec)
    d["frame_error"] = rec.frame_error
    return d
