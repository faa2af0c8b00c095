from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsofdm.ddchannel import (
    NC_SENTINEL,
    ChannelProfile,
    DelayBeyondCpWarning,
    PathSet,
    apply_channel,
    coherent_symbols,
    common_doppler,
    derive_seed,
    doppler_spread_support,
    format_nc,
    generate_channel,
    kmh,
    max_doppler,
)
from gsofdm.numerology import PRESETS, preset

C = 2.998e8


def test_max_doppler_30kmh_cv2x():
    # 163.9 Hz rounds with c = 3e8; c = 2.998e8 gives 164.0 Hz
    assert max_doppler(kmh(30), 5.9e9) == pytest.approx(163.9, rel=1e-3)
    assert 2 * max_doppler(kmh(30), 5.9e9) == pytest.approx(327.8, rel=1e-3)


def test_zero_velocity_gives_zero_doppler(cv2x):
    paths = generate_channel(ChannelProfile(0.0, n_paths=20, los=True), cv2x, 5)
    assert np.all(paths.dopplers == 0)


def test_generation_is_deterministic(cv2x):
    prof = ChannelProfile(kmh(120), n_paths=8)
    a, b = generate_channel(prof, cv2x, 99), generate_channel(prof, cv2x, 99)
    assert a.to_text() == b.to_text()
    assert generate_channel(prof, cv2x, 100).to_text() != a.to_text()


def test_large_path_count_statistics(cv2x):
    prof = ChannelProfile(kmh(300), n_paths=10_000)
    paths = generate_channel(prof, cv2x, 7)
    f_max = max_doppler(prof.velocity, cv2x.carrier_freq)
    assert paths.power == pytest.approx(1.0, rel=0.03)
    assert np.all(np.abs(paths.dopplers) <= f_max)
    assert paths.delays[0] == 0
    assert np.all(paths.delays <= prof.max_excess_delay + 0.5 / cv2x.sample_rate)


def test_jakes_support_width_order_statistics(cv2x):
    f_max = 500.0
    v = f_max * C / cv2x.carrier_freq
    paths = generate_channel(ChannelProfile(v, n_paths=10_000), cv2x, 11)
    assert 0.95 * 1000 <= doppler_spread_support(paths) <= 1000 + 1e-9


def test_delays_are_quantized_unless_off_grid(cv2x):
    ts = 1 / cv2x.sample_rate
    on = generate_channel(ChannelProfile(100, n_paths=50), cv2x, 1)
    off = generate_channel(ChannelProfile(100, n_paths=50, off_grid=True), cv2x, 1)
    assert np.allclose(on.delays / ts, np.round(on.delays / ts))
    assert not np.allclose(off.delays / ts, np.round(off.delays / ts))


def test_los_profile(cv2x):
    prof = ChannelProfile(kmh(120), n_paths=6, los=True, k_factor_db=10)
    paths = generate_channel(prof, cv2x, 3)
    f_max = max_doppler(prof.velocity, cv2x.carrier_freq)
    assert common_doppler(paths) == pytest.approx(f_max)
    assert abs(paths.gains[0]) ** 2 == pytest.approx(10 / 11)
    mean_power = np.mean([generate_channel(prof, cv2x, s).power for s in range(2000)])
    assert mean_power == pytest.approx(1.0, abs=0.01)
    static = generate_channel(ChannelProfile(kmh(120), n_paths=6, los=True, los_doppler_ratio=0.0), cv2x, 3)
    assert common_doppler(static) == 0.0


def test_profile_validation():
    with pytest.raises(ValueError):
        ChannelProfile(10, n_paths=0)
    with pytest.raises(ValueError):
        ChannelProfile(10, pdp_decay=0)
    with pytest.raises(ValueError):
        ChannelProfile(10, n_paths=2, fixed_dopplers=(1.0,))


def test_fixed_doppler_profile(cv2x):
    paths = generate_channel(ChannelProfile(50, n_paths=3, fixed_dopplers=(-100.0, 40.0, 250.0)), cv2x, 0)
    assert paths.dopplers.tolist() == [-100.0, 40.0, 250.0]
    assert doppler_spread_support(paths) == 350.0


def test_apply_identity_and_rotation(rng):
    tx = rng.standard_normal(300) + 1j * rng.standard_normal(300)
    assert np.array_equal(apply_channel(tx, PathSet([1], [0], [0]), 1e6), tx)
    nu, fs = 1234.5, 1.92e6
    rx = apply_channel(tx, PathSet([1], [0], [nu]), fs)
    assert np.allclose(rx, tx * np.exp(2j * np.pi * nu * np.arange(300) / fs), rtol=0, atol=1e-12)


def test_apply_two_paths_matches_direct_loop(rng):
    fs = 1.92e6
    tx = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    paths = PathSet([0.8 - 0.1j, 0.3j], [0.0, 5 / fs], [150.0, -420.0])
    rx = apply_channel(tx, paths, fs)
    ref = np.zeros(205, dtype=complex)
    for n in range(205):
        for g, d, nu in zip(paths.gains, (0, 5), paths.dopplers):
            if 0 <= n - d < 200:
                ref[n] += g * tx[n - d] * np.exp(2j * np.pi * nu * n / fs)
    assert rx.size == 205
    assert np.allclose(rx, ref, atol=1e-12)


def test_apply_noise_level(rng):
    tx = np.zeros(200_000, dtype=complex)
    rx = apply_channel(tx, PathSet([1], [0], [0]), 1e6, snr_db=10, rng=1)
    assert np.mean(np.abs(rx) ** 2) == pytest.approx(0.1, rel=0.02)


def test_apply_rejects_empty_and_warns_beyond_cp():
    with pytest.raises(ValueError):
        apply_channel(np.ones(4), PathSet.empty(), 1e6)
    with pytest.warns(DelayBeyondCpWarning):
        apply_channel(np.ones(40), PathSet([1, 0.1], [0, 20e-6], [0, 0]), 1e6, cp_len=10)


@given(a=st.complex_numbers(max_magnitude=5, allow_nan=False), b=st.complex_numbers(max_magnitude=5, allow_nan=False),
       seed=st.integers(0, 2**32))
def test_apply_is_linear(a, b, seed):
    r = np.random.default_rng(seed)
    x1, x2 = (r.standard_normal(64) + 1j * r.standard_normal(64) for _ in range(2))
    paths = PathSet(r.standard_normal(3) + 1j * r.standard_normal(3), [0, 2e-6, 4e-6], r.uniform(-2e3, 2e3, 3))
    lhs = apply_channel(a * x1 + b * x2, paths, 1e6)
    rhs = a * apply_channel(x1, paths, 1e6) + b * apply_channel(x2, paths, 1e6)
    scale = max(np.max(np.abs(rhs)), 1e-12)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale + 1e-12


def test_power_preserved_on_average():
    num = preset("cv2x")
    prof = ChannelProfile(kmh(120), n_paths=100, max_excess_delay=0.5e-6)
    rng = np.random.default_rng(0)
    tx = (rng.standard_normal(4000) + 1j * rng.standard_normal(4000)) / math.sqrt(2)
    ratios = []
    for s in range(200):
        rx = apply_channel(tx, generate_channel(prof, num, derive_seed(4, s)), num.sample_rate)
        ratios.append(np.mean(np.abs(rx[:4000]) ** 2) / np.mean(np.abs(tx) ** 2))
    assert np.mean(ratios) == pytest.approx(1.0, abs=0.03)


@pytest.mark.parametrize("fc,scs,v,expected", [
    (5.9e9, 15e3, 30, 45),
    (3.5e9, 30e3, 350, 13),
    (140e9, 480e3, 120, 15),
])
def test_coherent_symbols_table_cells(fc, scs, v, expected):
    assert coherent_symbols(fc, scs, kmh(v)) == expected


def test_coherent_symbols_sentinels():
    assert coherent_symbols(28e9, 120e3, kmh(3)) == NC_SENTINEL
    assert coherent_symbols(28e9, 120e3, 0.0) == NC_SENTINEL
    assert format_nc(NC_SENTINEL) == ">100"
    with pytest.raises(ValueError):
        coherent_symbols(0, 15e3, 1)


def test_coherent_symbols_full_table_independent_formula():
    for fc, scs in PRESETS.values():
        for v in (3, 30, 120, 350, 500, 1000):
            n = int(scs * C // (2 * (v / 3.6) * fc))
            expected = NC_SENTINEL if n > 100 else n
            assert coherent_symbols(fc, scs, v / 3.6) == expected


@given(fc=st.floats(1e9, 2e11), scs=st.floats(1e4, 1e6), v1=st.floats(0.1, 400), v2=st.floats(0.1, 400))
def test_coherent_symbols_monotone(fc, scs, v1, v2):
    lo, hi = sorted((v1, v2))
    assert coherent_symbols(fc, scs, hi) <= coherent_symbols(fc, scs, lo)
    assert coherent_symbols(fc * 1.5, scs, lo) <= coherent_symbols(fc, scs, lo)
    assert coherent_symbols(fc, scs * 1.5, lo) >= coherent_symbols(fc, scs, lo)


def test_support_and_common_doppler():
    assert doppler_spread_support(PathSet([1], [0], [77.0])) == 0.0
    assert doppler_spread_support(PathSet([1, 1, 1], [0, 0, 0], [-100, 40, 250])) == 350.0
    assert common_doppler(PathSet([1], [0], [12.0])) == 12.0
    assert common_doppler(PathSet([0.9, 0.2], [0, 1e-6], [30.0, -80.0])) == 30.0
    assert common_doppler(PathSet([0.5, 0.5], [0, 1e-6], [30.0, -80.0])) == 30.0
    with pytest.raises(ValueError):
        doppler_spread_support(PathSet.empty())
    with pytest.raises(ValueError):
        common_doppler(PathSet.empty())


def test_compensated_support_is_shifted_support(cv2x):
    paths = generate_channel(ChannelProfile(kmh(250), n_paths=9, los=True), cv2x, 8)
    shift = common_doppler(paths)
    residual = paths.shifted(-shift)
    expected = float(np.max(paths.dopplers - shift) - np.min(paths.dopplers - shift))
    assert doppler_spread_support(residual) == pytest.approx(expected)


def test_pathset_text_round_trip(cv2x):
    paths = generate_channel(ChannelProfile(kmh(500), n_paths=7, off_grid=True), cv2x, 21)
    back = PathSet.from_text(paths.to_text())
    assert np.array_equal(back.gains, paths.gains)
    assert np.array_equal(back.delays, paths.delays)
    assert np.array_equal(back.dopplers, paths.dopplers)
    assert len(PathSet.from_text("# comment only\n")) == 0
    with pytest.raises(ValueError, match="line 1"):
        PathSet.from_text("1 2 3\n")


def test_pathset_validation():
    with pytest.raises(ValueError):
        PathSet([np.nan], [0], [0])
    with pytest.raises(ValueError):
        PathSet([1], [-1e-6], [0])
    with pytest.raises(ValueError):
        PathSet([1, 2], [0], [0])


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 0) == derive_seed(1, 0)
    seeds = {derive_seed(1, i) for i in range(1000)} | {derive_seed(2, i) for i in range(1000)}
    assert len(seeds) == 2000
    assert all(0 <= s < 2**64 for s in seeds)
