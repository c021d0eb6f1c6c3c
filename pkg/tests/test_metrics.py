import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfswarm.antenna import build_lattice
from cfswarm.channel import ChannelMatrix
from cfswarm.geom import TimeTag
from cfswarm.metrics import (UserSlotResult, aggregate, color_lattice, frequency_reuse_sinr, sinr, sinr_all,
                             truncated_shannon, user_results)
from oracles import aggregate_rows, brute_force_sinr


def _pair(rng, k, n):
    h = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
    w = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return h, w


def test_single_user_has_no_interference(rng):
    h, w = _pair(rng, 1, 8)
    g, snr, sir = sinr(h, w, 0)
    assert g == pytest.approx(abs(h[0] @ w[:, 0]) ** 2, rel=1e-14)
    assert g == snr and math.isinf(sir)


def test_zero_forcing_gives_snr(rng):
    h, _ = _pair(rng, 3, 8)
    w = np.linalg.pinv(h)
    gamma, snr, _ = sinr_all(h, w)
    assert np.allclose(gamma, snr, rtol=1e-12)


def test_three_user_brute_force(rng):
    h, w = _pair(rng, 3, 10)
    gamma, _, _ = sinr_all(h, w)
    assert np.allclose(gamma, brute_force_sinr(h, w), rtol=1e-12, atol=0)


def test_index_out_of_range(rng):
    h, w = _pair(rng, 2, 4)
    with pytest.raises(IndexError):
        sinr(h, w, 2)


def test_estimation_channel_rejected(rng):
    h, w = _pair(rng, 2, 4)
    with pytest.raises(ValueError):
        sinr_all(ChannelMatrix(h, TimeTag.ESTIMATION, np.arange(2), 1, 4), w)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(2, 16), st.integers(0, 2**31))
def test_sinr_below_snr_and_sir(k, n, seed):
    h, w = _pair(np.random.default_rng(seed), k, n)
    gamma, snr, sir = sinr_all(h, w)
    assert np.all(gamma <= np.minimum(snr, sir) * (1 + 1e-12))


def test_shannon_endpoints():
    assert truncated_shannon(10 ** (-20 / 10)) == 0.0
    assert truncated_shannon(1.0) == 1.0
    assert truncated_shannon(1000.0) == math.log2(1001)
    assert truncated_shannon(1e9) == math.log2(1001)
    assert truncated_shannon(0.1) == pytest.approx(math.log2(1.1))
    with pytest.raises(ValueError):
        truncated_shannon(-1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_shannon_monotone(a, b):
    lo, hi = sorted((a, b))
    assert truncated_shannon(lo) <= truncated_shannon(hi)


def _res(se, served, uid=0):
    g = 10.0 if served else 0.01
    return UserSlotResult(uid, 0, g, g, math.inf, se if served else 0.0, served)


def test_aggregate_all_served():
    rep = aggregate([_res(2.0, True, i) for i in range(5)], 30e6)
    assert rep.avg_se_served_bps_hz == 2.0 and rep.outage_pct == 0.0
    assert rep.avg_capacity_mbps == pytest.approx(60.0)


def test_aggregate_half_served():
    rep = aggregate([_res(4.0, True, 0), _res(0.0, False, 1)], 30e6)
    assert rep.avg_se_served_bps_hz == 4.0 and rep.outage_pct == 50.0


def test_aggregate_nobody_served():
    rep = aggregate([_res(0.0, False)], 30e6)
    assert math.isnan(rep.avg_se_served_bps_hz) and rep.outage_pct == 100.0
    with pytest.raises(ValueError):
        aggregate([], 30e6)


def test_aggregate_matches_spreadsheet_oracle(rng):
    gamma = 10 ** (rng.uniform(-25, 40, 200) / 10)
    recs = user_results(np.arange(200), 0, gamma, gamma, np.full(200, np.inf))
    rep = aggregate(recs, 30e6)
    avg, outage = aggregate_rows([(g, r.spectral_efficiency_bps_hz) for g, r in zip(gamma, recs)])
    assert rep.avg_se_served_bps_hz == pytest.approx(avg, rel=1e-12)
    assert rep.outage_pct == pytest.approx(outage)
    assert all((r.served and r.sinr_linear >= 0.1) or (not r.served and r.spectral_efficiency_bps_hz == 0)
               for r in recs)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.2, 9.0), min_size=1, max_size=20))
def test_unserved_user_leaves_average(ses):
    base = [_res(s, True, i) for i, s in enumerate(ses)]
    a = aggregate(base, 1e6)
    b = aggregate(base + [_res(0.0, False, 99)], 1e6)
    assert b.avg_se_served_bps_hz == a.avg_se_served_bps_hz
    assert b.outage_pct > a.outage_pct


@pytest.mark.parametrize("tiers", [1, 2, 4, 5])
@pytest.mark.parametrize("n_colors", [3, 4])
def test_colouring_valid(tiers, n_colors):
    lat = build_lattice(tiers, 0.2)
    colors = color_lattice(lat, n_colors)
    assert set(colors) <= set(range(n_colors))
    assert all(colors[a] != colors[b] for a, b in lat.neighbour_pairs())


def test_colouring_rejects_other_counts():
    with pytest.raises(ValueError):
        color_lattice(build_lattice(1, 0.2), 2)


def test_fr_isolated_beams_no_interference(rng):
    h, w = _pair(rng, 4, 8)
    gamma, snr, sir = frequency_reuse_sinr(h, w, [0, 1, 2, 3], 8.0, 8, 4)
    assert np.allclose(gamma, snr) and np.all(np.isinf(sir))


def test_fr_power_and_noise_scaling(rng):
    h, w = _pair(rng, 2, 8)
    gamma, snr, _ = frequency_reuse_sinr(h, w, [1, 1], 6.0, 3, 3)
    wn = w / np.linalg.norm(w, axis=0) * math.sqrt(2.0)
    g = np.abs(h @ wn) ** 2
    assert snr[0] == pytest.approx(3 * g[0, 0], rel=1e-12)
    assert gamma[0] == pytest.approx(g[0, 0] / (1 / 3 + g[0, 1]), rel=1e-12)
