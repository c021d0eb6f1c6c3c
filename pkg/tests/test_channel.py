import math

import numpy as np
import pytest

from cfswarm.channel import (CLEAR_SKY, NLOS, ChannelCoefficientTerms, ChannelMatrix, LinkSetup, LossTables,
                             assemble_matrix, assign_los_state, channel_coefficient, coefficient_rows,
                             draw_phase_misalignment, load_loss_tables, noise_power, sample_additional_loss)
from cfswarm.antenna import TerminalParams, UpaConfig
from cfswarm.geom import LosState, Swarm, TimeTag, geodetic_to_ecef, make_swarm, propagate_swarm
from oracles import free_space_coefficient_power

TABLES = load_loss_tables()


def _terms(d=600e3, phi=0.0, t=290.0, b=30e6):
    return ChannelCoefficientTerms(d, 1.0, 1.0, 1.0, noise_power(b, t), phi)


def test_free_space_link_budget():
    h = channel_coefficient(_terms(), 0.15)
    assert abs(h) ** 2 == pytest.approx(free_space_coefficient_power(600e3, 0.15, 290.0, 30e6), rel=1e-12)


def test_phase_pi_negates():
    assert channel_coefficient(_terms(phi=math.pi), 0.15) == pytest.approx(-channel_coefficient(_terms(), 0.15))


def test_doubling_distance():
    d = 600e3 + 0.037
    h1 = channel_coefficient(_terms(d), 0.15)
    h2 = channel_coefficient(_terms(2 * d), 0.15)
    assert abs(h2) == pytest.approx(abs(h1) / 2, rel=1e-12)
    assert h2 / h1 == pytest.approx(0.5 * np.exp(-2j * np.pi * d / 0.15), rel=1e-9)


def test_degenerate_slant_range():
    with pytest.raises(ValueError, match="slant range"):
        channel_coefficient(_terms(d=0.0), 0.15)


def test_clear_sky_all_los_and_unit_loss(rng):
    el = rng.uniform(10, 90, (50, 2))
    assert np.all(assign_los_state(el[:, 0], CLEAR_SKY, "dense_urban", TABLES, rng) == LosState.LOS)
    assert np.all(sample_additional_loss(el, np.ones(50), CLEAR_SKY, "dense_urban", TABLES, rng) == 1.0)


def _custom_tables(p_los=1.0, sigma=0.0, atm=0.0, clutter=20.0):
    bins = [10, 20, 30, 40, 50, 60, 70, 80, 90]
    n = len(bins)
    return LossTables.from_dict({
        "elevation_bins_deg": bins,
        "environments": {"test": {"los_probability": [p_los] * n, "shadowing_sigma_los_db": [sigma] * n,
                                  "shadowing_sigma_nlos_db": [sigma] * n, "clutter_loss_db": [clutter] * n}},
        "atmospheric_db": [atm] * n, "scintillation_db": [atm] * n,
    })


def test_probability_one_bin_all_los(rng):
    tables = _custom_tables(p_los=1.0)
    assert np.all(assign_los_state(np.full(1000, 45.0), NLOS, "test", tables, rng) == LosState.LOS)


def test_degenerate_los_loss_is_one(rng):
    tables = _custom_tables(sigma=0.0, atm=0.0)
    loss = sample_additional_loss(np.full((20, 2), 50.0), np.ones(20), NLOS, "test", tables, rng)
    assert np.all(loss == 1.0)


def test_los_fraction_matches_table(rng):
    p = TABLES.environments["dense_urban"]["los_probability"][2]
    los = assign_los_state(np.full(100_000, 30.0), NLOS, "dense_urban", TABLES, rng)
    assert np.mean(los == LosState.LOS) == pytest.approx(p, abs=0.01)


def test_nlos_mean_loss_in_db(rng):
    el = np.full((100_000, 1), 30.0)
    loss = sample_additional_loss(el, np.zeros(100_000), NLOS, "dense_urban", TABLES, rng)
    env = TABLES.environments["dense_urban"]
    expected = env["clutter_loss_db"][2] + TABLES.atmospheric_db[2] + TABLES.scintillation_db[2]
    sigma = env["shadowing_sigma_nlos_db"][2]
    db = 10 * np.log10(loss)
    assert abs(db.mean() - expected) < 4 * sigma / math.sqrt(len(db))
    assert db.std() == pytest.approx(sigma, rel=0.02)


def test_shadowing_t0_t1_uncorrelated():
    from cfswarm.engine.rng import stream

    el = np.full((100_000, 1), 40.0)
    los = np.zeros(100_000)
    a = sample_additional_loss(el, los, NLOS, "dense_urban", TABLES, stream(1, 0, "shadow_t0", 0))
    b = sample_additional_loss(el, los, NLOS, "dense_urban", TABLES, stream(1, 0, "shadow_t1", 0))
    rho = np.corrcoef(np.log(a[:, 0]), np.log(b[:, 0]))[0, 1]
    assert abs(rho) < 0.02


def test_elevation_bins_round_to_nearest(rng):
    assert list(TABLES.bin_index([10, 14.9, 15.1, 90])) == [0, 0, 1, 8]
    with pytest.raises(ValueError, match="table domain"):
        TABLES.bin_index([5.0])


def test_table_validation():
    with pytest.raises(ValueError):
        _custom_tables(p_los=1.5)
    with pytest.raises(KeyError):
        TABLES.lookup("rural", "los_probability", [30.0])


def _users(n=3):
    return geodetic_to_ecef(np.radians(np.linspace(-1, 1, n)), np.radians(np.linspace(0.5, -0.5, n)))


def test_matrix_shapes():
    link = LinkSetup(UpaConfig(32, 32), TerminalParams.load("vsat"), 0.15, 30e6)
    h1 = assemble_matrix(_users(), [0, 1, 2], make_swarm(1), link, TimeTag.ESTIMATION)
    h2 = assemble_matrix(_users(), [0, 1, 2], make_swarm(2, 600e3, 100e3), link, TimeTag.ESTIMATION)
    assert h1.entries.shape == (3, 1024)
    assert h2.entries.shape == (3, 2048)


def test_matrix_deterministic_with_seed(small_link):
    swarm = make_swarm(2, 600e3, 100e3)
    mats = []
    for _ in range(2):
        rng = np.random.default_rng(5)
        loss = sample_additional_loss(np.full((3, 2), 40.0), np.zeros(3), NLOS, "dense_urban", TABLES, rng)
        phase = draw_phase_misalignment(3, 2, 2 * math.pi, rng)
        mats.append(assemble_matrix(_users(), [0, 1, 2], swarm, small_link, TimeTag.TRANSMISSION, loss, phase))
    assert np.array_equal(mats[0].entries, mats[1].entries)


def test_node_permutation_permutes_blocks(small_link):
    swarm = make_swarm(2, 600e3, 100e3)
    flipped = Swarm(tuple(reversed(swarm.nodes)), swarm.inter_node_spacing_m, swarm.earth)
    # off the symmetry plane so the dish pointing is never a tie
    users = _users() + np.array([0.0, 0.0, 3e3])
    a = assemble_matrix(users, [0, 1, 2], swarm, small_link, TimeTag.ESTIMATION)
    b = assemble_matrix(users, [0, 1, 2], flipped, small_link, TimeTag.ESTIMATION)
    assert np.array_equal(a.node_block(0), b.node_block(1))
    assert np.array_equal(a.node_block(1), b.node_block(0))


def test_clear_sky_t0_t1_differ_only_by_motion(small_link):
    swarm0 = make_swarm(1)
    swarm1 = propagate_swarm(swarm0, 16.7e-3)
    h0 = assemble_matrix(_users(), [0, 1, 2], swarm0, small_link, TimeTag.ESTIMATION)
    h1 = assemble_matrix(_users(), [0, 1, 2], swarm1, small_link, TimeTag.TRANSMISSION)
    assert np.array_equal(h1.entries, coefficient_rows(_users(), swarm1, small_link))
    assert np.array_equal(h0.entries, coefficient_rows(_users(), swarm0, small_link))
    assert not np.allclose(h0.entries, h1.entries)


def test_unit_noise_normalisation(small_link):
    # received power of a unit-power matched beam equals |h|^2 / (noise power) in physical units
    swarm = make_swarm(1)
    user = geodetic_to_ecef(0.0, 0.0)
    h = coefficient_rows(user, swarm, small_link)[0]
    g_rx2 = small_link.terminal.peak_gain_linear(small_link.wavelength_m)
    g_tx2 = 10 ** 0.8
    path = (small_link.wavelength_m / (4 * math.pi * 600e3)) ** 2
    snr = 16 * g_tx2 * g_rx2 * path / small_link.noise_power_w
    w = h.conj() / np.linalg.norm(h)
    assert abs(h @ w) ** 2 == pytest.approx(snr, rel=1e-9)


def test_empty_schedule_rejected(small_link):
    with pytest.raises(ValueError):
        assemble_matrix(np.empty((0, 3)), [], make_swarm(1), small_link, TimeTag.ESTIMATION)


def test_phase_misalignment_modes(rng):
    assert np.all(draw_phase_misalignment(10, 1, 2 * math.pi, rng) == 0)
    assert np.all(draw_phase_misalignment(10, 2, 0.0, rng) == 0)
    var = draw_phase_misalignment(100_000, 2, 2 * math.pi, np.random.default_rng(1), "variance")
    std = draw_phase_misalignment(100_000, 2, 2 * math.pi, np.random.default_rng(1), "std")
    assert var.var() == pytest.approx(2 * math.pi, rel=0.02)
    assert std.std() == pytest.approx(2 * math.pi, rel=0.02)


def test_channel_matrix_layout_checked():
    with pytest.raises(ValueError):
        ChannelMatrix(np.zeros((2, 5)), TimeTag.ESTIMATION, np.arange(2), 2, 4)
