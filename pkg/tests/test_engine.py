import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from cfswarm.engine.arch import LatencyBudget, aging_interval, signalling_overhead
from cfswarm.engine.config import ConfigError, env_overrides, from_dict, load_config
from cfswarm.engine.rng import stream
from cfswarm.engine.runner import build_setup, full_grid, run_drop, run_scenario, sweep
from cfswarm.geom import TimeTag


def tiny(**over):
    base = {"n_drops": 2, "geom.user_count": 30, "power.eirp_dbw_per_mhz": [0.0, 4.0, 8.0, 12.0]}
    return load_config(preset="desk", overrides={**base, **over})


# --- configuration ---------------------------------------------------------

def test_unknown_key_rejected_with_name():
    with pytest.raises(ConfigError) as err:
        from_dict({"geom": {"altitud_km": 500}})
    assert err.value.key == "geom.altitud_km"
    with pytest.raises(ConfigError) as err:
        from_dict({"nonsense": 1})
    assert err.value.key == "nonsense"


@pytest.mark.parametrize("raw, key", [
    ({"geom": {"n_node": 0}}, "geom.n_node"),
    ({"n_drops": "many"}, "n_drops"),
    ({"channel": {"mode": "fog"}}, "channel.mode"),
    ({"power": {"normalization": ["spc", "xyz"]}}, "power.normalization"),
    ({"impair": {"epsilon_rp": 1.5}}, "impair.epsilon_rp"),
    ({"baselines": ["fr3"], "geom": {"n_node": 2}}, "baselines"),
])
def test_invalid_values_name_the_key(raw, key):
    with pytest.raises(ConfigError) as err:
        from_dict(raw)
    assert err.value.key == key


def test_layering_order(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("seed: 5\nn_drops: 3\ngeom:\n  n_node: 2\n")
    env = {"CFSWARM_N_DROPS": "7", "CFSWARM_GEOM__ALTITUDE_KM": "550", "OTHER": "x"}
    cfg = load_config(str(path), "desk", {"seed": 9}, environ=env)
    assert (cfg.seed, cfg.n_drops, cfg.geom.n_node, cfg.geom.altitude_km) == (9, 7, 2, 550.0)
    assert cfg.antenna.n_rows == 8
    assert env_overrides(env) == {"n_drops": 7, "geom.altitude_km": 550}


def test_bad_env_key_rejected():
    with pytest.raises(ConfigError) as err:
        load_config(environ={"CFSWARM_GEOM__NOPE": "1"})
    assert err.value.key == "geom.nope"


def test_digest_ignores_output_location():
    cfg = tiny()
    assert cfg.replace(output_dir="elsewhere", jobs=4).digest() == cfg.digest()
    assert cfg.replace(seed=1).digest() != cfg.digest()


def test_replace_validates():
    with pytest.raises(ConfigError):
        tiny().replace(**{"geom.terminal": "phone"})


# --- rng ------------------------------------------------------------------

def test_streams_depend_only_on_key():
    a = stream(3, 5, "users").random(4)
    _ = stream(3, 4, "users").random(100)
    assert np.array_equal(a, stream(3, 5, "users").random(4))
    assert not np.array_equal(a, stream(3, 5, "los").random(4))
    assert not np.array_equal(stream(3, 5, "shadow_t0", 1).random(4), stream(3, 5, "shadow_t0", 2).random(4))


# --- runner ---------------------------------------------------------------

def test_run_is_deterministic():
    a = run_scenario(tiny(), write=False).per_user
    b = run_scenario(tiny(), write=False).per_user
    assert a.equals(b)


def test_probe_sees_firewalled_matrices():
    setup = build_setup(tiny(**{"impair.rp_error_enabled": True}))
    seen = []
    run_drop(setup, 0, probe=lambda kind, t, h: seen.append((kind, h.time_tag)))
    kinds = {k for k, _ in seen}
    assert kinds == {"h_t1", "mmse", "lb_mmse", "ss_mmse"}
    for kind, tag in seen:
        assert tag is (TimeTag.TRANSMISSION if kind == "h_t1" else TimeTag.ESTIMATION)


def test_eirp_sweep_raises_mean_snr():
    df = run_scenario(tiny(), write=False).per_user
    for (alg, norm), grp in df.groupby(["algorithm", "normalization"]):
        snr = grp.groupby("eirp_dbw_mhz")["snr_db"].apply(lambda s: np.mean(10 ** (s / 10)))
        assert list(snr.index) == [0.0, 4.0, 8.0, 12.0]
        assert np.all(np.diff(snr.to_numpy()) >= 0), (alg, norm)


def test_every_visible_user_reported_once_per_combination():
    res = run_scenario(tiny(), write=False)
    counts = res.per_user.groupby(["algorithm", "normalization", "eirp_dbw_mhz"]).size()
    assert counts.nunique() == 1
    per_drop = res.per_user.groupby(["algorithm", "normalization", "eirp_dbw_mhz", "drop"])["user_id"]
    assert per_drop.apply(lambda s: s.is_unique).all()
    s = res.summary
    assert ((s.outage_pct >= 0) & (s.outage_pct <= 100)).all()


def test_outputs_written(tmp_path):
    run_scenario(tiny(), tmp_path)
    assert {p.name for p in tmp_path.iterdir()} == {"summary.csv", "per_user.csv", "config.yaml", "seeds.json"}
    assert from_dict(yaml.safe_load((tmp_path / "config.yaml").read_text())).digest() \
        == tiny().digest()


# --- sweep ------------------------------------------------------------------

def test_empty_sweep(tmp_path):
    res = sweep([], tmp_path)
    assert res.table.empty and not res.computed


def test_full_grid_row_count(tmp_path):
    base = tiny(n_drops=1, **{"geom.user_count": 8, "power.normalization": ["spc", "mpc"]})
    grid = full_grid(base)
    assert len(grid) == 4
    res = sweep(grid, tmp_path)
    assert not res.failures
    assert len(res.table) == 4 * 4 * 2 * 2 * 2 == 128
    assert set(res.table.normalization) == {"sspc", "smpc"}


def test_cache_recomputes_only_changed(tmp_path):
    cfgs = [tiny(n_drops=1, scenario_id=f"s{i}", seed=i) for i in range(3)]
    first = sweep(cfgs, tmp_path)
    assert first.computed == ["s0", "s1", "s2"] and not first.cached
    cfgs[1] = cfgs[1].replace(seed=99)
    second = sweep(cfgs, tmp_path)
    assert second.computed == ["s1"] and second.cached == ["s0", "s2"]
    assert second.table[second.table.scenario_id == "s0"].reset_index(drop=True).equals(
        first.table[first.table.scenario_id == "s0"].reset_index(drop=True))


def test_sweep_reports_failures_and_continues(tmp_path):
    good = tiny(n_drops=1, scenario_id="good")
    bad = good.replace(scenario_id="bad", **{"channel.mode": "nlos",
                                            "channel.tables_file": str(tmp_path / "missing.yaml")})
    res = sweep([bad, good], tmp_path, cache=False)
    assert "bad" in res.failures and res.computed == ["good"]


# --- architecture calculators -----------------------------------------------

def test_aging_examples():
    assert aging_interval(LatencyBudget(), "OGC") == 0.0
    b = LatencyBudget(2, 2, 2, 1, 0.5, 0.2)
    assert aging_interval(b, "OGC") == pytest.approx(7.7)
    assert aging_interval(b, "OBC") == pytest.approx(3.2)
    assert aging_interval(LatencyBudget.illustrative_ogc(), "OGC") == pytest.approx(16.7)
    with pytest.raises(ValueError):
        LatencyBudget(tau_p_ms=-1)


@given(st.lists(st.floats(0, 1e3), min_size=6, max_size=6))
def test_obc_never_exceeds_ogc(terms):
    b = LatencyBudget(*terms)
    assert aging_interval(b, "OBC") <= aging_interval(b, "OGC") + 1e-9


def test_signalling_overhead():
    assert signalling_overhead(1024, "CSI") == 65536
    assert signalling_overhead(1, "CSI") == 64
    assert all(signalling_overhead(n, "Location") == 48 for n in (1, 64, 1024))
    with pytest.raises(ValueError):
        signalling_overhead(0)
