"""Monte Carlo orchestration: one scenario is a set of drops, each drop a set of slots."""

from __future__ import annotations

import json
import logging
import io
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .. import beamform, power
from ..antenna import (ElementPattern, LatticeRegion, TerminalParams, UpaConfig, array_beamwidth_uv,
                       beam_center_points, build_lattice, hex_count, load_antenna_params)
from ..channel import (LinkSetup, assemble_matrix, assign_los_state, draw_phase_misalignment,
                       load_loss_tables, sample_additional_loss, wavelength)
from ..geom import (DiscRegion, EarthModel, TerminalClass, TimeTag, compute_snapshot, drop_users,
                    ground_distance_for_uv_offset, make_swarm, propagate_swarm)
from ..impair import perturb_position
from ..metrics import GAMMA_MIN_DB, color_lattice, db, frequency_reuse_sinr, sinr_all, truncated_shannon
from ..sched import activate_beams, associate_users, build_schedule
from .config import ScenarioConfig, dump_config
from .rng import seed_log, stream

log = logging.getLogger(__name__)

KEY_COLUMNS = ["algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode"]
PER_USER_COLUMNS = ["scenario_id", "algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode",
                    "terminal", "drop", "slot", "user_id", "beam_id", "lat_deg", "lon_deg", "sinr_db",
                    "snr_db", "sir_db", "se_bps_hz", "served", "power_w", "bandwidth_hz"]
SUMMARY_COLUMNS = ["scenario_id", "algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode",
                   "terminal", "n_drops", "n_users", "n_served", "avg_se_bps_hz", "outage_pct",
                   "avg_capacity_mbps", "bandwidth_hz"]
FLOAT_FORMAT = "%.12g"


class RunError(RuntimeError):
    """Scenario aborted; the message carries the failing context."""


@dataclass
class Setup:
    """Drop-independent scenario state, shared read-only by every worker."""

    cfg: ScenarioConfig
    earth: EarthModel
    upa: UpaConfig
    link: LinkSetup
    swarm_t0: object
    swarm_t1: object
    lattices: list
    mask: object
    beam_points: np.ndarray
    region: object
    theta_3db: float
    n_beams_single: int
    budgets: dict  # eirp -> PowerBudget
    min_elevation_rad: float
    tables: object = None
    colors: dict = field(default_factory=dict)


def abutting_spacing_m(n_tiers: int, theta_3db: float, altitude_m: float, earth: EarthModel) -> float:
    """Along-track node spacing that makes neighbouring lattices touch on the ground."""
    ref = make_swarm(1, altitude_m, 0.0, earth).nodes[0]
    half_width = (n_tiers + 0.5) * theta_3db
    if half_width >= 1:
        raise ValueError("lattice too wide to place a second node")
    ground = 2 * ground_distance_for_uv_offset(ref, half_width, earth)
    return ground / earth.radius_m * (earth.radius_m + altitude_m)


def build_setup(cfg: ScenarioConfig) -> Setup:
    earth = EarthModel()
    params = load_antenna_params(cfg.antenna.params_file)
    upa = UpaConfig(cfg.antenna.n_rows, cfg.antenna.n_cols, cfg.antenna.spacing_wavelengths,
                    ElementPattern.from_params(params["element"]))
    terminal = TerminalParams.load(cfg.geom.terminal, cfg.antenna.params_file)
    link = LinkSetup(upa, terminal, wavelength(cfg.channel.frequency_hz), cfg.channel.bandwidth_hz)
    theta = (math.sin(math.radians(cfg.antenna.theta_3db_deg)) if cfg.antenna.theta_3db_deg
             else array_beamwidth_uv(upa))
    altitude = cfg.geom.altitude_km * 1e3
    if cfg.geom.node_spacing_km is not None:
        spacing = cfg.geom.node_spacing_km * 1e3
    elif cfg.geom.n_node > 1:
        spacing = abutting_spacing_m(cfg.antenna.n_tiers, theta, altitude, earth)
    else:
        spacing = 0.0
    swarm0 = make_swarm(cfg.geom.n_node, altitude, spacing, earth)
    swarm1 = propagate_swarm(swarm0, cfg.delta_t_ms * 1e-3)
    orient = math.radians(cfg.antenna.lattice_orientation_deg)
    lattices = [build_lattice(cfg.antenna.n_tiers, theta, node, orient) for node in swarm0.nodes]
    mask = activate_beams(lattices, swarm0, theta)
    points = beam_center_points(swarm0, lattices)
    if cfg.geom.area == "disc":
        region = DiscRegion(0.0, 0.0, cfg.geom.disc_radius_km * 1e3, earth)
    else:
        region = LatticeRegion(swarm0, lattices)
    if cfg.geom.n_node == 1:
        n_single = mask.n_active
    elif cfg.power.reference_active_beams is not None:
        n_single = cfg.power.reference_active_beams
    else:
        n_single = hex_count(cfg.power.reference_tiers if cfg.power.reference_tiers is not None
                             else cfg.antenna.n_tiers + 1)
    budgets = {}
    for eirp in cfg.power.eirp_dbw_per_mhz:
        p_t = power.eirp_to_power_w(eirp, cfg.channel.bandwidth_hz)
        p_node = p_t if cfg.geom.n_node == 1 else power.scale_node_power(p_t, n_single, mask.n_active,
                                                                          cfg.geom.n_node)
        budgets[float(eirp)] = power.PowerBudget(p_node, cfg.geom.n_node)
    colors = {b: color_lattice(lattices[0], int(b[2:])) for b in cfg.baselines}
    tables = load_loss_tables(cfg.channel.tables_file) if cfg.channel.mode == "nlos" else None
    return Setup(cfg, earth, upa, link, swarm0, swarm1, lattices, mask, points, region, theta, n_single,
                 budgets, math.radians(cfg.geom.min_elevation_deg), tables, colors)


def _alpha(setup: Setup, k: int, budget: power.PowerBudget) -> np.ndarray:
    cfg = setup.cfg.beamform
    if cfg.alpha_override is not None:
        return np.full(k, cfg.alpha_override)
    p = budget.p_t_node_w if cfg.alpha_power == "node" else budget.p_t_total_w
    return beamform.default_alpha(k, setup.upa.n_f, p)


def run_drop(setup: Setup, drop: int, probe=None) -> dict:
    """Simulate one drop; returns column arrays of per-user records.

    ``probe(kind, slot, obj)``, when given, observes intermediate channel
    matrices (used by tests to audit the estimation/transmission split).
    """
    cfg = setup.cfg
    seed = cfg.seed
    terminal = TerminalClass(cfg.geom.terminal)
    users = drop_users(setup.region, cfg.geom.user_density_per_km2, stream(seed, drop, "users"), terminal,
                       setup.link.terminal.noise_temperature_k, cfg.geom.count_rule, cfg.geom.user_count,
                       setup.earth)
    ecef = users.ecef(setup.earth)
    snap0 = compute_snapshot(setup.swarm_t0, ecef, TimeTag.ESTIMATION, setup.min_elevation_rad)
    keep = snap0.visible
    users = users.subset(keep)
    ecef = ecef[keep]
    elev0 = np.degrees(snap0.elevation_rad[keep])
    snap1 = compute_snapshot(setup.swarm_t1, ecef, TimeTag.TRANSMISSION, 0.0)
    elev1 = np.degrees(snap1.elevation_rad)
    users.los_state = assign_los_state(elev0.max(axis=1), cfg.channel.mode, cfg.channel.environment,
                                       setup.tables, stream(seed, drop, "los"))
    if cfg.impair.position_error_enabled:
        rep_lat, rep_lon = perturb_position(users.lat, users.lon, cfg.impair.position_error_max_m,
                                            stream(seed, drop, "position"), setup.earth)
    else:
        rep_lat, rep_lon = users.lat, users.lon
    reported = users.with_positions(rep_lat, rep_lon).ecef(setup.earth)

    association = associate_users(ecef, setup.lattices, setup.mask, setup.swarm_t0, setup.min_elevation_rad)
    schedule = build_schedule(association, np.arange(len(users)), stream(seed, drop, "schedule"))
    eps = cfg.impair.epsilon_rp if cfg.impair.rp_error_enabled else 0.0
    n_node = cfg.geom.n_node
    algos = cfg.beamform.algorithm
    out = {c: [] for c in PER_USER_COLUMNS}

    def emit(algorithm, normalization, eirp, slot, idx, beams, gamma, snr, sir, pw, bandwidth):
        n = len(idx)
        se = np.atleast_1d(truncated_shannon(gamma))
        served = gamma >= 10 ** (GAMMA_MIN_DB / 10)
        with np.errstate(divide="ignore"):
            cols = {
                "scenario_id": [cfg.scenario_id] * n, "algorithm": [algorithm] * n,
                "normalization": [normalization] * n, "eirp_dbw_mhz": [float(eirp)] * n,
                "n_node": [n_node] * n, "channel_mode": [cfg.channel.mode] * n,
                "terminal": [cfg.geom.terminal] * n, "drop": [drop] * n, "slot": [slot] * n,
                "user_id": users.user_id[idx], "beam_id": beams,
                "lat_deg": np.degrees(users.lat[idx]), "lon_deg": np.degrees(users.lon[idx]),
                "sinr_db": db(gamma), "snr_db": db(snr), "sir_db": db(sir), "se_bps_hz": se,
                "served": served, "power_w": pw, "bandwidth_hz": [bandwidth] * n,
            }
        for k, v in cols.items():
            out[k].append(np.asarray(v))

    for sched in schedule:
        t = sched.slot_index
        idx = sched.served_user_ids
        beams = sched.beam_ids
        k = len(idx)
        loss0 = sample_additional_loss(elev0[idx], users.los_state[idx], cfg.channel.mode,
                                       cfg.channel.environment, setup.tables, stream(seed, drop, "shadow_t0", t))
        loss1 = sample_additional_loss(elev1[idx], users.los_state[idx], cfg.channel.mode,
                                       cfg.channel.environment, setup.tables, stream(seed, drop, "shadow_t1", t))
        var, par = cfg.channel.phase_misalignment_variance, cfg.channel.phase_misalignment_parameter
        phase0 = draw_phase_misalignment(k, n_node, var, stream(seed, drop, "phase_t0", t), par)
        phase1 = draw_phase_misalignment(k, n_node, var, stream(seed, drop, "phase_t1", t), par)
        h1 = assemble_matrix(ecef[idx], users.user_id[idx], setup.swarm_t1, setup.link, TimeTag.TRANSMISSION,
                             loss1, phase1)
        estimates = {}
        if "mmse" in algos:
            h0 = assemble_matrix(ecef[idx], users.user_id[idx], setup.swarm_t0, setup.link, TimeTag.ESTIMATION,
                                 loss0, phase0)
            estimates["mmse"] = beamform.csi_dropout(h0, cfg.beamform.csi_dropout_threshold_db)
        if "lb_mmse" in algos:
            estimates["lb_mmse"] = beamform.reconstruct_channel(
                reported[idx], users.user_id[idx], setup.swarm_t0, setup.link, eps,
                stream(seed, drop, "rp_lb", t), cfg.impair.rp_amplitude_mode)
        if "ss_mmse" in algos:
            estimates["ss_mmse"] = beamform.reconstruct_channel(
                setup.beam_points[beams], users.user_id[idx], setup.swarm_t0, setup.link, eps,
                stream(seed, drop, "rp_ss", t), cfg.impair.rp_amplitude_mode)
        mb = None
        if "mb" in algos or cfg.baselines:
            mb = beamform.mb_weights(setup.beam_points, beams, setup.swarm_t0, setup.upa, setup.lattices)
        if probe is not None:
            probe("h_t1", t, h1)
            for name, h in estimates.items():
                probe(name, t, h)
        for eirp, budget in setup.budgets.items():
            alpha = _alpha(setup, k, budget)
            for algorithm in algos:
                if algorithm == "mb":
                    w = mb
                else:
                    w = beamform.mmse_weights(estimates[algorithm], alpha)
                for scheme in cfg.power.normalization:
                    wn = w.normalize(budget, scheme)
                    gamma, snr, sir = sinr_all(h1, wn)
                    if not np.all(np.isfinite(gamma)):
                        raise RunError(f"non-finite SINR (drop {drop}, slot {t}, {algorithm}/{scheme})")
                    emit(algorithm, scheme, eirp, t, idx, beams, gamma, snr, sir, wn.column_power(),
                         cfg.channel.bandwidth_hz)
            for scheme in cfg.baselines:
                n_col = int(scheme[2:])
                colors = setup.colors[scheme][beams]
                gamma, snr, sir = frequency_reuse_sinr(h1, mb, colors, budget.p_t_total_w,
                                                       setup.lattices[0].n_beams, n_col)
                pw = np.full(k, budget.p_t_total_w / setup.lattices[0].n_beams)
                emit(scheme, "per_beam", eirp, t, idx, beams, gamma, snr, sir, pw,
                     cfg.channel.bandwidth_hz / n_col)
    return {c: np.concatenate(v) if v else np.array([]) for c, v in out.items()}


def _drop_worker(args):
    setup, drop = args
    return run_drop(setup, drop)


def summarize(per_user: pd.DataFrame, n_drops: int) -> pd.DataFrame:
    if per_user.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    keys = ["scenario_id", "algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode", "terminal"]
    rows = []
    for key, grp in per_user.groupby(keys, sort=False):
        served = grp["served"].to_numpy(bool)
        se = grp["se_bps_hz"].to_numpy()
        bw = float(grp["bandwidth_hz"].iloc[0])
        avg = float(se[served].mean()) if served.any() else math.nan
        rows.append(dict(zip(keys, key), n_drops=n_drops, n_users=len(grp), n_served=int(served.sum()),
                         avg_se_bps_hz=avg, outage_pct=100.0 * float((~served).sum()) / len(grp),
                         avg_capacity_mbps=avg * bw / 1e6, bandwidth_hz=bw))
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


@dataclass
class RunResult:
    config: ScenarioConfig
    per_user: pd.DataFrame
    summary: pd.DataFrame
    setup: Setup | None = None
    output_dir: Path | None = None

    def per_drop_mean_se(self, algorithm: str, normalization: str, eirp: float) -> pd.Series:
        """Served-only mean spectral efficiency of every drop for one combination."""
        df = self.per_user
        sel = df[(df.algorithm == algorithm) & (df.normalization == normalization)
                 & (df.eirp_dbw_mhz == float(eirp)) & df.served]
        return sel.groupby("drop")["se_bps_hz"].mean()


def run_scenario(cfg: ScenarioConfig, output_dir: str | os.PathLike | None = None, jobs: int | None = None,
                 write: bool = True) -> RunResult:
    """Run every drop of ``cfg`` and (optionally) persist CSVs, config echo and seed log."""
    jobs = cfg.jobs if jobs is None else jobs
    try:
        setup = build_setup(cfg)
    except (ValueError, KeyError, OSError) as exc:
        raise RunError(f"scenario {cfg.scenario_id}: setup failed: {exc}") from exc
    drops = range(cfg.n_drops)
    try:
        if jobs > 1 and cfg.n_drops > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                parts = list(pool.map(_drop_worker, [(setup, d) for d in drops]))
        else:
            parts = [run_drop(setup, d) for d in drops]
    except RunError:
        raise
    except Exception as exc:
        log.debug(traceback.format_exc())
        raise RunError(f"scenario {cfg.scenario_id}: {type(exc).__name__}: {exc}") from exc
    frames = [pd.DataFrame(p) for p in parts if len(p["user_id"])]
    per_user = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=PER_USER_COLUMNS)
    per_user = per_user.sort_values(["algorithm", "normalization", "eirp_dbw_mhz", "drop", "slot", "user_id"],
                                    kind="stable", ignore_index=True)
    summary = summarize(per_user, cfg.n_drops)
    result = RunResult(cfg, per_user, summary, setup)
    if write:
        out = Path(output_dir if output_dir is not None else cfg.output_dir)
        write_outputs(result, out)
        result.output_dir = out
    return result


def write_outputs(result: RunResult, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    result.summary.to_csv(out / "summary.csv", index=False, float_format=FLOAT_FORMAT)
    if cfg.per_user_csv:
        result.per_user.to_csv(out / "per_user.csv", index=False, float_format=FLOAT_FORMAT)
    (out / "config.yaml").write_text(dump_config(cfg))
    log_ = seed_log(cfg.seed, cfg.n_drops)
    if result.setup is not None:
        log_["active_beams"] = int(result.setup.mask.n_active)
        log_["theta_3db_uv"] = float(result.setup.theta_3db)
        log_["node_spacing_m"] = float(result.setup.swarm_t0.inter_node_spacing_m)
    (out / "seeds.json").write_text(json.dumps(log_, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    table: pd.DataFrame
    computed: list = field(default_factory=list)
    cached: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)


def _sweep_worker(args):
    cfg, out = args
    try:
        res = run_scenario(cfg, out, jobs=1, write=True)
        return cfg.scenario_id, res.summary, None
    except Exception as exc:
        return cfg.scenario_id, None, f"{type(exc).__name__}: {exc}"


def sweep(configs: list, output_dir: str | os.PathLike = "results", jobs: int = 1,
          cache: bool = True) -> SweepResult:
    """Run several scenarios and merge their summaries into one long table.

    With ``cache`` enabled a scenario whose config digest already has a
    summary under ``output_dir/cache`` is not recomputed. Failures are
    recorded per scenario and the sweep carries on.
    """
    result = SweepResult(pd.DataFrame(columns=SUMMARY_COLUMNS))
    if not configs:
        return result
    root = Path(output_dir)
    cache_dir = root / "cache"
    todo, frames = [], {}
    for cfg in configs:
        cached = cache_dir / f"{cfg.digest()}.csv"
        if cache and cached.exists():
            frames[cfg.scenario_id] = pd.read_csv(cached)
            result.cached.append(cfg.scenario_id)
        else:
            todo.append((cfg, root / cfg.scenario_id))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_sweep_worker, todo))
    else:
        outcomes = [_sweep_worker(t) for t in todo]
    for (cfg, _), (sid, summary, err) in zip(todo, outcomes):
        if err is not None:
            result.failures[sid] = err
            log.error("scenario %s failed: %s", sid, err)
            continue
        result.computed.append(sid)
        # same text round trip as a cache hit, so cached and fresh tables agree exactly
        text = summary.to_csv(index=False, float_format=FLOAT_FORMAT)
        frames[sid] = pd.read_csv(io.StringIO(text))
        if cache:
            cache_dir.mkdir(parents=True, exist_ok=True)
            (cache_dir / f"{cfg.digest()}.csv").write_text(text)
    ordered = [frames[c.scenario_id] for c in configs if c.scenario_id in frames]
    if ordered:
        result.table = pd.concat(ordered, ignore_index=True)
    root.mkdir(parents=True, exist_ok=True)
    result.table.to_csv(root / "sweep_summary.csv", index=False, float_format=FLOAT_FORMAT)
    return result


def full_grid(base: ScenarioConfig) -> list[ScenarioConfig]:
    """Node-count x channel grid; the two-node case uses one tier fewer per node."""
    out = []
    for n_node in (1, 2):
        for mode in ("clear_sky", "nlos"):
            tiers = base.antenna.n_tiers if n_node == 1 else max(base.antenna.n_tiers - 1, 0)
            norms = ["sspc", "smpc"] if set(base.power.normalization) <= {"spc", "mpc", "sspc", "smpc"} \
                else base.power.normalization
            out.append(base.replace(**{
                "scenario_id": f"{base.scenario_id}-n{n_node}-{mode}",
                "geom.n_node": n_node, "channel.mode": mode, "antenna.n_tiers": tiers,
                "power.normalization": norms, "power.reference_tiers": base.antenna.n_tiers,
                "baselines": base.baselines if n_node == 1 else [],
            }))
    return out
