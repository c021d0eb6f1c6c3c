"""Declarative scenario configuration with strict key validation."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
import types
import typing
from dataclasses import asdict, dataclass, field, fields

import yaml

ENV_PREFIX = "CFSWARM_"


class ConfigError(ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class GeomConfig:
    altitude_km: float = 600.0
    n_node: int = 1
    node_spacing_km: float | None = None  # None: lattices abut along-track
    min_elevation_deg: float = 10.0
    user_density_per_km2: float = 0.5
    user_count: int | None = None
    count_rule: str = "fixed"
    area: str = "lattice"
    disc_radius_km: float = 100.0
    terminal: str = "vsat"


@dataclass
class AntennaConfig:
    n_rows: int = 32
    n_cols: int = 32
    spacing_wavelengths: float = 0.55
    n_tiers: int = 5
    theta_3db_deg: float | None = None  # None: derived from the array factor
    lattice_orientation_deg: float = 0.0
    params_file: str | None = None


@dataclass
class ChannelConfig:
    mode: str = "clear_sky"
    environment: str = "dense_urban"
    frequency_hz: float = 2.0e9
    bandwidth_hz: float = 30.0e6
    phase_misalignment_variance: float = 0.0
    phase_misalignment_parameter: str = "variance"
    tables_file: str | None = None


@dataclass
class BeamformConfig:
    algorithm: list = field(default_factory=lambda: ["mmse", "lb_mmse", "ss_mmse", "mb"])
    alpha_override: float | None = None
    alpha_power: str = "node"
    csi_dropout_threshold_db: float | None = None


@dataclass
class PowerConfig:
    normalization: list = field(default_factory=lambda: ["spc", "mpc"])
    eirp_dbw_per_mhz: list = field(default_factory=lambda: [0.0, 4.0, 8.0, 12.0])
    reference_active_beams: int | None = None
    reference_tiers: int | None = None


@dataclass
class SchedConfig:
    kind: str = "random"
    tiebreak: str = "lowest_id"


@dataclass
class ImpairConfig:
    position_error_enabled: bool = False
    position_error_max_m: float = 10.0
    rp_error_enabled: bool = False
    epsilon_rp: float = 0.05
    rp_amplitude_mode: str = "signed"


@dataclass
class ScenarioConfig:
    scenario_id: str = "scenario"
    seed: int = 0
    n_drops: int = 1
    delta_t_ms: float = 16.7
    output_dir: str = "results"
    jobs: int = 1
    per_user_csv: bool = True
    baselines: list = field(default_factory=list)
    geom: GeomConfig = field(default_factory=GeomConfig)
    antenna: AntennaConfig = field(default_factory=AntennaConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    beamform: BeamformConfig = field(default_factory=BeamformConfig)
    power: PowerConfig = field(default_factory=PowerConfig)
    sched: SchedConfig = field(default_factory=SchedConfig)
    impair: ImpairConfig = field(default_factory=ImpairConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects results (not output location or parallelism)."""
        d = self.to_dict()
        for k in ("output_dir", "jobs", "per_user_csv"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **dotted) -> "ScenarioConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"geom.n_node": 2})``."""
        d = self.to_dict()
        for key, value in dotted.items():
            _set_dotted(d, key, value)
        return from_dict(d)


_CHOICES = {
    "geom.count_rule": ("fixed", "poisson"),
    "geom.area": ("lattice", "disc"),
    "geom.terminal": ("vsat", "handheld"),
    "channel.mode": ("clear_sky", "nlos"),
    "channel.phase_misalignment_parameter": ("variance", "std"),
    "beamform.alpha_power": ("node", "total"),
    "sched.kind": ("random",),
    "sched.tiebreak": ("lowest_id",),
    "impair.rp_amplitude_mode": ("signed", "folded"),
}
_LIST_CHOICES = {
    "beamform.algorithm": ("mmse", "lb_mmse", "ss_mmse", "mb"),
    "power.normalization": ("spc", "mpc", "pac", "sspc", "smpc"),
    "baselines": ("fr3", "fr4"),
}


def _set_dotted(d: dict, key: str, value):
    parts = key.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(key, "unknown section")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(key, "unknown key")
    node[parts[-1]] = value


def _coerce(key: str, tp, value):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(key, args[0], value)
    if tp is list or origin is list:
        if not isinstance(value, (list, tuple)):
            value = [value]
        return list(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, raw: dict, prefix: str = ""):
    if not isinstance(raw, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(prefix + str(key), "unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        tp = hints[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, raw[f.name] or {}, key + ".")
        else:
            kwargs[f.name] = _coerce(key, tp, raw[f.name])
    return cls(**kwargs)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    d = cfg.to_dict()

    def get(key):
        node = d
        for p in key.split("."):
            node = node[p]
        return node

    for key, options in _CHOICES.items():
        if get(key) not in options:
            raise ConfigError(key, f"must be one of {options}, got {get(key)!r}")
    for key, options in _LIST_CHOICES.items():
        for item in get(key):
            if item not in options:
                raise ConfigError(key, f"entries must be among {options}, got {item!r}")
    positive = ["geom.altitude_km", "channel.frequency_hz", "channel.bandwidth_hz", "antenna.spacing_wavelengths",
                "antenna.n_rows", "antenna.n_cols", "n_drops", "geom.n_node", "jobs", "geom.disc_radius_km"]
    for key in positive:
        if not get(key) > 0:
            raise ConfigError(key, "must be positive")
    nonneg = ["delta_t_ms", "antenna.n_tiers", "geom.min_elevation_deg", "impair.position_error_max_m",
              "channel.phase_misalignment_variance"]
    for key in nonneg:
        if get(key) < 0:
            raise ConfigError(key, "must be non-negative")
    if cfg.geom.user_count is None and not cfg.geom.user_density_per_km2 > 0:
        raise ConfigError("geom.user_density_per_km2", "must be positive")
    if cfg.geom.user_count is not None and cfg.geom.user_count < 0:
        raise ConfigError("geom.user_count", "must be non-negative")
    if not 0 <= cfg.impair.epsilon_rp < 1:
        raise ConfigError("impair.epsilon_rp", "must lie in [0, 1)")
    if cfg.geom.node_spacing_km is not None and cfg.geom.node_spacing_km < 0:
        raise ConfigError("geom.node_spacing_km", "must be non-negative")
    if cfg.antenna.theta_3db_deg is not None and not cfg.antenna.theta_3db_deg > 0:
        raise ConfigError("antenna.theta_3db_deg", "must be positive")
    if cfg.beamform.alpha_override is not None and not cfg.beamform.alpha_override > 0:
        raise ConfigError("beamform.alpha_override", "must be positive")
    if not cfg.beamform.algorithm and not cfg.baselines:
        raise ConfigError("beamform.algorithm", "nothing to simulate")
    if cfg.beamform.algorithm and not cfg.power.normalization:
        raise ConfigError("power.normalization", "at least one normalisation required")
    if not cfg.power.eirp_dbw_per_mhz:
        raise ConfigError("power.eirp_dbw_per_mhz", "at least one EIRP value required")
    for v in cfg.power.eirp_dbw_per_mhz:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("power.eirp_dbw_per_mhz", f"expected numbers, got {v!r}")
    if cfg.baselines and cfg.geom.n_node != 1:
        raise ConfigError("baselines", "frequency-reuse baselines need a single node")
    return cfg


def from_dict(raw: dict) -> ScenarioConfig:
    return validate(_build(ScenarioConfig, copy.deepcopy(raw)))


def env_overrides(environ=None) -> dict:
    """Collect ``CFSWARM_SECTION__KEY=value`` variables as dotted keys."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = yaml.safe_load(value)
    return out


def load_config(path: str | None = None, preset: str | None = None, overrides: dict | None = None,
                environ=None) -> ScenarioConfig:
    """Preset, then file, then environment, then explicit dotted overrides."""
    raw = copy.deepcopy(PRESETS[preset]) if preset else {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("<root>", "config file must hold a mapping")
        _deep_merge(raw, loaded)
    d = _build(ScenarioConfig, raw).to_dict()
    for key, value in {**env_overrides(environ), **(overrides or {})}.items():
        _set_dotted(d, key, value)
    return from_dict(d)


def _deep_merge(dst: dict, src: dict):
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _deep_merge(dst[k], v)
        else:
            dst[k] = v


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# 8x8 panel, two tiers (19 beams), ~200 users, 100 drops
DESK = {
    "scenario_id": "desk",
    "seed": 2024,
    "n_drops": 100,
    "geom": {"user_density_per_km2": 6.2e-4},
    "antenna": {"n_rows": 8, "n_cols": 8, "n_tiers": 2},
}

FULL = {
    "scenario_id": "full",
    "seed": 2024,
    "n_drops": 1,
    "power": {"normalization": ["sspc", "smpc"]},
}

PRESETS = {"desk": DESK, "full": FULL}
