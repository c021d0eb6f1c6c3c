"""Noise-normalised channel coefficients, additional losses and channel matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml

from .antenna import (TerminalParams, UpaConfig, array_response, db2lin, pointing_off_axis,
                      receiver_gain)
from .geom import LosState, Swarm, TimeTag, link_geometry

BOLTZMANN = 1.380649e-23
SPEED_OF_LIGHT = 299792458.0

CLEAR_SKY = "clear_sky"
NLOS = "nlos"
CHANNEL_MODES = (CLEAR_SKY, NLOS)


def wavelength(frequency_hz: float) -> float:
    return SPEED_OF_LIGHT / frequency_hz


def noise_power(bandwidth_hz: float, temperature_k: float) -> float:
    return BOLTZMANN * bandwidth_hz * temperature_k


@dataclass(frozen=True)
class LossTables:
    elevation_bins_deg: np.ndarray
    environments: dict
    atmospheric_db: np.ndarray
    scintillation_db: np.ndarray

    @classmethod
    def from_dict(cls, raw: dict) -> "LossTables":
        bins = np.asarray(raw["elevation_bins_deg"], dtype=float)
        envs = {}
        for name, tab in raw["environments"].items():
            entry = {k: np.asarray(v, dtype=float) for k, v in tab.items()}
            for k, v in entry.items():
                if v.shape != bins.shape:
                    raise ValueError(f"table {name}.{k} does not match the elevation bins")
                if np.any(v < 0):
                    raise ValueError(f"table {name}.{k} has negative entries")
            if np.any(entry["los_probability"] > 1):
                raise ValueError(f"table {name}.los_probability exceeds 1")
            envs[name] = entry
        return cls(bins, envs, np.asarray(raw["atmospheric_db"], float),
                   np.asarray(raw["scintillation_db"], float))

    def bin_index(self, elevation_deg) -> np.ndarray:
        el = np.asarray(elevation_deg, dtype=float)
        lo, hi = self.elevation_bins_deg[0], self.elevation_bins_deg[-1]
        if np.any(el < lo - 1e-9) or np.any(el > hi + 1e-9):
            raise ValueError("elevation out of table domain")
        step = self.elevation_bins_deg[1] - self.elevation_bins_deg[0]
        idx = np.floor((el - lo) / step + 0.5).astype(int)
        return np.clip(idx, 0, len(self.elevation_bins_deg) - 1)

    def lookup(self, environment: str, column: str, elevation_deg) -> np.ndarray:
        if environment not in self.environments:
            raise KeyError(f"no loss table for environment {environment!r}")
        table = self.environments[environment]
        if column not in table:
            raise KeyError(f"missing table entry {environment}.{column}")
        return table[column][self.bin_index(elevation_deg)]


@lru_cache(maxsize=None)
def load_loss_tables(path: str | None = None) -> LossTables:
    if path is None:
        text = resources.files("cfswarm").joinpath("data/tr38811_sband.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return LossTables.from_dict(yaml.safe_load(text))


def assign_los_state(elevation_deg, mode: str, environment: str, tables: LossTables,
                     rng: np.random.Generator) -> np.ndarray:
    """Bernoulli LOS/NLOS draw per user from the elevation-binned table."""
    elevation_deg = np.asarray(elevation_deg, dtype=float)
    if mode == CLEAR_SKY:
        return np.full(elevation_deg.shape, LosState.LOS, dtype=int)
    p = tables.lookup(environment, "los_probability", elevation_deg)
    draw = rng.random(elevation_deg.shape)
    return np.where(draw < p, LosState.LOS, LosState.NLOS).astype(int)


def sample_additional_loss(elevation_deg, los_state, mode: str, environment: str,
                           tables: LossTables, rng: np.random.Generator) -> np.ndarray:
    """Linear additional loss per (user, node): shadowing x atmospheric x scintillation x clutter.

    ``elevation_deg`` has shape (n_user, n_node); ``los_state`` has shape (n_user,).
    """
    elevation_deg = np.asarray(elevation_deg, dtype=float)
    if mode == CLEAR_SKY:
        return np.ones(elevation_deg.shape)
    los = (np.asarray(los_state) == LosState.LOS)[:, None]
    sigma = np.where(los,
                     tables.lookup(environment, "shadowing_sigma_los_db", elevation_deg),
                     tables.lookup(environment, "shadowing_sigma_nlos_db", elevation_deg))
    clutter = np.where(los, 0.0, tables.lookup(environment, "clutter_loss_db", elevation_deg))
    idx = tables.bin_index(elevation_deg)
    fixed = tables.atmospheric_db[idx] + tables.scintillation_db[idx]
    shadow = sigma * rng.standard_normal(elevation_deg.shape)
    return db2lin(shadow + clutter + fixed)


@dataclass(frozen=True)
class ChannelCoefficientTerms:
    slant_range_m: float
    tx_gain: complex
    rx_gain: complex
    additional_loss_linear: float
    noise_power_w: float
    phase_misalignment_rad: float = 0.0


def channel_coefficient(terms: ChannelCoefficientTerms, wavelength_m: float):
    """Complex channel coefficient normalised to the receiver noise power."""
    d = np.asarray(terms.slant_range_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("degenerate slant range")
    amp = (np.asarray(terms.tx_gain) * np.asarray(terms.rx_gain)
           / (4 * np.pi * d / wavelength_m * np.sqrt(terms.additional_loss_linear * terms.noise_power_w)))
    return amp * np.exp(-2j * np.pi * d / wavelength_m) * np.exp(-1j * np.asarray(terms.phase_misalignment_rad))


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray  # (K, n_node * N_F)
    time_tag: TimeTag
    user_ids: np.ndarray
    n_node: int
    n_f: int

    def __post_init__(self):
        if self.entries.shape[1] != self.n_node * self.n_f:
            raise ValueError("column count does not match the node layout")

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def node_block(self, s: int) -> np.ndarray:
        return self.entries[:, s * self.n_f:(s + 1) * self.n_f]


@dataclass(frozen=True)
class LinkSetup:
    """Static quantities shared by every coefficient evaluation of a scenario."""

    upa: UpaConfig
    terminal: TerminalParams
    wavelength_m: float
    bandwidth_hz: float

    @property
    def noise_power_w(self) -> float:
        return noise_power(self.bandwidth_hz, self.terminal.noise_temperature_k)


def coefficient_rows(points_ecef: np.ndarray, swarm: Swarm, link: LinkSetup,
                     additional_loss: np.ndarray | None = None,
                     phase_misalignment: np.ndarray | None = None,
                     tx_gain_hook=None) -> np.ndarray:
    """Rows of noise-normalised coefficients for ground points seen by every node.

    ``additional_loss`` and ``phase_misalignment`` are (n_points, n_node) and
    default to 1 and 0. ``tx_gain_hook(block, node_index)`` may replace the
    per-element transmit gains (used to inject pattern-model errors).
    """
    g = link_geometry(points_ecef, swarm)
    n = g.slant_range_m.shape[0]
    n_f = link.upa.n_f
    off_axis = pointing_off_axis(g.los_unit, g.elevation_rad)
    rx = receiver_gain(link.terminal, off_axis, link.wavelength_m)
    if additional_loss is None:
        additional_loss = np.ones((n, swarm.n_node))
    if phase_misalignment is None:
        phase_misalignment = np.zeros((n, swarm.n_node))
    rows = np.empty((n, swarm.n_node * n_f), dtype=complex)
    for s in range(swarm.n_node):
        tx = array_response(link.upa, g.uv[:, s, 0], g.uv[:, s, 1])
        if tx_gain_hook is not None:
            tx = tx_gain_hook(tx, s)
        terms = ChannelCoefficientTerms(g.slant_range_m[:, s, None], tx, rx[:, s, None],
                                        additional_loss[:, s, None], link.noise_power_w,
                                        phase_misalignment[:, s, None])
        rows[:, s * n_f:(s + 1) * n_f] = channel_coefficient(terms, link.wavelength_m)
    return rows


def draw_phase_misalignment(n_user: int, n_node: int, variance: float, rng: np.random.Generator,
                            parameter: str = "variance") -> np.ndarray:
    """Per (user, node) synchronisation phase error; zero for a single node or zero spread."""
    if n_node == 1 or variance == 0:
        return np.zeros((n_user, n_node))
    sigma = math.sqrt(variance) if parameter == "variance" else variance
    return sigma * rng.standard_normal((n_user, n_node))


def assemble_matrix(users_ecef: np.ndarray, user_ids, swarm: Swarm, link: LinkSetup,
                    time_tag: TimeTag, additional_loss: np.ndarray | None = None,
                    phase_misalignment: np.ndarray | None = None) -> ChannelMatrix:
    """K x (n_node N_F) channel matrix for the scheduled users at one time instant."""
    users_ecef = np.atleast_2d(users_ecef)
    if users_ecef.shape[0] == 0:
        raise ValueError("no scheduled users")
    rows = coefficient_rows(users_ecef, swarm, link, additional_loss, phase_misalignment)
    if not np.all(np.isfinite(rows)):
        raise FloatingPointError("non-finite channel coefficient")
    return ChannelMatrix(rows, time_tag, np.asarray(user_ids), swarm.n_node, link.upa.n_f)
