"""SINR, truncated-Shannon spectral efficiency, aggregation and frequency-reuse baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .antenna import BeamLattice
from .channel import ChannelMatrix
from .geom import TimeTag

GAMMA_MIN_DB = -10.0
GAMMA_MAX_DB = 30.0


def _check_transmission(h: ChannelMatrix):
    if h.time_tag is not TimeTag.TRANSMISSION:
        raise ValueError("SINR must be evaluated on the transmission-time channel")


def sinr_all(h_t1, w_t0):
    """Vectorised SINR, SNR and SIR for every user of a slot (unit noise)."""
    h = h_t1.entries if isinstance(h_t1, ChannelMatrix) else np.asarray(h_t1)
    w = getattr(w_t0, "entries", w_t0)
    if isinstance(h_t1, ChannelMatrix):
        _check_transmission(h_t1)
    g = np.abs(h @ w) ** 2
    signal = np.diag(g).copy()
    interference = g.sum(axis=1) - signal
    interference = np.clip(interference, 0.0, None)
    with np.errstate(divide="ignore"):
        sir = np.where(interference > 0, signal / np.where(interference > 0, interference, 1.0), np.inf)
    return signal / (1.0 + interference), signal, sir


def sinr(h_t1, w_t0, user_index: int):
    """(sinr, snr, sir) for one scheduled user."""
    h = h_t1.entries if isinstance(h_t1, ChannelMatrix) else np.asarray(h_t1)
    if not 0 <= user_index < h.shape[0]:
        raise IndexError(f"user index {user_index} out of range")
    gamma, snr, sir = sinr_all(h_t1, w_t0)
    return float(gamma[user_index]), float(snr[user_index]), float(sir[user_index])


def db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def truncated_shannon(gamma_linear, gamma_min_db: float = GAMMA_MIN_DB,
                      gamma_max_db: float = GAMMA_MAX_DB, epsilon: float = 1.0):
    """Spectral efficiency in bit/s/Hz: zero below gamma_min, capped at gamma_max."""
    gamma = np.asarray(gamma_linear, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SINR must be non-negative")
    g_min = 10 ** (gamma_min_db / 10)
    g_max = 10 ** (gamma_max_db / 10)
    se = epsilon * np.log2(1.0 + np.minimum(gamma, g_max))
    out = np.where(gamma < g_min, 0.0, se)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UserSlotResult:
    user_id: int
    slot: int
    sinr_linear: float
    snr_linear: float
    sir_linear: float
    spectral_efficiency_bps_hz: float
    served: bool


def user_results(user_ids, slot: int, gamma, snr, sir, gamma_min_db: float = GAMMA_MIN_DB,
                 gamma_max_db: float = GAMMA_MAX_DB, epsilon: float = 1.0) -> list[UserSlotResult]:
    se = np.atleast_1d(truncated_shannon(gamma, gamma_min_db, gamma_max_db, epsilon))
    served = np.asarray(gamma) >= 10 ** (gamma_min_db / 10)
    return [UserSlotResult(int(u), slot, float(g), float(n), float(r), float(e), bool(ok))
            for u, g, n, r, e, ok in zip(user_ids, gamma, snr, sir, se, served)]


@dataclass
class MetricsReport:
    avg_se_served_bps_hz: float  # nan when nobody is served
    outage_pct: float
    avg_capacity_mbps: float
    n_users: int
    records: list = field(default_factory=list)
    config: dict = field(default_factory=dict)


def aggregate(results: list[UserSlotResult], bandwidth_hz: float, config: dict | None = None) -> MetricsReport:
    """Served-only average SE, outage percentage and per-user capacity."""
    if not results:
        raise ValueError("no results to aggregate")
    served = np.array([r.served for r in results])
    se = np.array([r.spectral_efficiency_bps_hz for r in results])
    outage = 100.0 * float(np.sum(~served)) / len(results)
    avg = float(se[served].mean()) if served.any() else math.nan
    return MetricsReport(avg, outage, avg * bandwidth_hz / 1e6, len(results), list(results), dict(config or {}))


# ---------------------------------------------------------------------------
# frequency reuse


def color_lattice(lattice: BeamLattice, n_colors: int) -> np.ndarray:
    """Colour a hexagonal lattice so that adjacent beams never share a colour."""
    q, r = lattice.axial[:, 0], lattice.axial[:, 1]
    if n_colors == 3:
        colors = np.mod(q - r, 3)
    elif n_colors == 4:
        colors = np.mod(q, 2) + 2 * np.mod(r, 2)
    else:
        raise ValueError("only 3- and 4-colour reuse is supported")
    for a, b in lattice.neighbour_pairs():
        if colors[a] == colors[b]:
            raise ValueError("colouring infeasible for this lattice")
    return colors


def frequency_reuse_sinr(h_t1, w_mb, beam_colors, p_t: float, n_beams_total: int, n_colors: int):
    """SINR with per-beam power ``p_t / n_beams_total`` on a ``1/n_colors`` sub-band.

    Only co-colour beams interfere; noise shrinks with the sub-band width.
    """
    h = h_t1.entries if isinstance(h_t1, ChannelMatrix) else np.asarray(h_t1)
    if isinstance(h_t1, ChannelMatrix):
        _check_transmission(h_t1)
    w = getattr(w_mb, "entries", w_mb)
    col_norm = np.sqrt(np.sum(np.abs(w) ** 2, axis=0))
    w = w / col_norm * math.sqrt(p_t / n_beams_total)
    g = np.abs(h @ w) ** 2
    colors = np.asarray(beam_colors)
    same = colors[:, None] == colors[None, :]
    signal = np.diag(g).copy()
    interference = np.sum(np.where(same, g, 0.0), axis=1) - signal
    interference = np.clip(interference, 0.0, None)
    noise = 1.0 / n_colors
    with np.errstate(divide="ignore"):
        sir = np.where(interference > 0, signal / np.where(interference > 0, interference, 1.0), np.inf)
    return signal / (noise + interference), signal / noise, sir


def frequency_reuse_baseline(scheme: str, lattice: BeamLattice, slots, bandwidth_hz: float,
                             p_t: float) -> MetricsReport:
    """Aggregate FR3/FR4 performance over slots.

    ``slots`` yields ``(slot_index, user_ids, beam_ids, h_t1, w_mb)`` tuples.
    """
    n_colors = {"fr3": 3, "fr4": 4}[scheme.lower()]
    colors = color_lattice(lattice, n_colors)
    results = []
    for t, users, beams, h, w in slots:
        gamma, snr, sir = frequency_reuse_sinr(h, w, colors[np.asarray(beams)], p_t, lattice.n_beams, n_colors)
        results.extend(user_results(users, t, gamma, snr, sir))
    return aggregate(results, bandwidth_hz / n_colors, {"scheme": scheme})
