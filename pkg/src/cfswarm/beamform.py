"""Beamforming matrices for MMSE, LB-MMSE, SS-MMSE and multi-beam steering.

Every weight computation consumes estimation-time (t0) information only;
passing a transmission-time channel raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import power
from .antenna import BeamLattice, UpaConfig, element_positions
from .channel import ChannelMatrix, LinkSetup, coefficient_rows
from .geom import Swarm, TimeTag, geodetic_to_ecef, link_geometry
from .impair import perturb_radiation_pattern

ALGORITHMS = ("mmse", "lb_mmse", "ss_mmse", "mb")


@dataclass(frozen=True)
class BeamformingMatrix:
    entries: np.ndarray  # (n_node * N_F, K)
    algorithm: str
    n_node: int = 1
    normalization: str | None = None
    alpha: np.ndarray | None = None

    @property
    def normalized(self) -> bool:
        return self.normalization is not None

    def normalize(self, budget: power.PowerBudget, scheme: str) -> "BeamformingMatrix":
        return replace(self, entries=power.normalize(self.entries, budget, scheme), normalization=scheme)

    def column_power(self) -> np.ndarray:
        return np.sum(np.abs(self.entries) ** 2, axis=0)


@dataclass(frozen=True)
class LocationReports:
    """Positions reported by the scheduled users, plus the t0 ephemeris."""

    user_ids: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    alt: np.ndarray
    ephemeris: Swarm

    def ecef(self) -> np.ndarray:
        return geodetic_to_ecef(self.lat, self.lon, self.alt, self.ephemeris.earth)


def default_alpha(k: int, n_f: int, p_t: float) -> np.ndarray:
    return np.full(k, n_f / p_t)


def _check_estimation(h: ChannelMatrix):
    if h.time_tag is not TimeTag.ESTIMATION:
        raise ValueError("beamforming weights must be computed from estimation-time information")


def regularized_solve(h: np.ndarray, alpha) -> np.ndarray:
    """W = H^H (H H^H + diag(alpha))^-1 via a Cholesky solve of the K x K system."""
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        raise FloatingPointError("non-finite entries in the channel estimate")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (h.shape[0],))
    if np.any(alpha <= 0):
        raise ValueError("regularisation factors must be positive")
    gram = h @ h.conj().T
    gram[np.diag_indices_from(gram)] += alpha
    # gram is Hermitian, so (H^H gram^-1)^H = gram^-1 H
    return cho_solve(cho_factor(gram, lower=True), h).conj().T


def mmse_weights(h_est: ChannelMatrix, alpha) -> BeamformingMatrix:
    _check_estimation(h_est)
    w = regularized_solve(h_est.entries, alpha)
    return BeamformingMatrix(w, "mmse", h_est.n_node, alpha=np.broadcast_to(alpha, (h_est.k,)).copy())


def csi_dropout(h_est: ChannelMatrix, threshold_db: float | None) -> ChannelMatrix:
    """Zero node blocks whose power is ``threshold_db`` below the user's strongest block."""
    if threshold_db is None:
        return h_est
    entries = h_est.entries.copy()
    blocks = np.stack([np.sum(np.abs(h_est.node_block(s)) ** 2, axis=1) for s in range(h_est.n_node)], 1)
    floor = blocks.max(axis=1, keepdims=True) * 10 ** (-threshold_db / 10)
    for s in range(h_est.n_node):
        drop = blocks[:, s] < floor[:, 0]
        entries[drop, s * h_est.n_f:(s + 1) * h_est.n_f] = 0
    return replace(h_est, entries=entries)


def _rp_hook(epsilon_rp: float, rng, amplitude_mode: str):
    if epsilon_rp == 0 or rng is None:
        return None

    def hook(tx, s):
        return perturb_radiation_pattern(tx, epsilon_rp, rng, amplitude_mode)

    return hook


def reconstruct_channel(points_ecef: np.ndarray, user_ids, ephemeris: Swarm, link: LinkSetup,
                        epsilon_rp: float = 0.0, rng: np.random.Generator | None = None,
                        amplitude_mode: str = "signed") -> ChannelMatrix:
    """Location-derived channel estimate: geometry terms only, unit losses, no sync phase."""
    rows = coefficient_rows(points_ecef, ephemeris, link,
                            tx_gain_hook=_rp_hook(epsilon_rp, rng, amplitude_mode))
    g = link_geometry(points_ecef, ephemeris)
    # a node below the reported position's horizon contributes nothing
    below = g.elevation_rad < 0
    for s in range(ephemeris.n_node):
        rows[below[:, s], s * link.upa.n_f:(s + 1) * link.upa.n_f] = 0
    return ChannelMatrix(rows, TimeTag.ESTIMATION, np.asarray(user_ids), ephemeris.n_node, link.upa.n_f)


def reconstruct_channel_from_location(reports: LocationReports, link: LinkSetup, epsilon_rp: float = 0.0,
                                      rng: np.random.Generator | None = None,
                                      amplitude_mode: str = "signed") -> ChannelMatrix:
    return reconstruct_channel(reports.ecef(), reports.user_ids, reports.ephemeris, link,
                               epsilon_rp, rng, amplitude_mode)


def lb_mmse_weights(reports: LocationReports, link: LinkSetup, alpha, epsilon_rp: float = 0.0,
                    rng: np.random.Generator | None = None,
                    amplitude_mode: str = "signed") -> BeamformingMatrix:
    h = reconstruct_channel_from_location(reports, link, epsilon_rp, rng, amplitude_mode)
    return replace(mmse_weights(h, alpha), algorithm="lb_mmse")


def ss_mmse_weights(beam_points_ecef: np.ndarray, user_beams, user_ids, ephemeris: Swarm,
                    link: LinkSetup, alpha, epsilon_rp: float = 0.0,
                    rng: np.random.Generator | None = None,
                    amplitude_mode: str = "signed") -> BeamformingMatrix:
    """MMSE on the channel each user would have at its associated beam centre.

    ``beam_points_ecef`` holds the ground point of every beam (global ids);
    ``user_beams`` gives the beam id of each scheduled user.
    """
    points = np.asarray(beam_points_ecef)[np.asarray(user_beams)]
    h = reconstruct_channel(points, user_ids, ephemeris, link, epsilon_rp, rng, amplitude_mode)
    return replace(mmse_weights(h, alpha), algorithm="ss_mmse")


def mb_weights(beam_points_ecef: np.ndarray, beam_ids, ephemeris: Swarm, upa: UpaConfig,
               lattices: list[BeamLattice] | None = None) -> BeamformingMatrix:
    """Phase-only steering: every node steers a unit-norm block towards each beam centre.

    The owning node steers exactly at its lattice centre; other nodes steer at
    the same ground point expressed in their own frame.
    """
    beam_ids = np.asarray(beam_ids, dtype=int)
    if beam_ids.size == 0:
        raise ValueError("no active beams to steer")
    points = np.asarray(beam_points_ecef)[beam_ids]
    g = link_geometry(points, ephemeris)
    uv = g.uv.copy()
    if lattices is not None:
        offsets = np.cumsum([0] + [lat.n_beams for lat in lattices])
        for k, b in enumerate(beam_ids):
            s = int(np.searchsorted(offsets, b, side="right") - 1)
            uv[k, lattices[s].node_id] = lattices[s].centers_uv[b - offsets[s]]
    r = element_positions(upa)
    n_f = upa.n_f
    w = np.empty((ephemeris.n_node * n_f, beam_ids.size), dtype=complex)
    for s in range(ephemeris.n_node):
        phase = uv[:, s, 0:1] * r[:, 0] + uv[:, s, 1:2] * r[:, 1]
        w[s * n_f:(s + 1) * n_f] = (np.exp(-2j * np.pi * phase) / math.sqrt(n_f)).T
    return BeamformingMatrix(w, "mb", ephemeris.n_node)
