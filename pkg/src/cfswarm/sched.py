"""Beam activation, user-to-beam association and the random per-slot scheduler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .antenna import BeamLattice, beam_center_points
from .geom import Swarm, link_geometry


@dataclass(frozen=True)
class ActivationMask:
    active: np.ndarray  # bool per global beam id (node-major)
    offsets: np.ndarray  # first global id of each lattice

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def active_ids(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def owner(self, beam_id: int) -> int:
        return int(np.searchsorted(self.offsets, beam_id, side="right") - 1)


@dataclass(frozen=True)
class SlotSchedule:
    slot_index: int
    served_user_ids: np.ndarray
    beam_ids: np.ndarray


def lattice_offsets(lattices: list[BeamLattice]) -> np.ndarray:
    return np.cumsum([0] + [lat.n_beams for lat in lattices])[:-1]


def beam_separation(swarm: Swarm, lattices: list[BeamLattice]) -> np.ndarray:
    """Pairwise centre distance in (u, v), measured in the frame of each beam's own node.

    Entry (a, b) is the distance seen by the node owning beam ``a``; same-node
    pairs use the exact lattice geometry.
    """
    points = beam_center_points(swarm, lattices)
    g = link_geometry(points, swarm)
    owners = np.concatenate([np.full(lat.n_beams, lat.node_id) for lat in lattices])
    n = len(points)
    sep = np.empty((n, n))
    for a in range(n):
        s = owners[a]
        sep[a] = np.linalg.norm(g.uv[:, s, :] - g.uv[a, s, :], axis=1)
    # exact in-lattice spacing (no projection round trip)
    offsets = lattice_offsets(lattices)
    for lat, off in zip(lattices, offsets):
        c = lat.centers_uv
        block = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
        sep[off:off + lat.n_beams, off:off + lat.n_beams] = block
    return sep


def conflicts(swarm: Swarm, lattices: list[BeamLattice], theta_3db: float) -> np.ndarray:
    """True where two beams sit closer than ``theta_3db`` in either owner's frame."""
    sep = beam_separation(swarm, lattices)
    sym = np.minimum(sep, sep.T)
    out = sym < theta_3db * (1 - 1e-9)
    np.fill_diagonal(out, False)
    return out


def activate_beams(lattices: list[BeamLattice], swarm: Swarm, theta_3db: float) -> ActivationMask:
    """Greedy proximity rule: keep beams in (node, spiral) order unless they clash with a kept one."""
    offsets = lattice_offsets(lattices)
    n = sum(lat.n_beams for lat in lattices)
    if swarm.n_node == 1 or len(lattices) == 1:
        return ActivationMask(np.ones(n, dtype=bool), offsets)
    clash = conflicts(swarm, lattices, theta_3db)
    active = np.zeros(n, dtype=bool)
    for b in range(n):
        if not np.any(clash[b] & active):
            active[b] = True
    return ActivationMask(active, offsets)


def associate_users(users_ecef: np.ndarray, lattices: list[BeamLattice], mask: ActivationMask,
                    swarm: Swarm, min_elevation_rad: float = 0.0) -> np.ndarray:
    """Nearest active beam centre per user (ties to the lowest id); -1 when none is visible."""
    g = link_geometry(users_ecef, swarm)
    n_user = g.uv.shape[0]
    best_d = np.full(n_user, np.inf)
    best = np.full(n_user, -1, dtype=int)
    for lat, off in zip(lattices, mask.offsets):
        s = lat.node_id
        visible = g.elevation_rad[:, s] >= min_elevation_rad
        d = np.linalg.norm(g.uv[:, s, None, :] - lat.centers_uv[None, :, :], axis=-1)
        d[:, ~mask.active[off:off + lat.n_beams]] = np.inf
        d[~visible] = np.inf
        local = np.argmin(d, axis=1)
        dmin = d[np.arange(n_user), local]
        # strict improvement keeps the lower global id on ties
        better = dmin < best_d
        best_d = np.where(better, dmin, best_d)
        best = np.where(better, off + local, best)
    return best


def build_schedule(association: np.ndarray, user_ids, rng: np.random.Generator) -> list[SlotSchedule]:
    """One user per non-empty beam per slot until every assigned user is served once."""
    association = np.asarray(association)
    user_ids = np.asarray(user_ids)
    beams = np.unique(association[association >= 0])
    pools = {int(b): user_ids[rng.permutation(np.flatnonzero(association == b))] for b in beams}
    n_slots = max((len(p) for p in pools.values()), default=0)
    slots = []
    for t in range(n_slots):
        served = [(b, p[t]) for b, p in pools.items() if t < len(p)]
        slots.append(SlotSchedule(t, np.array([u for _, u in served], dtype=int),
                                  np.array([b for b, _ in served], dtype=int)))
    return slots
