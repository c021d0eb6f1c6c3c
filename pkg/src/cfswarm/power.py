"""Power normalisation of beamforming matrices.

Rows of ``W`` are radiating elements and columns are users. The maximum and
per-antenna constraints act on row (per-element) powers; the printed index
sets of the original formulation mix rows and columns, and the per-element
reading is the one that matches their stated behaviour.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SCHEMES = ("spc", "mpc", "pac", "sspc", "smpc")


class ZeroPowerWarning(UserWarning):
    """A row or node block carried no power and was passed through as zeros."""


@dataclass(frozen=True)
class PowerBudget:
    p_t_node_w: float
    n_node: int = 1

    def __post_init__(self):
        if not self.p_t_node_w > 0:
            raise ValueError("per-node power must be positive")
        if self.n_node < 1:
            raise ValueError("n_node must be >= 1")

    @property
    def p_t_total_w(self) -> float:
        return self.n_node * self.p_t_node_w


def eirp_to_power_w(eirp_dbw_per_mhz: float, bandwidth_hz: float) -> float:
    return 10.0 ** (eirp_dbw_per_mhz / 10.0) * bandwidth_hz / 1e6


def scale_node_power(p_t_w: float, n_b_single: int, n_b_multi: int, n_node: int) -> float:
    """Per-node power giving the same average power per beam as the single-node case."""
    if min(n_b_single, n_b_multi, n_node) < 1:
        raise ValueError("beam and node counts must be >= 1")
    return p_t_w * n_b_multi / (n_node * n_b_single)


def scale_node_power_db(p_t_dbw: float, n_b_single: int, n_b_multi: int, n_node: int) -> float:
    if min(n_b_single, n_b_multi, n_node) < 1:
        raise ValueError("beam and node counts must be >= 1")
    return p_t_dbw + 10 * math.log10(n_b_multi) - 10 * math.log10(n_node * n_b_single)


def _total_power(w):
    return float(np.vdot(w, w).real)


def row_powers(w: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(w) ** 2, axis=1)


def normalize_spc(w: np.ndarray, p_t: float) -> np.ndarray:
    """Scale so the Frobenius power equals ``p_t``."""
    total = _total_power(w)
    if total == 0:
        raise ValueError("cannot normalise a zero beamforming matrix")
    return w * math.sqrt(p_t / total)


def normalize_mpc(w: np.ndarray, p_t: float) -> np.ndarray:
    """Scale so the strongest element emits ``p_t / n_rows``."""
    peak = float(np.max(row_powers(w)))
    if peak == 0:
        raise ValueError("cannot normalise a zero beamforming matrix")
    return w * math.sqrt(p_t / (w.shape[0] * peak))


def normalize_pac(w: np.ndarray, p_t: float) -> np.ndarray:
    """Rescale every row independently to ``p_t / n_rows``; zero rows stay zero."""
    rp = row_powers(w)
    zero = rp == 0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} zero rows left unpowered", ZeroPowerWarning, stacklevel=2)
    scale = np.zeros_like(rp)
    scale[~zero] = np.sqrt(p_t / (w.shape[0] * rp[~zero]))
    return w * scale[:, None]


def normalize_swarm(w: np.ndarray, budget: PowerBudget, scheme: str) -> np.ndarray:
    """Per-node SPC ('sspc') or MPC ('smpc') over the row blocks of ``w``."""
    if scheme not in ("sspc", "smpc"):
        raise ValueError(f"unknown swarm scheme {scheme!r}")
    n_rows = w.shape[0]
    if n_rows % budget.n_node:
        raise ValueError("row count is not a multiple of the node count")
    n_f = n_rows // budget.n_node
    out = np.zeros_like(w)
    inner = normalize_spc if scheme == "sspc" else normalize_mpc
    for s in range(budget.n_node):
        block = w[s * n_f:(s + 1) * n_f]
        if _total_power(block) == 0:
            warnings.warn(f"node {s} block is zero", ZeroPowerWarning, stacklevel=2)
            continue
        out[s * n_f:(s + 1) * n_f] = inner(block, budget.p_t_node_w)
    return out


def normalize(w: np.ndarray, budget: PowerBudget, scheme: str) -> np.ndarray:
    """Dispatch by scheme name. Whole-matrix schemes use the swarm total power."""
    if scheme == "spc":
        return normalize_spc(w, budget.p_t_total_w)
    if scheme == "mpc":
        return normalize_mpc(w, budget.p_t_total_w)
    if scheme == "pac":
        return normalize_pac(w, budget.p_t_total_w)
    if scheme in ("sspc", "smpc"):
        return normalize_swarm(w, budget, scheme)
    raise ValueError(f"unknown normalisation {scheme!r}")
