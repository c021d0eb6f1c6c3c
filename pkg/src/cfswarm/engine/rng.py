"""Hierarchical random streams: scenario seed -> (drop, purpose, ...) sub-streams.

Every stream is derived from its key alone, so the order in which drops or
slots are evaluated (serially or by parallel workers) never changes a draw.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "users": 1,
    "los": 2,
    "schedule": 3,
    "shadow_t0": 4,
    "shadow_t1": 5,
    "phase_t0": 6,
    "phase_t1": 7,
    "position": 8,
    "rp_lb": 9,
    "rp_ss": 10,
}


def stream(seed: int, drop: int, purpose: str, *extra: int) -> np.random.Generator:
    key = (int(drop), PURPOSES[purpose]) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def seed_log(seed: int, n_drops: int) -> dict:
    return {
        "scenario_seed": int(seed),
        "n_drops": int(n_drops),
        "key_layout": "(drop, purpose[, slot])",
        "purposes": dict(PURPOSES),
    }
