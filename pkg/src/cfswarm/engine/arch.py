"""Architecture calculators: ancillary-information aging and signalling overhead."""

from __future__ import annotations

from dataclasses import astuple, dataclass

CSI_BITS_PER_COEFFICIENT = 64  # two 32-bit floats
LOCATION_BITS = 48  # two 24-bit GPS coordinates


@dataclass(frozen=True)
class LatencyBudget:
    tau_user_ms: float = 0.0
    tau_feeder_dl_ms: float = 0.0
    tau_feeder_ul_ms: float = 0.0
    tau_p_ms: float = 0.0
    tau_rout_ms: float = 0.0
    tau_ad_ms: float = 0.0

    def __post_init__(self):
        if any(t < 0 for t in astuple(self)):
            raise ValueError("latency terms must be non-negative")

    @classmethod
    def illustrative_ogc(cls) -> "LatencyBudget":
        """One decomposition summing to the 16.7 ms on-ground default; not a measured budget."""
        return cls(2.0, 4.0, 4.0, 5.0, 0.5, 1.2)


def aging_interval(budget: LatencyBudget, arch: str = "OGC") -> float:
    """Aging interval in ms for on-ground (OGC) or on-board (OBC) computation."""
    arch = arch.upper()
    if arch == "OGC":
        return sum(astuple(budget))
    if arch == "OBC":
        return budget.tau_user_ms + budget.tau_p_ms + budget.tau_ad_ms
    raise ValueError(f"unknown architecture {arch!r}")


def signalling_overhead(n_f: int, kind: str = "CSI") -> int:
    """Bits each user reports per estimation: CSI vector or location."""
    if n_f < 1:
        raise ValueError("n_f must be >= 1")
    kind = kind.upper()
    if kind == "CSI":
        return CSI_BITS_PER_COEFFICIENT * n_f
    if kind == "LOCATION":
        return LOCATION_BITS
    raise ValueError(f"unknown report kind {kind!r}")
