"""Plot-ready long-format tables and rendered figures from a results directory."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

log = logging.getLogger(__name__)

BASELINES = ("fr3", "fr4")
CURVE_KEYS = ["algorithm", "normalization", "n_node", "channel_mode", "terminal", "eirp_dbw_mhz"]
MAP_KEYS = ["algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode", "drop", "user_id"]

FAMILIES = {
    "se_vs_eirp": {
        "columns": CURVE_KEYS + ["avg_se_bps_hz", "n_users", "n_served"],
        "about": "served-only average spectral efficiency [bit/s/Hz] per beamformer and normalisation",
    },
    "outage_vs_eirp": {
        "columns": CURVE_KEYS + ["outage_pct", "n_users"],
        "about": "percentage of scheduled users below the minimum SINR",
    },
    "capacity_vs_eirp": {
        "columns": CURVE_KEYS + ["avg_capacity_mbps", "bandwidth_hz"],
        "about": "average per-user capacity [Mbps] over each scheme's bandwidth, frequency-reuse baselines included",
    },
    "sinr_map": {
        "columns": MAP_KEYS + ["lat_deg", "lon_deg", "sinr_db", "served"],
        "about": "per-user SINR [dB] at the user's true position, one row per scheduled user",
    },
    "user_power": {
        "columns": MAP_KEYS + ["beam_id", "power_w"],
        "about": "transmit power [W] allocated to each user's beamforming column",
    },
}

SUMMARY_REQUIRED = ["algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode", "terminal",
                    "n_users", "n_served", "avg_se_bps_hz", "outage_pct", "avg_capacity_mbps", "bandwidth_hz"]
PER_USER_REQUIRED = ["algorithm", "normalization", "eirp_dbw_mhz", "n_node", "channel_mode", "drop",
                     "user_id", "beam_id", "lat_deg", "lon_deg", "sinr_db", "served", "power_w"]


class ReportError(RuntimeError):
    """Unusable results directory; names the file (and column) at fault."""


def _require(df: pd.DataFrame, columns, path: Path):
    for col in columns:
        if col not in df.columns:
            raise ReportError(f"{path}: missing column {col!r}")


def _read(path: Path, required) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise ReportError(f"{path}: empty file") from exc
    _require(df, required, path)
    return df


def load_results(results_dir) -> tuple[pd.DataFrame, pd.DataFrame | None]:
    """Summary table plus per-user records (None when no per-user CSV exists).

    Accepts a single run directory (``summary.csv``) or a sweep directory
    (``sweep_summary.csv`` with one sub-directory per scenario).
    """
    root = Path(results_dir)
    if not root.is_dir():
        raise ReportError(f"{root}: results directory not found")
    if (root / "summary.csv").exists():
        summary = _read(root / "summary.csv", SUMMARY_REQUIRED)
        user_files = [root / "per_user.csv"] if (root / "per_user.csv").exists() else []
    elif (root / "sweep_summary.csv").exists():
        summary = _read(root / "sweep_summary.csv", SUMMARY_REQUIRED)
        user_files = sorted(root.glob("*/per_user.csv"))
    else:
        raise ReportError(f"{root}: no summary.csv or sweep_summary.csv")
    if summary.empty:
        raise ReportError(f"{root}: summary holds no rows")
    per_user = None
    if user_files:
        per_user = pd.concat([_read(p, PER_USER_REQUIRED) for p in user_files], ignore_index=True)
    return summary, per_user


def _curve(summary: pd.DataFrame, family: str, baselines: bool) -> pd.DataFrame:
    is_base = summary["algorithm"].isin(BASELINES)
    df = summary if baselines else summary[~is_base]
    cols = FAMILIES[family]["columns"]
    return df[cols].sort_values(CURVE_KEYS, kind="stable", ignore_index=True)


def _snapshot(per_user: pd.DataFrame, family: str, drop: int | None) -> pd.DataFrame:
    """Rows of one drop (the first one present unless ``drop`` is given)."""
    df = per_user[~per_user["algorithm"].isin(BASELINES)] if family == "user_power" else per_user
    drop = int(df["drop"].min()) if drop is None else drop
    df = df[df["drop"] == drop]
    return df[FAMILIES[family]["columns"]].sort_values(MAP_KEYS, kind="stable", ignore_index=True)


def build_tables(summary: pd.DataFrame, per_user: pd.DataFrame | None, drop: int | None = None) -> dict:
    tables = {
        "se_vs_eirp": _curve(summary, "se_vs_eirp", baselines=False),
        "outage_vs_eirp": _curve(summary, "outage_vs_eirp", baselines=False),
        "capacity_vs_eirp": _curve(summary, "capacity_vs_eirp", baselines=True),
    }
    if per_user is not None:
        tables["sinr_map"] = _snapshot(per_user, "sinr_map", drop)
        tables["user_power"] = _snapshot(per_user, "user_power", drop)
    return tables


# ---------------------------------------------------------------------------
# rendering


def _label(row) -> str:
    text = f"{row['algorithm']}/{row['normalization']}"
    if row.get("n_node_count", 1) > 1:
        text += f" N={row['n_node']}"
    if row.get("mode_count", 1) > 1:
        text += f" {row['channel_mode']}"
    return text


def _plot_curves(df: pd.DataFrame, ycol: str, ylabel: str, path: Path):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    groups = ["algorithm", "normalization", "n_node", "channel_mode"]
    n_node_count = df["n_node"].nunique()
    mode_count = df["channel_mode"].nunique()
    markers = dict(zip(sorted(df["algorithm"].unique()), "osD^vx*"))
    styles = dict(zip(sorted(df["normalization"].unique()), ["-", "--", ":", "-.", (0, (5, 1))]))
    for key, grp in df.groupby(groups, sort=True):
        row = dict(zip(groups, key), n_node_count=n_node_count, mode_count=mode_count)
        # identical curves (MMSE vs LB-MMSE) stay distinguishable through marker and dash
        ax.plot(grp["eirp_dbw_mhz"], grp[ycol], marker=markers[key[0]], linestyle=styles[key[1]],
                fillstyle="none", label=_label(row))
    ax.set_xlabel("EIRP density [dBW/MHz]")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _panel_key(df: pd.DataFrame):
    """Highest EIRP, first normalisation, first node count and channel mode."""
    beamformed = df[~df["algorithm"].isin(BASELINES)]
    df = beamformed if not beamformed.empty else df
    eirp = df["eirp_dbw_mhz"].max()
    sub = df[df["eirp_dbw_mhz"] == eirp]
    return sub[(sub["normalization"] == sub["normalization"].iloc[0])
               & (sub["n_node"] == sub["n_node"].iloc[0])
               & (sub["channel_mode"] == sub["channel_mode"].iloc[0])]


def _plot_map(df: pd.DataFrame, path: Path):
    import matplotlib.pyplot as plt

    sub = _panel_key(df)
    algos = list(dict.fromkeys(sub["algorithm"]))
    fig, axes = plt.subplots(1, len(algos), figsize=(3.2 * len(algos), 3.4), squeeze=False)
    finite = sub["sinr_db"].replace([np.inf, -np.inf], np.nan).dropna()
    vmin, vmax = (finite.min(), finite.max()) if len(finite) else (-10, 30)
    for ax, alg in zip(axes[0], algos):
        d = sub[sub["algorithm"] == alg]
        sc = ax.scatter(d["lon_deg"], d["lat_deg"], c=d["sinr_db"], s=8, cmap="viridis", vmin=vmin, vmax=vmax)
        ax.set_title(alg, fontsize=9)
        ax.set_xlabel("lon [deg]")
        ax.set_aspect("equal", adjustable="datalim")
    axes[0][0].set_ylabel("lat [deg]")
    fig.colorbar(sc, ax=axes[0].tolist(), label="SINR [dB]")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def _plot_power(df: pd.DataFrame, path: Path):
    import matplotlib.pyplot as plt

    sub = _panel_key(df)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for alg, d in sub.groupby("algorithm", sort=False):
        ax.plot(np.sort(d["power_w"].to_numpy()), marker=".", linestyle="none", label=alg)
    ax.set_xlabel("user (sorted by power)")
    ax.set_ylabel("allocated power [W]")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(tables: dict, out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    written = []
    specs = {
        "se_vs_eirp": ("avg_se_bps_hz", "average SE [bit/s/Hz]"),
        "outage_vs_eirp": ("outage_pct", "outage [%]"),
        "capacity_vs_eirp": ("avg_capacity_mbps", "average capacity [Mbps]"),
    }
    for name, (ycol, label) in specs.items():
        df = tables[name]
        if df.empty:
            continue
        _plot_curves(df, ycol, label, out / f"{name}.png")
        written.append(out / f"{name}.png")
    if "sinr_map" in tables and not tables["sinr_map"].empty:
        _plot_map(tables["sinr_map"], out / "sinr_map.png")
        written.append(out / "sinr_map.png")
    if "user_power" in tables and not tables["user_power"].empty:
        _plot_power(tables["user_power"], out / "user_power.png")
        written.append(out / "user_power.png")
    return written


def write_report(results_dir, out_dir=None, drop: int | None = None, figures: bool = True) -> dict:
    """Write one CSV per figure family plus a manifest documenting each header.

    Returns ``{family: path}`` for the CSVs (figures sit next to them).
    """
    summary, per_user = load_results(results_dir)
    if per_user is None:
        log.warning("%s: no per-user CSV, skipping sinr_map and user_power", results_dir)
    tables = build_tables(summary, per_user, drop)
    out = Path(out_dir) if out_dir is not None else Path(results_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    manifest = {}
    for name, df in tables.items():
        path = out / f"{name}.csv"
        df.to_csv(path, index=False, float_format="%.12g")
        paths[name] = path
        manifest[f"{name}.csv"] = {"about": FAMILIES[name]["about"], "columns": list(df.columns),
                                   "rows": len(df)}
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))
    if figures:
        render_figures(tables, out)
    return paths
