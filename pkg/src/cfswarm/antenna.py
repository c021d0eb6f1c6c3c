"""On-board UPA responses, user-terminal patterns and hexagonal beam lattices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
import yaml
from scipy.optimize import brentq
from scipy.special import j1

from .geom import (CoverageRegion, EarthModel, NodeState, Swarm, _cap_points, central_angle,
                   ecef_to_geodetic, geodetic_to_ecef, link_geometry, uv_to_ground)


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@lru_cache(maxsize=None)
def load_antenna_params(path: str | None = None) -> dict:
    if path is None:
        text = resources.files("cfswarm").joinpath("data/antennas.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return yaml.safe_load(text)


@dataclass(frozen=True)
class ElementPattern:
    """Single radiating element, ITU-R M.2101 style (gains in dB)."""

    peak_gain_dbi: float = 8.0
    phi_3db_deg: float = 65.0
    theta_3db_deg: float = 65.0
    front_to_back_db: float = 30.0
    side_lobe_db: float = 30.0

    @classmethod
    def from_params(cls, params: dict) -> "ElementPattern":
        return cls(**params)


def element_gain_db(u, v, params: ElementPattern = ElementPattern()):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w2 = 1.0 - u**2 - v**2
    w = np.sqrt(np.clip(w2, 0.0, None))
    phi = np.degrees(np.arctan2(u, w))
    theta_dev = np.degrees(np.arcsin(np.clip(v, -1.0, 1.0)))
    a_h = np.minimum(12.0 * (phi / params.phi_3db_deg) ** 2, params.front_to_back_db)
    a_v = np.minimum(12.0 * (theta_dev / params.theta_3db_deg) ** 2, params.side_lobe_db)
    gain = params.peak_gain_dbi - np.minimum(a_h + a_v, params.front_to_back_db)
    return np.where(w2 >= 0.0, gain, -np.inf)


def element_gain(u, v, params: ElementPattern = ElementPattern()):
    """Field amplitude of the element pattern towards ``(u, v)``.

    The pattern is real and non-negative; directions outside the visible
    hemisphere (u^2 + v^2 > 1) get zero gain.
    """
    return 10.0 ** (element_gain_db(u, v, params) / 20.0)


@dataclass(frozen=True)
class UpaConfig:
    n_rows: int = 32
    n_cols: int = 32
    spacing_wavelengths: float = 0.55
    element: ElementPattern = field(default_factory=ElementPattern)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("UPA must have at least one row and column")
        if not self.spacing_wavelengths > 0:
            raise ValueError("element spacing must be positive")

    @property
    def n_f(self) -> int:
        return self.n_rows * self.n_cols


def element_positions(upa: UpaConfig) -> np.ndarray:
    """(N_F, 2) element x/y offsets in wavelengths, centred on the array origin."""
    d = upa.spacing_wavelengths
    cols = (np.arange(upa.n_cols) - (upa.n_cols - 1) / 2.0) * d
    rows = (np.arange(upa.n_rows) - (upa.n_rows - 1) / 2.0) * d
    xx, yy = np.meshgrid(cols, rows)
    return np.column_stack([xx.ravel(), yy.ravel()])


def steering_phase(upa: UpaConfig, u, v) -> np.ndarray:
    """exp(+j k0 r_n . p) for every element; shape (..., N_F)."""
    r = element_positions(upa)
    u = np.asarray(u, dtype=float)[..., None]
    v = np.asarray(v, dtype=float)[..., None]
    return np.exp(2j * np.pi * (u * r[:, 0] + v * r[:, 1]))


def array_response(upa: UpaConfig, u, v) -> np.ndarray:
    """Per-element transmit gain g_E(u, v) exp(j k0 r_n . p); shape (..., N_F)."""
    ge = element_gain(u, v, upa.element)
    return np.asarray(ge)[..., None] * steering_phase(upa, u, v)


def array_beamwidth_uv(upa: UpaConfig) -> float:
    """Full half-power beamwidth in u of the broadside array factor (along a row)."""
    n, d = upa.n_cols, upa.spacing_wavelengths
    if n == 1:
        return 2.0

    def af2(u):
        x = np.pi * d * u
        return (np.sin(n * x) / (n * np.sin(x))) ** 2 - 0.5

    return 2.0 * brentq(af2, 1e-9, 1.0 / (n * d))


# ---------------------------------------------------------------------------
# user terminals


@dataclass(frozen=True)
class TerminalParams:
    kind: str  # "omni" or "aperture"
    noise_temperature_k: float
    peak_gain_dbi: float = 0.0
    diameter_m: float = 0.0
    efficiency: float = 0.65

    @classmethod
    def load(cls, name: str, path: str | None = None) -> "TerminalParams":
        params = load_antenna_params(path)["terminals"]
        if name not in params:
            raise KeyError(f"no terminal parameters for {name!r}")
        return cls(**params[name])

    def peak_gain_linear(self, wavelength: float) -> float:
        if self.kind == "omni":
            return float(db2lin(self.peak_gain_dbi))
        return self.efficiency * (math.pi * self.diameter_m / wavelength) ** 2


def receiver_gain(params: TerminalParams, off_axis_rad, wavelength: float):
    """Field amplitude of the terminal pattern ``off_axis_rad`` away from its pointing."""
    off_axis_rad = np.asarray(off_axis_rad, dtype=float)
    peak = params.peak_gain_linear(wavelength)
    if params.kind == "omni":
        return np.full(off_axis_rad.shape, math.sqrt(peak))
    x = math.pi * params.diameter_m / wavelength * np.sin(off_axis_rad)
    safe = np.where(np.abs(x) < 1e-12, 1.0, x)
    pattern = np.where(np.abs(x) < 1e-12, 1.0, 2.0 * j1(safe) / safe)
    return math.sqrt(peak) * np.abs(pattern)


def pointing_off_axis(los_unit: np.ndarray, elevation_rad: np.ndarray) -> np.ndarray:
    """Off-axis angle towards each node for a dish tracking its highest-elevation node.

    ``los_unit`` is (n_user, n_node, 3), ``elevation_rad`` is (n_user, n_node).
    """
    best = np.argmax(elevation_rad, axis=1)
    pointing = los_unit[np.arange(los_unit.shape[0]), best]
    cosang = np.einsum("unk,uk->un", los_unit, pointing)
    return np.arccos(np.clip(cosang, -1.0, 1.0))


# ---------------------------------------------------------------------------
# beam lattices


def hex_count(n_tiers: int) -> int:
    return 3 * n_tiers * (n_tiers + 1) + 1


def _hex_axial(n_tiers: int) -> np.ndarray:
    """Axial (q, r) coordinates in spiral order: centre, then each ring counter-clockwise."""
    coords = [(0, 0)]
    for k in range(1, n_tiers + 1):
        ring = [(q, r) for q in range(-k, k + 1) for r in range(-k, k + 1)
                if max(abs(q), abs(r), abs(q + r)) == k]
        ring.sort(key=lambda qr: math.atan2(qr[1] * math.sqrt(3) / 2, qr[0] + qr[1] / 2) % (2 * math.pi))
        coords.extend(ring)
    return np.array(coords, dtype=int)


@dataclass(frozen=True)
class BeamLattice:
    node_id: int
    centers_uv: np.ndarray  # (n_beams, 2), in the node's antenna frame
    axial: np.ndarray  # (n_beams, 2)
    n_tiers: int
    theta_3db: float  # adjacent-centre spacing in (u, v)
    orientation_rad: float = 0.0

    @property
    def n_beams(self) -> int:
        return len(self.centers_uv)

    def neighbour_pairs(self) -> list[tuple[int, int]]:
        index = {tuple(a): i for i, a in enumerate(self.axial)}
        pairs = []
        for i, (q, r) in enumerate(self.axial):
            for dq, dr in ((1, 0), (0, 1), (-1, 1)):
                j = index.get((q + dq, r + dr))
                if j is not None:
                    pairs.append((i, j))
        return pairs


def build_lattice(n_tiers: int, theta_3db: float, node: NodeState | int = 0,
                  orientation_rad: float = 0.0) -> BeamLattice:
    """Centred hexagonal grid of ``3T(T+1)+1`` beam centres spaced by ``theta_3db`` in (u, v)."""
    if n_tiers < 0:
        raise ValueError("n_tiers must be >= 0")
    node_id = node.node_id if isinstance(node, NodeState) else int(node)
    axial = _hex_axial(n_tiers)
    q, r = axial[:, 0].astype(float), axial[:, 1].astype(float)
    x = theta_3db * (q + r / 2.0)
    y = theta_3db * r * math.sqrt(3) / 2.0
    c, s = math.cos(orientation_rad), math.sin(orientation_rad)
    centers = np.column_stack([c * x - s * y, s * x + c * y])
    return BeamLattice(node_id, centers, axial, n_tiers, theta_3db, orientation_rad)


def _cell_axes(lattice: BeamLattice) -> np.ndarray:
    ang = lattice.orientation_rad + np.radians([0.0, 60.0, 120.0])
    return np.column_stack([np.cos(ang), np.sin(ang)])


def in_lattice(lattice: BeamLattice, uv: np.ndarray) -> np.ndarray:
    """True where ``uv`` points fall inside the union of the lattice's hexagonal cells."""
    uv = np.atleast_2d(uv)
    d2 = ((uv[:, None, :] - lattice.centers_uv[None, :, :]) ** 2).sum(-1)
    nearest = np.argmin(d2, axis=1)
    off = uv - lattice.centers_uv[nearest]
    proj = np.abs(off @ _cell_axes(lattice).T)
    return np.all(proj <= lattice.theta_3db / 2.0 + 1e-15, axis=1)


@dataclass
class LatticeRegion(CoverageRegion):
    """Union of every node's beam cells, projected on the ground."""

    swarm: Swarm
    lattices: list[BeamLattice]
    n_area_points: int = 200_000

    def __post_init__(self):
        earth = self.swarm.earth
        c_lat, c_lon, _ = ecef_to_geodetic(self.swarm.centroid(), earth)
        self.center_lat, self.center_lon = float(c_lat), float(c_lon)
        radius = 0.0
        for lat in self.lattices:
            node = self.swarm.nodes[lat.node_id]
            ang = np.radians(30.0 + 60.0 * np.arange(6)) + lat.orientation_rad
            verts = (lat.centers_uv[:, None, :]
                     + lat.theta_3db / math.sqrt(3) * np.stack([np.cos(ang), np.sin(ang)], -1)[None])
            verts = verts.reshape(-1, 2)
            verts = verts[np.sum(verts**2, axis=1) < 1.0]
            try:
                pts = uv_to_ground(node, verts, earth)
            except ValueError:
                raise ValueError("beam lattice extends beyond the Earth horizon") from None
            plat, plon, _ = ecef_to_geodetic(pts, earth)
            radius = max(radius, float(np.max(central_angle(self.center_lat, self.center_lon, plat, plon))))
        self.cap_radius_rad = radius * 1.01
        self._area = None

    def contains(self, lat, lon) -> np.ndarray:
        earth = self.swarm.earth
        pts = geodetic_to_ecef(lat, lon, 0.0, earth)
        g = link_geometry(pts, self.swarm)
        inside = np.zeros(len(pts), dtype=bool)
        for lattice in self.lattices:
            s = lattice.node_id
            visible = np.einsum("nk,k->n", -g.los_unit[:, s, :], self.swarm.nodes[s].frame()[2]) > 0
            inside |= visible & in_lattice(lattice, g.uv[:, s, :])
        return inside

    def area_m2(self, earth: EarthModel | None = None) -> float:
        if self._area is None:
            earth = self.swarm.earth
            lat, lon = _cap_points(self.center_lat, self.center_lon, self.cap_radius_rad, self.n_area_points)
            frac = float(np.mean(self.contains(lat, lon)))
            cap = 2 * math.pi * earth.radius_m**2 * (1 - math.cos(self.cap_radius_rad))
            self._area = frac * cap
        return self._area


def beam_center_points(swarm: Swarm, lattices: list[BeamLattice]) -> np.ndarray:
    """Ground ECEF point of every beam centre, concatenated node-major."""
    return np.vstack([uv_to_ground(swarm.nodes[lat.node_id], lat.centers_uv, swarm.earth)
                      for lat in lattices])
