"""Swarm, user and link geometry on a spherical, non-rotating Earth.

Nodes fly circular two-body orbits. Each node carries an antenna frame whose
boresight points to nadir and whose x-axis follows the velocity vector, so
direction cosines ``(u, v)`` are the x/y components of the unit vector from
the node to a ground point.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

MU_EARTH = 3.986004418e14  # m^3/s^2
EARTH_RADIUS_M = 6371.0e3


class TimeTag(enum.Enum):
    ESTIMATION = "t0"
    TRANSMISSION = "t1"


@dataclass(frozen=True)
class EarthModel:
    radius_m: float = EARTH_RADIUS_M

    def __post_init__(self):
        if not self.radius_m > 0:
            raise ValueError("Earth radius must be positive")


@dataclass(frozen=True)
class NodeState:
    node_id: int
    position_ecef: np.ndarray
    velocity_ecef: np.ndarray
    altitude_m: float = 600e3

    @property
    def orbit_radius_m(self) -> float:
        return float(np.linalg.norm(self.position_ecef))

    def frame(self) -> np.ndarray:
        """Rows are the antenna x, y and boresight (nadir) axes in ECEF."""
        z = -self.position_ecef / np.linalg.norm(self.position_ecef)
        x = self.velocity_ecef - np.dot(self.velocity_ecef, z) * z
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        return np.vstack([x, y, z])


@dataclass(frozen=True)
class Swarm:
    nodes: tuple[NodeState, ...]
    inter_node_spacing_m: float = 0.0
    earth: EarthModel = field(default_factory=EarthModel)

    @property
    def n_node(self) -> int:
        return len(self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return np.vstack([n.position_ecef for n in self.nodes])

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)


def orbital_rate(orbit_radius_m: float) -> float:
    return math.sqrt(MU_EARTH / orbit_radius_m**3)


def orbital_speed(orbit_radius_m: float) -> float:
    return math.sqrt(MU_EARTH / orbit_radius_m)


def make_swarm(n_node: int, altitude_m: float = 600e3, spacing_m: float = 0.0,
               earth: EarthModel | None = None) -> Swarm:
    """Place ``n_node`` nodes on one polar circular orbit.

    The swarm centroid sits above (lat 0, lon 0) heading north; consecutive
    nodes are separated along-track by ``spacing_m`` of arc at orbit radius.
    """
    if n_node < 1:
        raise ValueError("n_node must be >= 1")
    earth = earth or EarthModel()
    a = earth.radius_m + altitude_m
    speed = orbital_speed(a)
    dtheta = spacing_m / a
    nodes = []
    for s in range(n_node):
        theta = (s - (n_node - 1) / 2.0) * dtheta
        pos = a * np.array([math.cos(theta), 0.0, math.sin(theta)])
        vel = speed * np.array([-math.sin(theta), 0.0, math.cos(theta)])
        nodes.append(NodeState(s, pos, vel, altitude_m))
    return Swarm(tuple(nodes), spacing_m, earth)


def _rotate(vec: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    # Rodrigues rotation about a unit axis
    c, s = math.cos(angle), math.sin(angle)
    return vec * c + np.cross(axis, vec) * s + axis * np.dot(axis, vec) * (1.0 - c)


def propagate_swarm(swarm: Swarm, delta_t_s: float) -> Swarm:
    """Advance every node along its circular orbit by ``delta_t_s`` seconds."""
    if delta_t_s < 0:
        raise ValueError("delta_t must be non-negative")
    if delta_t_s == 0:
        return swarm
    nodes = []
    for node in swarm.nodes:
        h = np.cross(node.position_ecef, node.velocity_ecef)
        axis = h / np.linalg.norm(h)
        angle = orbital_rate(node.orbit_radius_m) * delta_t_s
        nodes.append(replace(node,
                             position_ecef=_rotate(node.position_ecef, axis, angle),
                             velocity_ecef=_rotate(node.velocity_ecef, axis, angle)))
    return replace(swarm, nodes=tuple(nodes))


def geodetic_to_ecef(lat, lon, alt=0.0, earth: EarthModel | None = None) -> np.ndarray:
    """Spherical geodetic (rad, rad, m) to ECEF; returns shape (..., 3)."""
    earth = earth or EarthModel()
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    r = earth.radius_m + np.asarray(alt, dtype=float)
    return np.stack([r * np.cos(lat) * np.cos(lon),
                     r * np.cos(lat) * np.sin(lon),
                     r * np.sin(lat) * np.ones_like(lon)], axis=-1)


def ecef_to_geodetic(xyz, earth: EarthModel | None = None):
    earth = earth or EarthModel()
    xyz = np.asarray(xyz, dtype=float)
    r = np.linalg.norm(xyz, axis=-1)
    lat = np.arcsin(np.clip(xyz[..., 2] / r, -1.0, 1.0))
    lon = np.arctan2(xyz[..., 1], xyz[..., 0])
    return lat, lon, r - earth.radius_m


def destination(lat, lon, distance_m, azimuth, earth: EarthModel | None = None):
    """Great-circle destination from (lat, lon) after ``distance_m`` at ``azimuth`` (from north)."""
    earth = earth or EarthModel()
    delta = np.asarray(distance_m, dtype=float) / earth.radius_m
    sin_lat2 = np.sin(lat) * np.cos(delta) + np.cos(lat) * np.sin(delta) * np.cos(azimuth)
    lat2 = np.arcsin(np.clip(sin_lat2, -1.0, 1.0))
    lon2 = lon + np.arctan2(np.sin(azimuth) * np.sin(delta) * np.cos(lat),
                            np.cos(delta) - np.sin(lat) * sin_lat2)
    return lat2, lon2


def central_angle(lat1, lon1, lat2, lon2):
    """Haversine central angle between two points (rad)."""
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    return 2 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def slant_range_from_elevation(elev_rad, altitude_m, earth: EarthModel | None = None):
    """Closed-form slant range for a ground user at a given elevation angle."""
    earth = earth or EarthModel()
    re = earth.radius_m
    rs = re + altitude_m
    s = np.sin(elev_rad)
    return -re * s + np.sqrt((re * s) ** 2 + rs**2 - re**2)


@dataclass(frozen=True)
class LinkGeometry:
    """Per (point, node) link quantities; arrays have shape (n_points, n_node)."""

    slant_range_m: np.ndarray
    elevation_rad: np.ndarray
    uv: np.ndarray  # (n_points, n_node, 2)
    los_unit: np.ndarray  # (n_points, n_node, 3), point -> node


def link_geometry(points_ecef: np.ndarray, swarm: Swarm) -> LinkGeometry:
    points = np.atleast_2d(points_ecef)
    up = points / np.linalg.norm(points, axis=1, keepdims=True)
    n = points.shape[0]
    rng_m = np.empty((n, swarm.n_node))
    elev = np.empty((n, swarm.n_node))
    uv = np.empty((n, swarm.n_node, 2))
    los = np.empty((n, swarm.n_node, 3))
    for s, node in enumerate(swarm.nodes):
        diff = node.position_ecef[None, :] - points
        d = np.linalg.norm(diff, axis=1)
        unit = diff / d[:, None]
        rng_m[:, s] = d
        elev[:, s] = np.arcsin(np.clip(np.sum(unit * up, axis=1), -1.0, 1.0))
        frame = node.frame()
        # direction from node towards the point
        uv[:, s, :] = (-unit) @ frame[:2].T
        los[:, s, :] = unit
    return LinkGeometry(rng_m, elev, uv, los)


@dataclass(frozen=True)
class GeometrySnapshot:
    time_tag: TimeTag
    slant_range_m: np.ndarray  # (n_user, n_node)
    elevation_rad: np.ndarray  # (n_user, n_node)
    uv_coords: np.ndarray  # (n_node, n_user, 2)
    visible: np.ndarray  # (n_user,) visible from every node above min elevation


def compute_snapshot(swarm: Swarm, users_ecef: np.ndarray, time_tag: TimeTag,
                     min_elevation_rad: float = math.radians(10.0)) -> GeometrySnapshot:
    g = link_geometry(users_ecef, swarm)
    visible = np.all(g.elevation_rad >= min_elevation_rad, axis=1)
    return GeometrySnapshot(time_tag, g.slant_range_m, g.elevation_rad,
                            np.transpose(g.uv, (1, 0, 2)), visible)


def uv_to_ground(node: NodeState, uv: np.ndarray, earth: EarthModel | None = None) -> np.ndarray:
    """Intersect the rays leaving ``node`` along direction cosines ``uv`` with the Earth."""
    earth = earth or EarthModel()
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    w2 = 1.0 - np.sum(uv**2, axis=1)
    if np.any(w2 < 0):
        raise ValueError("direction cosines outside the unit disc")
    local = np.column_stack([uv, np.sqrt(w2)])
    dirs = local @ node.frame()
    p = node.position_ecef
    # |p + t d|^2 = R^2, nearest root
    b = dirs @ p
    c = p @ p - earth.radius_m**2
    disc = b**2 - c
    if np.any(disc < 0):
        raise ValueError("beam direction does not intersect the Earth")
    t = -b - np.sqrt(disc)
    return p[None, :] + t[:, None] * dirs


def ground_distance_for_uv_offset(node: NodeState, u: float, earth: EarthModel | None = None) -> float:
    """Arc length on the ground between nadir and the point seen at direction cosine ``u``."""
    earth = earth or EarthModel()
    point = uv_to_ground(node, np.array([[u, 0.0]]), earth)[0]
    nadir = node.position_ecef / np.linalg.norm(node.position_ecef) * earth.radius_m
    cosang = np.dot(point, nadir) / earth.radius_m**2
    return float(earth.radius_m * math.acos(min(1.0, cosang)))


# ---------------------------------------------------------------------------
# users


class TerminalClass(str, enum.Enum):
    VSAT = "vsat"
    HANDHELD = "handheld"


class LosState(enum.IntEnum):
    UNASSIGNED = -1
    NLOS = 0
    LOS = 1


@dataclass
class Users:
    """Vectorised user population; one entry per terminal."""

    user_id: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    alt: np.ndarray
    terminal_class: TerminalClass
    noise_temperature_k: float
    los_state: np.ndarray = None

    def __post_init__(self):
        if self.noise_temperature_k <= 0:
            raise ValueError("noise temperature must be positive")
        if self.los_state is None:
            self.los_state = np.full(len(self.user_id), LosState.UNASSIGNED, dtype=int)

    def __len__(self):
        return len(self.user_id)

    def ecef(self, earth: EarthModel | None = None) -> np.ndarray:
        return geodetic_to_ecef(self.lat, self.lon, self.alt, earth)

    def subset(self, idx) -> "Users":
        return Users(self.user_id[idx], self.lat[idx], self.lon[idx], self.alt[idx],
                     self.terminal_class, self.noise_temperature_k, self.los_state[idx])

    def with_positions(self, lat, lon) -> "Users":
        return Users(self.user_id, np.asarray(lat), np.asarray(lon), self.alt,
                     self.terminal_class, self.noise_temperature_k, self.los_state)


# ---------------------------------------------------------------------------
# coverage regions


class CoverageRegion:
    """Ground region defined by a spherical cap and a membership test."""

    center_lat: float
    center_lon: float
    cap_radius_rad: float

    def contains(self, lat, lon) -> np.ndarray:
        raise NotImplementedError

    def area_m2(self, earth: EarthModel) -> float:
        raise NotImplementedError


@dataclass
class DiscRegion(CoverageRegion):
    center_lat: float
    center_lon: float
    radius_m: float
    earth: EarthModel = field(default_factory=EarthModel)

    @property
    def cap_radius_rad(self) -> float:
        return self.radius_m / self.earth.radius_m

    def contains(self, lat, lon):
        return central_angle(self.center_lat, self.center_lon, lat, lon) <= self.cap_radius_rad

    def area_m2(self, earth=None) -> float:
        earth = earth or self.earth
        return 2 * math.pi * earth.radius_m**2 * (1 - math.cos(self.radius_m / earth.radius_m))


def _cap_points(center_lat, center_lon, cap_radius, n):
    """Deterministic, area-uniform spiral point set over a spherical cap."""
    k = np.arange(n) + 0.5
    cos_g = 1.0 - (1.0 - math.cos(cap_radius)) * k / n
    gamma = np.arccos(cos_g)
    az = np.mod(k * math.pi * (3.0 - math.sqrt(5.0)), 2 * math.pi)
    return destination(center_lat, center_lon, gamma, az, EarthModel(1.0))


def sample_cap(center_lat, center_lon, cap_radius, n, rng):
    cos_g = rng.uniform(math.cos(cap_radius), 1.0, n)
    az = rng.uniform(0.0, 2 * math.pi, n)
    return destination(center_lat, center_lon, np.arccos(cos_g), az, EarthModel(1.0))


def drop_users(region: CoverageRegion, density_per_km2: float, rng: np.random.Generator,
               terminal_class: TerminalClass = TerminalClass.VSAT, noise_temperature_k: float = 290.0,
               count_rule: str = "fixed", count: int | None = None,
               earth: EarthModel | None = None) -> Users:
    """Drop users i.i.d. uniformly over ``region``.

    ``count_rule='fixed'`` uses round(density * area); ``'poisson'`` draws the
    count once from a Poisson law with that mean. An explicit ``count``
    overrides both.
    """
    earth = earth or EarthModel()
    if count is None:
        if not density_per_km2 > 0:
            raise ValueError("user density must be positive")
        area_km2 = region.area_m2(earth) / 1e6
        if not area_km2 > 0:
            raise ValueError("degenerate coverage region")
        mean = density_per_km2 * area_km2
        if count_rule == "fixed":
            count = int(round(mean))
        elif count_rule == "poisson":
            count = int(rng.poisson(mean))
        else:
            raise ValueError(f"unknown count rule {count_rule!r}")
    elif count < 0:
        raise ValueError("count must be non-negative")
    lats, lons = [], []
    got = 0
    while got < count:
        batch = max(64, 2 * (count - got))
        lat, lon = sample_cap(region.center_lat, region.center_lon, region.cap_radius_rad, batch, rng)
        keep = region.contains(lat, lon)
        lat, lon = lat[keep][: count - got], lon[keep][: count - got]
        lats.append(lat)
        lons.append(lon)
        got += len(lat)
    lat = np.concatenate(lats) if lats else np.empty(0)
    lon = np.concatenate(lons) if lons else np.empty(0)
    return Users(np.arange(count), lat, lon, np.zeros(count), TerminalClass(terminal_class),
                 noise_temperature_k)
