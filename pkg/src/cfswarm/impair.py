"""Non-ideal information at the transmitter: location and radiation-pattern errors.

Both injectors only ever touch the quantities used to *estimate* the channel
when computing beamforming weights; the transmission-time channel is built
from the true positions and patterns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geom import EarthModel, destination


@dataclass(frozen=True)
class ImpairmentConfig:
    position_error_enabled: bool = False
    position_error_max_m: float = 10.0
    rp_error_enabled: bool = False
    epsilon_rp: float = 0.05
    rp_amplitude_mode: str = "signed"

    def __post_init__(self):
        if self.position_error_max_m < 0:
            raise ValueError("position_error_max_m must be >= 0")
        if not 0 <= self.epsilon_rp < 1:
            raise ValueError("epsilon_rp must lie in [0, 1)")
        if self.rp_amplitude_mode not in ("signed", "folded"):
            raise ValueError("rp_amplitude_mode must be 'signed' or 'folded'")


def position_offsets(n: int, max_m: float, rng: np.random.Generator):
    """Radius ~ U[0, max) and azimuth ~ U[0, 2 pi) for ``n`` users."""
    radius = rng.uniform(0.0, max_m, n) if max_m > 0 else np.zeros(n)
    azimuth = rng.uniform(0.0, 2 * np.pi, n)
    return radius, azimuth


def perturb_position(lat, lon, max_m: float, rng: np.random.Generator,
                     earth: EarthModel | None = None):
    """Displace each position horizontally by a random distance and direction.

    Returns the reported ``(lat, lon)``; altitude is left untouched.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if max_m == 0:
        return lat.copy(), lon.copy()
    radius, azimuth = position_offsets(lat.size, max_m, rng)
    lat2, lon2 = destination(lat.ravel(), lon.ravel(), radius, azimuth, earth)
    return lat2.reshape(lat.shape), lon2.reshape(lon.shape)


def radiation_pattern_error(true_gain, epsilon_rp: float, rng: np.random.Generator,
                            amplitude_mode: str = "signed") -> np.ndarray:
    """Additive error on complex pattern samples.

    Amplitude ~ N(0, |g|^2 eps) and phase ~ N(0, |angle(g)|^2 eps), with the
    error written as ``|dg| exp(-j angle(dg))``. In ``signed`` mode the
    Gaussian amplitude keeps its sign; ``folded`` takes its absolute value.
    """
    g = np.asarray(true_gain)
    if epsilon_rp == 0:
        return np.zeros(g.shape, dtype=complex)
    root = np.sqrt(epsilon_rp)
    amplitude = np.abs(g) * root * rng.standard_normal(g.shape)
    if amplitude_mode == "folded":
        amplitude = np.abs(amplitude)
    phase = np.abs(np.angle(g)) * root * rng.standard_normal(g.shape)
    return amplitude * np.exp(-1j * phase)


def perturb_radiation_pattern(true_gain, epsilon_rp: float, rng: np.random.Generator,
                              amplitude_mode: str = "signed") -> np.ndarray:
    """Estimated pattern ``g + dg``; exactly ``g`` when ``epsilon_rp`` is zero."""
    g = np.asarray(true_gain)
    if epsilon_rp == 0:
        return g.copy()
    return g + radiation_pattern_error(g, epsilon_rp, rng, amplitude_mode)
