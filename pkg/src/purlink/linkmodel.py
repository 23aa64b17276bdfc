"""Link geometry, loss, and signalling delays.

Two link kinds share one interface. A ground link is a fiber of length d
with the source in the middle; a satellite link is a midpoint satellite at
altitude h serving two ground stations separated by d, with diffraction
plus atmospheric loss on each downlink. All distances in km, times in s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .channels import (
    OpticalHardware,
    fiber_transmissivity,
    satellite_transmissivity,
)

GROUND = "ground"
SATELLITE = "satellite"


class Delays(NamedTuple):
    period: float  # emission spacing, 1/mu
    photon_delay: float  # source to node
    herald_delay: float  # node to node classical signal


class SlantGeometry(NamedTuple):
    slant_range: float  # satellite to ground station, km
    atmosphere_path: float  # portion of the slant range inside the atmosphere, km


@dataclass(frozen=True)
class LinkConfig:
    kind: str
    d: float  # ground station separation, km
    mu: float  # source emission rate, Hz
    f0: float  # fidelity of emitted Werner pairs
    h: float = 400.0  # satellite altitude, km
    alpha_f: float = 0.2  # fiber attenuation, dB/km
    alpha_a: float = 0.028125  # atmospheric attenuation, 1/km
    atmosphere_ceiling: float = 10.0  # km
    c_fiber: float = 200000.0  # km/s
    c_vacuum: float = 299792.458  # km/s
    hw: OpticalHardware = field(default_factory=OpticalHardware)
    gate_time: float = 0.0  # s, two-qubit gate duration
    measure_time: float = 0.0  # s

    def __post_init__(self) -> None:
        if self.kind not in (GROUND, SATELLITE):
            raise ValueError(f"link kind must be {GROUND!r} or {SATELLITE!r}")
        if self.d <= 0:
            raise ValueError("station separation d must be positive")
        if self.mu <= 0:
            raise ValueError("emission rate mu must be positive")
        if not 0.25 <= self.f0 <= 1.0:
            raise ValueError("source fidelity f0 must lie in [0.25, 1]")
        if self.kind == SATELLITE and self.h <= self.atmosphere_ceiling:
            raise ValueError("satellite altitude must exceed the atmosphere ceiling")
        for name in ("alpha_f", "alpha_a", "gate_time", "measure_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.c_fiber <= 0 or self.c_vacuum <= 0:
            raise ValueError("signal speeds must be positive")


def slant_geometry(cfg: LinkConfig) -> SlantGeometry:
    """Slant range to one station and its in-atmosphere portion."""
    if cfg.kind != SATELLITE:
        raise ValueError("slant geometry only applies to satellite links")
    slant = math.sqrt(cfg.h**2 + (cfg.d / 2.0) ** 2)
    return SlantGeometry(slant, slant * cfg.atmosphere_ceiling / cfg.h)


def per_photon_survival(cfg: LinkConfig) -> float:
    """Probability that one photon of a pair reaches its node."""
    if cfg.kind == GROUND:
        return fiber_transmissivity(cfg.d / 2.0, cfg.alpha_f)
    slant, atmos = slant_geometry(cfg)
    return satellite_transmissivity(slant, atmos, cfg.hw, cfg.alpha_a)


def attempt_success_prob(cfg: LinkConfig) -> float:
    """Probability that both photons of one emitted pair arrive."""
    return per_photon_survival(cfg) ** 2


def link_delays(cfg: LinkConfig) -> Delays:
    if cfg.kind == GROUND:
        photon = (cfg.d / 2.0) / cfg.c_fiber
    else:
        photon = slant_geometry(cfg).slant_range / cfg.c_vacuum
    herald = cfg.d / cfg.c_fiber
    return Delays(1.0 / cfg.mu, photon, herald)
