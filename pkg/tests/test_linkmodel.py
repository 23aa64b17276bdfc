import math

import pytest

from purlink.linkmodel import (
    GROUND,
    SATELLITE,
    Delays,
    LinkConfig,
    attempt_success_prob,
    link_delays,
    per_photon_survival,
    slant_geometry,
)
from purlink.protocols import expected_nop_time

GROUND_20 = LinkConfig(GROUND, d=20.0, mu=1e6, f0=0.9)
SAT_500 = LinkConfig(SATELLITE, d=500.0, mu=1e6, f0=0.9)


def test_ground_survival_frozen():
    assert per_photon_survival(GROUND_20) == 0.6309573444801932  # 10**-0.2
    assert attempt_success_prob(GROUND_20) == 0.39810717055349726
    # half-link composition: attempt probability equals full-length fiber loss
    assert abs(attempt_success_prob(GROUND_20) - 10.0 ** (-0.4)) < 1e-15


def test_ground_delays_frozen():
    delays = link_delays(GROUND_20)
    assert delays == Delays(1e-06, 5e-05, 0.0001)
    assert delays.period == 1.0 / GROUND_20.mu
    assert delays.herald_delay == 2.0 * delays.photon_delay


def test_satellite_geometry_frozen():
    geom = slant_geometry(SAT_500)
    assert geom.slant_range == 471.6990566028302
    assert geom.atmosphere_path == 11.792476415070755
    assert abs(geom.slant_range - math.hypot(400.0, 250.0)) < 1e-12
    # atmosphere portion scales with the slant over the altitude
    assert abs(geom.atmosphere_path - geom.slant_range * 10.0 / 400.0) < 1e-12


def test_satellite_survival_frozen():
    assert per_photon_survival(SAT_500) == 0.5861316461504793
    assert attempt_success_prob(SAT_500) == 0.34355030661907066


def test_satellite_delays_frozen():
    delays = link_delays(SAT_500)
    assert delays.period == 1e-06
    assert delays.photon_delay == 0.0015734186902154497
    assert delays.herald_delay == 0.0025  # classical signal goes over ground fiber


def test_slant_geometry_rejects_ground():
    with pytest.raises(ValueError):
        slant_geometry(GROUND_20)


def test_zenith_limit():
    # stations nearly colocated: slant approaches the altitude
    near = LinkConfig(SATELLITE, d=0.001, mu=1e6, f0=0.9)
    geom = slant_geometry(near)
    assert abs(geom.slant_range - 400.0) < 1e-6
    assert abs(geom.atmosphere_path - 10.0) < 1e-6


def test_survival_decreases_with_distance():
    last_ground, last_sat = 1.0, 1.0
    for d in (10.0, 50.0, 200.0, 800.0):
        g = per_photon_survival(LinkConfig(GROUND, d=d, mu=1e6, f0=0.9))
        s = per_photon_survival(LinkConfig(SATELLITE, d=d, mu=1e6, f0=0.9))
        assert g < last_ground and s < last_sat
        last_ground, last_sat = g, s
    # free space wins over fiber at long range
    assert per_photon_survival(
        LinkConfig(SATELLITE, d=800.0, mu=1e6, f0=0.9)
    ) > per_photon_survival(LinkConfig(GROUND, d=800.0, mu=1e6, f0=0.9))


def test_link_config_validation():
    with pytest.raises(ValueError):
        LinkConfig("orbital", d=20.0, mu=1e6, f0=0.9)
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=0.0, mu=1e6, f0=0.9)
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=20.0, mu=-1.0, f0=0.9)
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=20.0, mu=1e6, f0=0.2)
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=20.0, mu=1e6, f0=1.1)
    with pytest.raises(ValueError):
        LinkConfig(SATELLITE, d=20.0, mu=1e6, f0=0.9, h=5.0)  # below the atmosphere
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=20.0, mu=1e6, f0=0.9, alpha_f=-0.1)
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=20.0, mu=1e6, f0=0.9, gate_time=-1e-6)
    with pytest.raises(ValueError):
        LinkConfig(GROUND, d=20.0, mu=1e6, f0=0.9, c_fiber=0.0)


def test_expected_nop_time_formula():
    delays = link_delays(GROUND_20)
    p = attempt_success_prob(GROUND_20)
    want = delays.period / p + delays.photon_delay + delays.herald_delay
    assert abs(expected_nop_time(GROUND_20) - want) < 1e-15
    # lossless link: first emission succeeds
    lossless = LinkConfig(GROUND, d=20.0, mu=1e3, f0=0.9, alpha_f=0.0)
    want = 1e-3 + 5e-05 + 1e-4
    assert abs(expected_nop_time(lossless) - want) < 1e-15
