import math

import numpy as np
import pytest

from latstack import dipole as dip
from latstack.lattice import K_LIGHT


# ---------------------------------------------------------------------------
# projected dipole coupling


def test_greens_along_z_matches_closed_form():
    for r in (0.3, 1.0, 4.7):
        got = dip.greens_coupling([0.0, 0.0, r])
        x = K_LIGHT * r
        want = 0.75 * np.exp(1j * x) / x * (1 + 1j / x - 1 / x ** 2)
        assert abs(got - want) < 1e-14


def test_greens_generic_direction_matches_dyadic_projection():
    # independent evaluation: project the full dyadic on e = (x + i y)/sqrt(2)
    rng = np.random.default_rng(2)
    e = np.array([1.0, 1.0j, 0.0]) / math.sqrt(2)
    for _ in range(10):
        rvec = rng.uniform(-3, 3, size=3)
        r = np.linalg.norm(rvec)
        rhat = rvec / r
        x = K_LIGHT * r
        proj = np.eye(3) - np.outer(rhat, rhat)
        proj3 = np.eye(3) - 3 * np.outer(rhat, rhat)
        dyad = 0.75 * np.exp(1j * x) / x * (
            proj + proj3 * (1j / x - 1 / x ** 2))
        want = np.conj(e) @ dyad @ e
        got = dip.greens_coupling(rvec)
        assert abs(got - want) < 1e-13


def test_greens_parity_and_handedness():
    rng = np.random.default_rng(4)
    for _ in range(5):
        rvec = rng.uniform(-2, 2, size=3)
        assert abs(dip.greens_coupling(rvec) - dip.greens_coupling(-rvec)) < 1e-15
        assert abs(dip.greens_coupling(rvec, "+")
                   - dip.greens_coupling(rvec, "-")) < 1e-15


def test_greens_far_field_along_z():
    r = 2000.0
    got = dip.greens_coupling([0.0, 0.0, r])
    lead = 0.75 * np.exp(1j * K_LIGHT * r) / (K_LIGHT * r)
    # subleading 1/(kr)^2 terms sit a factor 1/(kr) below the leading one
    assert abs(got - lead) / abs(lead) < 2.0 / (K_LIGHT * r)


def test_greens_zero_separation_raises():
    with pytest.raises(ValueError):
        dip.greens_coupling([0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        dip.greens_coupling(np.array([[0, 0, 1.0], [0, 0, 0]]))


# ---------------------------------------------------------------------------
# Gaussian drive mode


def test_mode_unit_amplitude_at_focus():
    beam = dip.BeamSpec(waist=4.0, focus=(1.0, -2.0, 0.5))
    assert abs(dip.gaussian_mode_field(beam, [1.0, -2.0, 0.5]) - 1.0) < 1e-14


def test_mode_transverse_profile_e_minus_one_at_waist():
    w = 5.0
    beam = dip.BeamSpec(waist=w, focus=(0.0, 0.0, 0.0))
    val = dip.gaussian_mode_field(beam, [w, 0.0, 0.0])
    assert math.isclose(abs(val), math.exp(-1.0), rel_tol=1e-12)


def test_mode_rayleigh_range_pi_w_squared():
    w = 3.0
    beam = dip.BeamSpec(waist=w, focus=(0.0, 0.0, 0.0))
    assert math.isclose(beam.rayleigh_range, math.pi * w * w, rel_tol=1e-14)
    on_axis = dip.gaussian_mode_field(beam, [0.0, 0.0, beam.rayleigh_range])
    assert math.isclose(abs(on_axis), 1.0 / math.sqrt(2.0), rel_tol=1e-12)


def test_mode_direction_flip_mirrors_field():
    w = 4.0
    up = dip.BeamSpec(waist=w, focus=(0.0, 0.0, 1.0), direction=1)
    down = dip.BeamSpec(waist=w, focus=(0.0, 0.0, 1.0), direction=-1)
    pts_up = np.array([[0.7, -0.3, 1.0 + 5.0]])
    pts_down = np.array([[0.7, -0.3, 1.0 - 5.0]])
    a = dip.gaussian_mode_field(up, pts_up)[0]
    b = dip.gaussian_mode_field(down, pts_down)[0]
    assert abs(a - b) < 1e-14


def test_mode_power_conserved_along_propagation():
    beam = dip.BeamSpec(waist=3.0, focus=(0.0, 0.0, 0.0))
    xs = np.linspace(-24, 24, 481)
    powers = []
    for z in (0.0, 10.0, beam.rayleigh_range):
        pts = np.empty((xs.size, xs.size, 3))
        pts[..., 0] = xs[:, None]
        pts[..., 1] = xs[None, :]
        pts[..., 2] = z
        u = dip.gaussian_mode_field(beam, pts)
        powers.append(np.sum(np.abs(u) ** 2))
    assert np.ptp(powers) / powers[0] < 1e-6


def test_paraxial_advisory_below_two_wavelengths():
    with pytest.warns(dip.ParaxialValidityWarning):
        dip.BeamSpec(waist=1.5)


def test_focus_resolution_uses_array_center():
    positions = np.array([[0.0, 0.0, 0.0], [2.0, 4.0, 3.0]])
    beam = dip.BeamSpec(waist=5.0).resolved(positions)
    assert beam.focus == (1.0, 2.0, 1.5)
    fixed = dip.BeamSpec(waist=5.0, focus=(9.0, 9.0, 9.0)).resolved(positions)
    assert fixed.focus == (9.0, 9.0, 9.0)
