import math

import numpy as np
import pytest

from latstack import lattice as lat


def test_square_positions_2x2():
    spec = lat.single_layer("square", 1.0, 2)
    pos = lat.build_positions(spec)
    expected = np.array([[1, 1, 0], [1, 2, 0], [2, 1, 0], [2, 2, 0]], float)
    np.testing.assert_allclose(pos, expected, atol=1e-15)


def test_square_positions_scale_with_a():
    spec = lat.single_layer("square", 1.7, 2)
    pos = lat.build_positions(spec)
    np.testing.assert_allclose(
        pos[:, :2],
        1.7 * np.array([[1, 1], [1, 2], [2, 1], [2, 2]], float), atol=1e-14)


def test_triangular_second_basis_vector():
    spec = lat.single_layer("triangular", 1.0, 2)
    pos = lat.build_positions(spec)
    # (n1=1, n2=2) - (n1=1, n2=1) = a * (cos 60, sin 60)
    step = pos[1] - pos[0]
    np.testing.assert_allclose(step, [0.5, math.sqrt(3) / 2, 0.0], atol=1e-12)


def test_two_layer_35x35_count_and_planes():
    spec = lat.two_layer("square", 2.0, 1.2, 35)
    pos = lat.build_positions(spec)
    assert pos.shape == (2450, 3)
    zs = np.unique(pos[:, 2])
    np.testing.assert_allclose(zs, [0.0, 2.0])
    assert np.all(pos[:1225, 2] == 0.0)  # layer-major ordering


def test_shift_applied_to_second_layer():
    spec = lat.two_layer("square", 3.0, 1.4, 4, shifted=True)
    pos = lat.build_positions(spec)
    np.testing.assert_allclose(pos[16:, 0] - pos[:16, 0], 0.7, atol=1e-14)
    np.testing.assert_allclose(pos[16:, 1] - pos[:16, 1], 0.7, atol=1e-14)


def test_spec_validation():
    with pytest.raises(ValueError):
        lat.StackSpec(math.pi / 2, -1.0, 1.0, 4)
    with pytest.raises(ValueError):
        lat.StackSpec(math.pi / 2, 1.0, 1.0, 4, n_z=2)  # missing shift
    with pytest.raises(ValueError):
        lat.StackSpec(math.pi / 2, 1.0, 1.0, 4, n_z=2,
                      shifts=((0.1, 0.0), (0.0, 0.0)))  # b_0 != 0
    assert lat.single_layer("square", 1.2, 3).superwavelength
    assert not lat.single_layer("square", 0.8, 3).superwavelength


def test_gamma0_value():
    # 3/(4 pi) / (a^2 sin psi) at a = 0.8, square
    assert math.isclose(lat.gamma0(0.8, math.pi / 2),
                        3 / (4 * math.pi) / 0.64, rel_tol=1e-12)
    assert math.isclose(lat.gamma0(0.8, math.pi / 2), 0.373, abs_tol=5e-4)


def test_orders_square_1p3416():
    spec = lat.single_layer("square", 1.3416, 3)
    orders = [o for o in lat.enumerate_orders(spec)
              if o.radiative and not o.is_zero]
    assert sorted(o.m for o in orders) == [(-1, 0), (0, -1), (0, 1), (1, 0)]
    # independent evaluation of the channel formulas
    q = 1.0 / 1.3416
    kz = math.sqrt(1.0 - q * q)
    gm = (1.0 - q * q / 2.0) / kz
    for o in orders:
        assert math.isclose(o.q_ratio, q, rel_tol=1e-12)
        assert math.isclose(o.kz_ratio, kz, rel_tol=1e-12)
        assert math.isclose(o.gamma_m / spec.gamma0, gm, rel_tol=1e-12)
    assert math.isclose(orders[0].q_ratio, 0.7454, abs_tol=1e-4)
    assert math.isclose(orders[0].kz_ratio, 0.6667, abs_tol=1e-4)
    assert math.isclose(orders[0].gamma_m / spec.gamma0, 1.0833, abs_tol=1e-4)
    assert math.isclose(math.degrees(orders[0].theta_d), 48.19, abs_tol=0.01)


def test_orders_subwavelength_none():
    spec = lat.single_layer("square", 0.8, 3)
    radiative = lat.radiative_orders(spec, include_zero=False)
    assert radiative == []


def test_orders_triangular_first_shell():
    spec = lat.single_layer("triangular", 1.925, 3)
    orders = lat.radiative_orders(spec, include_zero=False)
    assert len(orders) == 6
    q = (2.0 / math.sqrt(3.0)) / 1.925
    for o in orders:
        assert math.isclose(o.q_ratio, q, rel_tol=1e-12)
    assert math.isclose(orders[0].q_ratio, 0.5999, abs_tol=1e-3)
    assert math.isclose(math.degrees(orders[0].theta_d), 36.87, abs_tol=0.05)


def test_orders_two_shells_at_1p58():
    spec = lat.single_layer("square", 1.58, 3)
    shells = lat.group_shells(lat.radiative_orders(spec, include_zero=False))
    assert len(shells) == 2
    assert len(shells[0]) == 4 and len(shells[1]) == 4
    assert math.isclose(shells[1][0].q_ratio / shells[0][0].q_ratio,
                        math.sqrt(2), rel_tol=1e-12)


def test_zero_order_rate_is_gamma0():
    for lattice, a in (("square", 0.7), ("square", 1.3), ("triangular", 1.9)):
        spec = lat.single_layer(lattice, a, 2)
        zero = [o for o in lat.enumerate_orders(spec) if o.is_zero][0]
        assert math.isclose(zero.gamma_m, spec.gamma0, rel_tol=1e-14)
        assert zero.kz_ratio == 1.0 and zero.radiative


def test_shells_share_rate_and_angle():
    spec = lat.single_layer("triangular", 1.8, 2)
    shell = lat.group_shells(lat.radiative_orders(spec, include_zero=False))[0]
    gams = {round(o.gamma_m, 12) for o in shell}
    ths = {round(o.theta_d, 12) for o in shell}
    assert len(gams) == 1 and len(ths) == 1
    assert len(shell) == 6  # six-fold symmetry


def test_shell_radiative_onsets():
    # square second shell opens at a = sqrt(2), triangular at a = 2
    for lattice, a_on in (("square", math.sqrt(2)), ("triangular", 2.0)):
        below = lat.single_layer(lattice, a_on - 1e-3, 2)
        above = lat.single_layer(lattice, a_on + 1e-3, 2)
        assert len(lat.group_shells(lat.radiative_orders(below, include_zero=False))) == 1
        assert len(lat.group_shells(lat.radiative_orders(above, include_zero=False))) == 2


def test_rate_diverges_but_stays_finite_near_grazing():
    spec = lat.single_layer("square", 1.0 + 1e-12, 2)
    orders = lat.radiative_orders(spec, include_zero=False)
    assert len(orders) == 4
    for o in orders:
        assert np.isfinite(o.gamma_m) and o.gamma_m > 1e3 * spec.gamma0


def test_window_too_small_error():
    spec = lat.single_layer("square", 1.3, 3)
    with pytest.raises(lat.WindowTooSmallError):
        lat.enumerate_orders(spec, m_max=1)
    assert lat.required_m_window(1.3) == 3
    lat.enumerate_orders(spec, m_max=3)  # minimal accepted window


def test_orders_sorted_by_q_then_m():
    spec = lat.single_layer("square", 1.58, 2)
    orders = lat.enumerate_orders(spec)
    keys = [(o.q_ratio, o.m) for o in orders]
    assert keys == sorted(keys)
    assert orders[0].is_zero


def test_evanescent_flag_and_magnitude():
    spec = lat.single_layer("square", 0.8, 2)
    ev = [o for o in lat.enumerate_orders(spec) if not o.radiative][0]
    q = ev.q_ratio
    assert q > 1.0
    assert math.isclose(ev.kz_ratio, math.sqrt(q * q - 1.0), rel_tol=1e-12)
    assert ev.theta_d is None


def test_linear_size_equal_area():
    sq = lat.single_layer("square", 1.3, 8)
    assert math.isclose(sq.linear_size, 1.3 * 8, rel_tol=1e-12)
    tr = lat.single_layer("triangular", 1.9, 8)
    assert math.isclose(tr.linear_size,
                        1.9 * math.sqrt(64 * math.sin(math.pi / 3)), rel_tol=1e-12)


def test_disk_crop_keeps_count_and_compactness():
    rhomb = lat.build_positions(lat.single_layer("triangular", 1.9, 12))
    disk = lat.build_positions(lat.single_layer("triangular", 1.9, 12, crop="disk"))
    assert disk.shape == rhomb.shape
    def spread(p):
        c = p.mean(axis=0)
        return np.max(np.linalg.norm(p - c, axis=1))
    assert spread(disk) < spread(rhomb)


def test_quarter_cell_shifts_form_half_sublattice():
    shifts = lat.quarter_cell_shifts("triangular", 2.0)
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.5, math.sqrt(3) / 2])
    expected = [0 * e1, e1, e2, e1 + e2]
    for got, want in zip(shifts, expected):
        np.testing.assert_allclose(got, want, atol=1e-12)
