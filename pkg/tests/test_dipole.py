import math
import warnings

import numpy as np
import pytest

from latstack import dipole as dip
from latstack import interface as itf
from latstack import lattice as lat

A_SQ = itf.resonant_lattice_constant("square", "matched", 5, 3.0)


def quiet_beam(waist, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dip.ParaxialValidityWarning)
        return dip.BeamSpec(waist=waist, **kw)


# ---------------------------------------------------------------------------
# steady-state solves


def test_single_atom_on_resonance():
    spec = lat.single_layer("square", 0.8, 1)
    prob = dip.assemble_and_solve(spec, 0.0, dip.BeamSpec(waist=5.0))
    # scalar equation (-1/2) p = -i Omega  ->  p = 2 i Omega
    assert abs(prob.solution[0] - 2j * prob.drive[0]) < 1e-12
    assert prob.residual < 1e-10


def test_single_atom_detuned_lorentzian():
    spec = lat.single_layer("square", 0.8, 1)
    for delta in (-0.7, 0.3, 2.0):
        prob = dip.assemble_and_solve(spec, delta, dip.BeamSpec(waist=5.0))
        want = -1j * prob.drive[0] / (1j * delta - 0.5)
        assert abs(prob.solution[0] - want) < 1e-12


def test_distant_atoms_respond_independently():
    spec = lat.single_layer("square", 1000.0, 2)
    prob = dip.assemble_and_solve(spec, 0.0, dip.BeamSpec(waist=1e5))
    iso = 2j * prob.drive
    assert np.max(np.abs(prob.solution - iso) / np.abs(iso)) < 1e-3


def test_collective_linewidth_matches_zero_order_rate():
    # 10x10 subwavelength layer under plane-like drive: FWHM of |sum p|^2
    spec = lat.single_layer("square", 0.8, 10)
    solver = dip.StackSolver(spec, dip.BeamSpec(waist=1e3))
    deltas = np.linspace(-1.2, 1.2, 241)
    signal = np.array([abs(np.sum(solver.solve(d).solution)) ** 2
                       for d in deltas])
    half = signal.max() / 2.0
    above = deltas[signal >= half]
    fwhm = above[-1] - above[0]
    assert abs(fwhm - spec.gamma0) / spec.gamma0 < 0.15


def test_memory_budget_guard():
    spec = lat.single_layer("square", 0.8, 10)
    with pytest.raises(MemoryError):
        dip.assemble_and_solve(spec, 0.0, dip.BeamSpec(waist=5.0),
                               memory_budget=1000)


# ---------------------------------------------------------------------------
# mode overlap


def test_zero_dipoles_give_zero_reflection_unit_transmission():
    spec = lat.single_layer("square", 0.8, 4)
    positions = lat.build_positions(spec)
    beam = dip.BeamSpec(waist=3.0).resolved(positions)
    prob = dip.DipoleProblem(positions, 0.0,
                             np.zeros(16, complex), np.zeros(16, complex), 0.0)
    res = dip.reflectivity_overlap(prob, beam)
    assert res.r == 0.0 and res.r0 == 0.0
    assert abs(res.t - 1.0) < 1e-14


def test_overlap_contract_violations_raise():
    spec = lat.single_layer("square", 0.8, 4)
    beam = dip.BeamSpec(waist=3.0)
    prob = dip.assemble_and_solve(spec, 0.0, beam)
    with pytest.raises(ValueError):
        dip.reflectivity_overlap(prob, beam, grid_step=0.4)
    with pytest.raises(ValueError):
        dip.reflectivity_overlap(prob, beam, aperture_factor=5.0)


def test_overlap_grid_refinement_converged():
    spec = lat.two_layer("square", 3.0, A_SQ, 8, shifted=True)
    beam = quiet_beam(0.3 * spec.linear_size)
    prob = dip.assemble_and_solve(spec, -0.11, beam)
    coarse = dip.reflectivity_overlap(prob, beam, grid_step=0.25)
    fine = dip.reflectivity_overlap(prob, beam, grid_step=0.125)
    assert abs(fine.r - coarse.r) / abs(fine.r) < 1e-3


def test_fft_and_direct_overlap_paths_agree():
    spec = lat.two_layer("square", 2.0, 1.1, 5)
    beam = quiet_beam(0.4 * spec.linear_size)
    prob = dip.assemble_and_solve(spec, 0.05, beam)
    plane = dip._OverlapPlane(prob.positions, beam.resolved(prob.positions),
                              "reflection")
    assert plane.commensurate
    direct = plane._weights_direct(prob.positions, plane.mode)
    assert np.max(np.abs(plane._weights - direct)) < 1e-12 * np.max(np.abs(direct))


def test_reciprocity_for_mirror_symmetric_stack():
    spec = lat.two_layer("square", 2.5, 1.25, 8)  # unshifted: z-mirror symmetric
    r0s = []
    for direction in (1, -1):
        beam = quiet_beam(0.3 * spec.linear_size, direction=direction)
        prob = dip.assemble_and_solve(spec, -0.05, beam)
        r0s.append(dip.reflectivity_overlap(prob, beam).r0)
    assert abs(r0s[0] - r0s[1]) < 1e-6


def test_power_balance_bounded():
    spec = lat.two_layer("square", 3.0, A_SQ, 10, shifted=True)
    beam = quiet_beam(0.3 * spec.linear_size)
    _, res = dip.find_resonance(spec, beam)
    assert res.power_balance <= 1.0 + 1e-2
    assert res.r0 <= 1.0 + 1e-3
    assert res.t2 >= 0.0


# ---------------------------------------------------------------------------
# resonance location


def test_find_resonance_single_atom_at_zero():
    spec = lat.single_layer("square", 0.8, 1)
    delta_star, res = dip.find_resonance(spec, dip.BeamSpec(waist=4.0))
    assert abs(delta_star) < 0.05
    assert res.r0 < 0.05  # a single atom reflects almost nothing


def test_find_resonance_peak_beats_zero_detuning():
    spec = lat.two_layer("square", 3.0, A_SQ, 8, shifted=True)
    beam = quiet_beam(0.3 * spec.linear_size)
    solver = dip.StackSolver(spec, beam)
    delta_star, res = dip.find_resonance(spec, beam, solver=solver)
    at_zero = dip.reflectivity_overlap(solver.solve(0.0), beam, _solver=solver)
    assert res.r0 >= at_zero.r0
    assert res.solve_residual < 1e-10


def test_find_resonance_window_edge_error():
    spec = lat.single_layer("square", 0.8, 1)
    with pytest.raises(dip.ResonanceWindowError):
        dip.find_resonance(spec, dip.BeamSpec(waist=4.0), delta_window=(5.0, 9.0))


def test_find_resonance_requires_41_points():
    spec = lat.single_layer("square", 0.8, 1)
    with pytest.raises(ValueError):
        dip.find_resonance(spec, dip.BeamSpec(waist=4.0), coarse_points=21)


def test_regression_35x35_superwavelength_layer():
    # frozen resonance scan of the reference single-layer configuration
    spec = lat.single_layer("square", 1.3416, 35)
    delta_star, res = dip.find_resonance(spec, dip.BeamSpec(waist=14.0))
    assert abs(delta_star) < 3.0 * spec.gamma0
    assert abs(delta_star - (-0.1045)) < 5e-3
    # single lossy layer: reflectivity close to the channel-theory |r1|^2
    r1 = -1.0 / (1.0 + sum(o.gamma_m for o in
                           lat.radiative_orders(spec, include_zero=False))
                 / spec.gamma0)
    assert abs(res.r0 - r1 * r1) / (r1 * r1) < 0.10


# ---------------------------------------------------------------------------
# reflectivity map


def test_map_smoke_and_schema():
    table = dip.reflectivity_map_numeric(
        "square", True, [1.25, 1.35], [2.5, 3.0], n_side=6, w_rule=("wol", 0.35))
    assert table.columns == ("a_z", "a", "delta_star", "r0", "t2", "residual")
    assert table.data.shape == (4, 6)
    # rows follow the (a_z outer, a inner) sweep order
    np.testing.assert_allclose(table.column("a_z"), [2.5, 2.5, 3.0, 3.0])
    assert np.all(table.column("r0") > 0.0)
    assert np.all(table.column("residual") < 1e-10)


def test_map_rejects_empty_axes():
    with pytest.raises(ValueError):
        dip.reflectivity_map_numeric("square", True, [], [3.0], 6, ("wol", 0.3))


def test_map_subwavelength_column_uniformly_high():
    # no radiative diffraction orders: high reflectivity for any spacing
    table = dip.reflectivity_map_numeric(
        "square", False, [0.8], [2.0, 2.25, 2.5], n_side=10, w_rule=("wol", 0.3))
    assert np.all(table.column("r0") >= 0.85)
