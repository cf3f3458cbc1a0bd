import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lieensemble.coefficients import CoefficientFamily
from lieensemble.ensemble import (
    ControlSignal,
    EnsembleSystem,
    ParametrizationSet,
    PiecewiseConstantInput,
    Profile,
    build_grid,
    integrate_ensemble,
)
from lieensemble.homogeneous import (
    SpherePoint,
    SphereProfile,
    average_over_stabilizer,
    integrate_sphere_ensemble,
    linear_field_bracket,
    phibar,
    rotate,
    section,
    stabilizer_rotation,
    tau_field,
    verify_homogeneous_relations,
)
from lieensemble.liecore import FamilyMismatchError, expm
from lieensemble.monomials import MonomialDictionary
from lieensemble.structure import catalog_set

SO3 = catalog_set("so", 3)
X = SO3.stack
FAM = CoefficientFamily(SO3)
SIGMA = ParametrizationSet.from_expressions(["sigma"])

unit_vectors = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))


def test_tau_x1_closed_form(rng):
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    np.testing.assert_array_equal(tau_field(SO3[0], x), [0.0, x[2], -x[1]])


def test_tau_omega_closed_form(rng):
    omegas = catalog_set("so", 4, "omega")
    x = rng.normal(size=4)
    x /= np.linalg.norm(x)
    k = 0
    for i in range(4):
        for j in range(i + 1, 4):
            expected = np.zeros(4)
            expected[i] += x[j]
            expected[j] -= x[i]
            np.testing.assert_allclose(tau_field(omegas[k], x), expected, atol=1e-15)
            k += 1


@settings(max_examples=50, deadline=None)
@given(unit_vectors, st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_tangency(x, coords):
    a = np.einsum("i,iab->ab", np.asarray(coords), X)
    assert abs(x @ tau_field(a, x)) <= 1e-12


def test_tau_family_mismatch():
    with pytest.raises(FamilyMismatchError):
        tau_field(catalog_set("sl", 2)[0], np.array([1.0, 0.0]))


def test_bracket_sign(rng):
    for _ in range(100):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        np.testing.assert_allclose(linear_field_bracket(SO3[0], SO3[1], x), -tau_field(SO3[2], x), atol=1e-15)


def test_derivative_example(rng):
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    h = 1e-6
    fd = (phibar(expm(h * X[0]) @ x)[1] - phibar(expm(-h * X[0]) @ x)[1]) / (2 * h)
    assert fd == pytest.approx(phibar(x)[2], abs=1e-8)


def test_sphere_point_validation():
    assert SpherePoint([0.0, 1.0, 0.0]).n == 3
    with pytest.raises(ValueError):
        SpherePoint([1.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        SphereProfile(build_grid(1, 2, 2), np.array([[1.0, 0.0, 0.0]]))


@pytest.mark.parametrize("x", [[1, 0, 0], [-1, 0, 0], [0, 0, 1], [0.6, 0.8, 0.0], [-0.6, 0.0, -0.8]])
def test_section_is_rotation(x):
    x = np.asarray(x, dtype=float)
    g = section(x)
    np.testing.assert_allclose(g.T @ g, np.eye(3), atol=1e-15)
    assert np.linalg.det(g) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(g[:, 0], x, atol=1e-15)


def test_antipode_section():
    np.testing.assert_array_equal(section([-1.0, 0.0, 0.0]), np.diag([-1.0, 1.0, -1.0]))


def test_stabilizer_fixes_e1():
    h = stabilizer_rotation(0.7)
    np.testing.assert_array_equal(h[:, 0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(h.T @ h, np.eye(3), atol=1e-15)


def test_average_closed_form(rng):
    for _ in range(100):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        for i in range(3):
            assert average_over_stabilizer(FAM, i, x) == pytest.approx(2 * x[i], abs=1e-12)


def test_average_other_columns_vanish(rng):
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    for i in range(3):
        for j in (1, 2):
            assert abs(average_over_stabilizer(FAM, i, x, j=j)) <= 1e-12


def test_average_section_independent(rng):
    for _ in range(10):
        x = rng.normal(size=3)
        x /= np.linalg.norm(x)
        g2 = section(x) @ stabilizer_rotation(rng.uniform(0, 2 * math.pi))
        for i in range(3):
            a = average_over_stabilizer(FAM, i, x)
            b = average_over_stabilizer(FAM, i, x, g=g2)
            assert a == pytest.approx(b, abs=1e-12)


def test_average_rejects_bad_input():
    with pytest.raises(ValueError):
        average_over_stabilizer(FAM, 0, [1.0, 0.0, 0.0], g=np.eye(3)[:, [1, 0, 2]])
    with pytest.raises(ValueError):
        average_over_stabilizer(CoefficientFamily(catalog_set("su", 2)), 0, [1.0, 0.0, 0.0])


def test_relations_report():
    rep = verify_homogeneous_relations(100)
    assert rep.passed and rep.samples == 105
    assert rep.bracket["max_residual"] <= 1e-10
    assert rep.derivative["max_residual"] <= 1e-10
    assert rep.spanning["field_rank"] == 2 and rep.spanning["differential_rank"] == 2
    assert rep.to_dict()["passed"]


def test_rotation_closed_form():
    grid = build_grid(1, 2, 3)
    nu, T = 0.8, 1.5
    init = SphereProfile(grid, np.tile([1.0, 0.0, 0.0], (3, 1)))
    traj = integrate_sphere_ensemble(grid, init, PiecewiseConstantInput(((2, 0, nu, T),)), T, 0.1)
    for q, s in enumerate(grid.nodes):
        np.testing.assert_allclose(traj.points[-1, q], rotate([1.0, 0.0, 0.0], T * nu * s * X[2]), atol=1e-14)


def test_stabilizer_direction_fixes_e1():
    grid = build_grid(1, 2, 3)
    init = SphereProfile(grid, np.tile([1.0, 0.0, 0.0], (3, 1)))
    traj = integrate_sphere_ensemble(grid, init, PiecewiseConstantInput(((0, 0, 2.0, 0.4), (0, 0, -1.0, 1.0))), 1.0, 0.1)
    np.testing.assert_array_equal(traj.points[-1], init.points)


def test_zero_control_fixed(rng):
    grid = build_grid(1, 2, 4)
    pts = rng.normal(size=(4, 3))
    init = SphereProfile(grid, pts / np.linalg.norm(pts, axis=1, keepdims=True))
    traj = integrate_sphere_ensemble(grid, init, None, 0.5, 0.1)
    np.testing.assert_array_equal(traj.points[-1], init.points)


def random_signal(rng, horizon=1.0):
    times = np.linspace(0.0, horizon, 21)
    mono = MonomialDictionary.graded(1, 2, min_degree=1)
    return ControlSignal(times, mono, rng.normal(size=(3, len(mono), len(times))))


def test_norm_preserved(rng):
    grid = build_grid(1, 2, 5)
    pts = rng.normal(size=(5, 3))
    init = SphereProfile(grid, pts / np.linalg.norm(pts, axis=1, keepdims=True))
    traj = integrate_sphere_ensemble(grid, init, random_signal(rng), 1.0, 1e-2)
    assert traj.max_norm_drift <= 1e-9
    assert np.max(np.abs(np.linalg.norm(traj.points, axis=2) - 1)) <= 1e-9


def test_group_sphere_equivariance(rng):
    grid = build_grid(1, 2, 5)
    pts = rng.normal(size=(5, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    u = random_signal(rng)
    sphere = integrate_sphere_ensemble(grid, SphereProfile(grid, pts), u, 1.0, 1e-3)
    g0 = Profile(grid, np.stack([section(p) for p in pts]), "so")
    group = integrate_ensemble(EnsembleSystem(grid, SO3, SIGMA, orientation="right"), g0, u, 1.0, 1e-3)
    acted = group.states[:, :, :, 0]
    assert np.max(np.abs(acted - sphere.points)) <= 1e-7


def test_sphere_rejects_wrong_generators():
    grid = build_grid(1, 2, 2)
    init = SphereProfile(grid, np.tile([1.0, 0.0, 0.0], (2, 1)))
    with pytest.raises(FamilyMismatchError):
        integrate_sphere_ensemble(grid, init, None, 1.0, 0.5, generators=catalog_set("su", 2))
    with pytest.raises(ValueError):
        integrate_sphere_ensemble(build_grid(1, 2, 3), init, None, 1.0, 0.5)
