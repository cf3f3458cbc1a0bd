import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lieensemble.coefficients import CoefficientFamily, center_elements
from lieensemble.ensemble import (
    ControlSignal,
    EnsembleSystem,
    IntegrationError,
    ParamGrid,
    ParametrizationSet,
    PiecewiseConstantInput,
    Profile,
    SmoothInput,
    build_grid,
    check_separating,
    constant_profile,
    ensemble_output,
    integrate_ensemble,
    output_series,
    profile_sup_distance,
    rkmk4_increment,
    step_count,
)
from lieensemble.liecore import expm, random_group_element
from lieensemble.monomials import MonomialDictionary
from lieensemble.structure import catalog_set

SO3 = catalog_set("so", 3)
X = SO3.stack


def sigma_params(*texts):
    return ParametrizationSet.from_expressions(texts or ("sigma",))


def so3_system(grid, texts=("sigma",), drift=None):
    return EnsembleSystem(grid, SO3, sigma_params(*texts), drift)


def hat(v):
    return np.einsum("i,iab->ab", np.asarray(v, dtype=float), X)


# -- grids ---------------------------------------------------------------------


def test_two_point_trapezoid():
    g = build_grid(1, 2, 2, "uniform-trapezoid")
    np.testing.assert_array_equal(g.nodes, [1.0, 2.0])
    np.testing.assert_array_equal(g.weights, [0.5, 0.5])


def test_gauss_integrates_sigma():
    g = build_grid(1, 2, 5)
    assert g.weights @ g.nodes == pytest.approx(1.5, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 5), st.floats(0.01, 5), st.integers(2, 40), st.sampled_from(["gauss-legendre", "uniform-trapezoid"]))
def test_weights_sum(a, width, q, rule):
    g = build_grid(a, a + width, q, rule)
    assert abs(g.weights.sum() - width) <= 1e-12 * max(1.0, width)
    assert np.all(np.diff(g.nodes) > 0)


@pytest.mark.parametrize("args", [(2, 1, 5), (0, 1, 5), (1, 2, 1), (-1, 1, 3)])
def test_invalid_grid(args):
    with pytest.raises(ValueError):
        build_grid(*args)


def test_unknown_rule():
    with pytest.raises(ValueError):
        build_grid(1, 2, 3, "simpson")


def test_symmetric_grid_allowed_without_positivity():
    g = build_grid(-1, 1, 4, require_positive=False)
    assert g.nodes[0] < 0


def test_grid_rejects_bad_weights():
    with pytest.raises(ValueError):
        ParamGrid(1.0, 2.0, np.array([1.0, 2.0]), np.array([0.5, 0.6]), "custom")


def test_node_subgrid():
    g = build_grid(1, 2, 5)
    sub = g.node(2)
    assert sub.size == 1 and sub.nodes[0] == g.nodes[2] and sub.weights[0] == g.weights[2]


# -- separating sets -------------------------------------------------------------


def test_sigma_separating():
    v = check_separating(sigma_params(), build_grid(1, 2, 9))
    assert v.separating and v.nonvanishing and v.passed


def test_even_function_not_separating():
    grid = build_grid(-1, 1, 6, require_positive=False)
    v = check_separating(sigma_params("sigma^2"), grid)
    assert not v.separating
    i, j = v.witness
    assert grid.nodes[i] == pytest.approx(-grid.nodes[j], abs=1e-14)


def test_squared_on_positive_interval():
    assert check_separating(sigma_params(), build_grid(1, 2, 9), squared=True).separating


def test_squared_flag_on_symmetric_grid():
    grid = build_grid(-1, 1, 6, require_positive=False)
    v = check_separating(sigma_params("sigma"), grid, squared=True)
    assert v.separating is False


def test_vanishing_designated():
    grid = build_grid(-1, 1, 5, require_positive=False)
    assert not check_separating(sigma_params("sigma"), grid).nonvanishing


# -- integration -----------------------------------------------------------------


def test_step_count():
    assert step_count(1.0, 1e-3) == 1000
    assert step_count(0.0, 0.1) == 0
    with pytest.raises(ValueError):
        step_count(1.0, 0.3)
    with pytest.raises(ValueError):
        step_count(1.0, 0.0)


def test_zero_control_constant():
    grid = build_grid(1, 2, 4)
    g0 = random_group_element("so", 3, np.random.default_rng(0))
    init = constant_profile(grid, g0)
    traj = integrate_ensemble(so3_system(grid), init, None, 0.5, 0.1)
    assert len(traj) == 6
    for k in range(len(traj)):
        np.testing.assert_array_equal(traj.states[k], init.states)


def test_zero_horizon():
    grid = build_grid(1, 2, 3)
    traj = integrate_ensemble(so3_system(grid), constant_profile(grid, np.eye(3)), None, 0.0, 0.1)
    assert len(traj) == 1


def test_constant_input_closed_form(rng):
    grid = build_grid(1, 2, 3)
    g0 = random_group_element("so", 3, rng).matrix
    nu, T = 0.7, 1.3
    u = PiecewiseConstantInput(((1, 0, nu, T),))
    traj = integrate_ensemble(so3_system(grid), constant_profile(grid, g0), u, T, 0.1)
    for q, s in enumerate(grid.nodes):
        expected = g0 @ expm(T * nu * s * X[1])
        np.testing.assert_allclose(traj.final.states[q], expected, atol=1e-13)


def test_piecewise_composition_off_grid_switch(rng):
    grid = build_grid(1, 2, 3)
    ps = sigma_params("sigma", "sigma^2")
    system = EnsembleSystem(grid, SO3, ps)
    u = PiecewiseConstantInput(((0, 0, 1.1, 0.33), (2, 1, -0.6, 1.0)))
    traj = integrate_ensemble(system, constant_profile(grid, np.eye(3)), u, 1.0, 0.1)
    for q, s in enumerate(grid.nodes):
        expected = expm(0.33 * 1.1 * s * X[0]) @ expm(0.67 * -0.6 * s**2 * X[2])
        np.testing.assert_allclose(traj.final.states[q], expected, atol=1e-13)


def test_piecewise_validation():
    with pytest.raises(ValueError):
        PiecewiseConstantInput(((0, 0, 1.0, 0.5), (0, 0, 1.0, 0.5)))
    with pytest.raises(ValueError):
        PiecewiseConstantInput(((0, 0, 1.0, 0.0),))
    grid = build_grid(1, 2, 3)
    with pytest.raises(ValueError):
        integrate_ensemble(so3_system(grid), constant_profile(grid, np.eye(3)),
                           PiecewiseConstantInput(((5, 0, 1.0, 1.0),)), 1.0, 0.1)


def rotating_frame(b, w, T, dt):
    """Constant input B seen in a frame rotating with W; exact solution available."""
    grid = build_grid(1, 2, 2)
    bm, wm = hat(b), hat(w)
    system = EnsembleSystem(grid, SO3, sigma_params("1"))

    def coords(t):
        a = expm(-t * wm) @ bm @ expm(t * wm)
        return (np.einsum("ab,iab->i", a, X) / 2.0)[:, None]

    traj = integrate_ensemble(system, constant_profile(grid, np.eye(3)), SmoothInput(coords), T, dt)
    exact = expm(T * (bm - wm)) @ expm(T * wm)
    return np.linalg.norm(traj.final.states[0] - exact), traj.max_deviation


def test_fourth_order():
    errs = [rotating_frame((1.2, -0.7, 0.9), (0, 0, 2.0), 1.0, dt)[0] for dt in (1e-2, 5e-3, 2.5e-3)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(12 <= r <= 20 for r in ratios), ratios


def test_constant_field_is_exact_under_rkmk4():
    a = hat((0.3, -1.1, 0.8))
    omega = rkmk4_increment(a, a, a, 0.01)
    np.testing.assert_allclose(omega, 0.01 * a, atol=1e-16)


def test_group_drift_small():
    _, dev = rotating_frame((1.0, 0.5, -1.0), (0.3, 0.0, 1.5), 1.0, 1e-3)
    assert dev <= 1e-9


def test_drift_term():
    grid = build_grid(1, 2, 3)
    system = so3_system(grid, drift=lambda s: s * X[2])
    traj = integrate_ensemble(system, constant_profile(grid, np.eye(3)), None, 0.8, 0.1)
    for q, s in enumerate(grid.nodes):
        np.testing.assert_allclose(traj.final.states[q], expm(0.8 * s * X[2]), atol=1e-13)


def smooth_signal(seed=3):
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, 1.0, 11)
    mono = MonomialDictionary.graded(1, 2, min_degree=1)
    return ControlSignal(times, mono, rng.normal(size=(3, len(mono), len(times))))


@pytest.mark.parametrize("family,n", [("so", 3), ("su", 2), ("sl", 2)])
def test_nodes_decouple_bitwise(family, n, rng):
    grid = build_grid(1, 2, 5)
    gens = catalog_set(family, n)
    system = EnsembleSystem(grid, gens, sigma_params())
    init = Profile(grid, np.stack([random_group_element(family, n, rng).matrix for _ in range(5)]), family)
    u = smooth_signal() if len(gens) == 3 else None
    full = integrate_ensemble(system, init, u, 0.5, 0.05)
    for q in range(grid.size):
        sub = grid.node(q)
        one = integrate_ensemble(EnsembleSystem(sub, gens, sigma_params()),
                                 Profile(sub, init.states[q:q + 1], family), u, 0.5, 0.05)
        assert np.array_equal(one.states[:, 0], full.states[:, q])


def test_center_equivariance(rng):
    grid = build_grid(1, 2, 4)
    gens = catalog_set("su", 2)
    fam = CoefficientFamily(gens)
    system = EnsembleSystem(grid, gens, sigma_params())
    init = Profile(grid, np.stack([random_group_element("su", 2, rng).matrix for _ in range(4)]), "su")
    z = center_elements("su", 2).elements[1].matrix
    shifted = Profile(grid, init.states @ z, "su")
    u = smooth_signal()
    a = integrate_ensemble(system, init, u, 0.5, 0.01)
    b = integrate_ensemble(system, shifted, u, 0.5, 0.01)
    assert np.max(np.abs(a.states @ z - b.states)) <= 1e-10
    assert np.max(np.abs(output_series(a, fam) - output_series(b, fam))) <= 1e-10


def test_signal_shape_checked():
    grid = build_grid(1, 2, 3)
    sig = ControlSignal(np.array([0.0, 1.0]), MonomialDictionary.graded(1, 1), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        integrate_ensemble(so3_system(grid), constant_profile(grid, np.eye(3)), sig, 1.0, 0.5)


def test_signal_round_trip():
    sig = smooth_signal()
    back = ControlSignal.from_dict(sig.to_dict())
    assert np.array_equal(back.coeffs, sig.coeffs) and back.monomials == sig.monomials
    np.testing.assert_allclose(sig.at(0.05), 0.5 * (sig.coeffs[:, :, 0] + sig.coeffs[:, :, 1]))


def test_abort_when_leaving_group():
    grid = build_grid(1, 2, 2)
    system = EnsembleSystem(grid, SO3, sigma_params())
    u = SmoothInput(lambda t: np.full((3, 1), 400.0))
    with pytest.raises(IntegrationError) as info:
        integrate_ensemble(system, constant_profile(grid, np.eye(3)), u, 1.0, 0.5, tol_grp=1e-16)
    assert info.value.node is not None and info.value.time is not None


def test_profile_mismatch():
    grid = build_grid(1, 2, 3)
    with pytest.raises(ValueError):
        integrate_ensemble(so3_system(grid), constant_profile(build_grid(1, 2, 4), np.eye(3)), None, 1.0, 0.5)
    with pytest.raises(ValueError):
        Profile(grid, np.stack([2 * np.eye(3)] * 3), "so")


# -- outputs and distances -------------------------------------------------------


def test_identity_output():
    grid = build_grid(1, 2, 7)
    y = ensemble_output(constant_profile(grid, np.eye(3)), CoefficientFamily(SO3))
    np.testing.assert_allclose(y, 2 * np.eye(3), atol=1e-13)


def test_single_node_output(rng):
    fam = CoefficientFamily(SO3)
    grid = build_grid(1, 2, 5).node(1)
    g = random_group_element("so", 3, rng).matrix
    from lieensemble.coefficients import phi_matrix

    np.testing.assert_array_equal(ensemble_output(Profile(grid, g[None], "so"), fam), grid.weights[0] * phi_matrix(fam, g))


def test_distance_first_order(rng):
    grid = build_grid(1, 2, 4)
    p1 = Profile(grid, np.stack([random_group_element("so", 3, rng).matrix for _ in range(4)]), "so")
    x = hat(rng.normal(size=3))
    x /= np.linalg.norm(x)
    for eps in (1e-2, 1e-3, 1e-4):
        states = np.array(p1.states)
        states[2] = states[2] @ expm(eps * x)
        p2 = Profile(grid, states, "so")
        d = profile_sup_distance(p1, p2)
        assert abs(d - eps) <= eps**2
        assert d == profile_sup_distance(p2, p1)
    assert profile_sup_distance(p1, p1) == 0.0


def test_distance_grid_mismatch():
    with pytest.raises(ValueError):
        profile_sup_distance(constant_profile(build_grid(1, 2, 3), np.eye(3)),
                             constant_profile(build_grid(1, 2, 4), np.eye(3)))
