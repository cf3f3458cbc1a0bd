"""Ensembles on spheres S^{n-1} = SO(n) / SO(n-1).

tau sends X in so(n) to the linear vector field x -> X x.  Vector fields are
bracketed with the convention [f, g] = Df g - Dg f, so for linear fields
[tau(A), tau(B)](x) = (AB - BA) x = -tau([A, B]) under the package bracket.
Observations on the sphere come from averaging the group coefficients over
the stabilizer of e_1.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .coefficients import CoefficientFamily, phi_batch
from .ensemble import (
    EnsembleSystem,
    ParamGrid,
    ParametrizationSet,
    integrate_states,
)
from .liecore import AlgebraElement, FamilyMismatchError, expm
from .structure import GeneratorSet, catalog_set

TOL_SPHERE = 1e-10
TOL_NORM = 1e-9
STABILIZER_POINTS = 64


@dataclass(frozen=True, eq=False)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        x = np.array(self.coords, dtype=float)
        if x.ndim != 1 or abs(np.linalg.norm(x) - 1.0) > TOL_SPHERE:
            raise ValueError("sphere point must be a unit vector")
        x.setflags(write=False)
        object.__setattr__(self, "coords", x)

    @property
    def n(self) -> int:
        return len(self.coords)


def _coords(x) -> np.ndarray:
    return x.coords if isinstance(x, SpherePoint) else np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class SphereProfile:
    grid: ParamGrid
    points: np.ndarray  # (Q, n)

    def __post_init__(self):
        pts = np.array([_coords(p) for p in self.points], dtype=float)
        if pts.ndim != 2 or pts.shape[0] != self.grid.size:
            raise ValueError("sphere profile needs one point per grid node")
        if np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) > TOL_SPHERE:
            raise ValueError("sphere profile points must be unit vectors")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[1]


def _so_matrix(x) -> np.ndarray:
    if isinstance(x, AlgebraElement):
        if x.family != "so":
            raise FamilyMismatchError(f"tau is defined for so(n), got {x.family}")
        return x.matrix
    return np.asarray(x, dtype=float)


def tau_field(x_alg, x) -> np.ndarray:
    """Induced vector field tau(X)(x) = X x."""
    return _so_matrix(x_alg) @ _coords(x)


def linear_field_bracket(a, b, x) -> np.ndarray:
    """[tau(A), tau(B)](x) = D(Ax) Bx - D(Bx) Ax = (AB - BA) x."""
    am, bm = _so_matrix(a), _so_matrix(b)
    xv = _coords(x)
    return am @ (bm @ xv) - bm @ (am @ xv)


def section(x) -> np.ndarray:
    """Rotation g in SO(n) with g e_1 = x, built from one Householder reflection.

    The reflection is paired with a sign flip that restores det = +1; the
    branch on x_1 keeps the reflection vector away from zero, so x = -e_1
    needs no special handling (it maps to diag(-1, 1, ..., 1, -1)).
    """
    xv = _coords(x)
    n = len(xv)
    e1 = np.zeros(n)
    e1[0] = 1.0
    if xv[0] <= 0:
        v = e1 - xv
        flip = np.ones(n)
        flip[-1] = -1.0
    else:
        v = e1 + xv
        flip = np.ones(n)
        flip[0] = -1.0
    p = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return p * flip[None, :]


def stabilizer_rotation(theta: float, n: int = 3) -> np.ndarray:
    """Rotation by theta in the (e_2, e_3) plane, fixing e_1."""
    h = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    h[1, 1], h[1, 2], h[2, 1], h[2, 2] = c, s, -s, c
    return h


def average_over_stabilizer(fam: CoefficientFamily, i: int, x, n_points: int = STABILIZER_POINTS,
                            j: int = 0, g: np.ndarray | None = None) -> float:
    """Trapezoid average over theta in [0, 2 pi) of phi^{ij}(g h(theta)), g e_1 = x.

    ``g`` overrides the built-in section (it must still map e_1 to x).
    """
    if fam.family != "so" or fam.n != 3:
        raise ValueError("stabilizer averaging is implemented for SO(3) acting on S^2")
    xv = _coords(x)
    g = section(xv) if g is None else np.asarray(g, dtype=float)
    if np.max(np.abs(g[:, 0] - xv)) > 1e-10:
        raise ValueError("section does not map e_1 to x")
    thetas = 2.0 * math.pi * np.arange(n_points) / n_points
    hs = np.stack([stabilizer_rotation(t) for t in thetas])
    vals = phi_batch(fam, g @ hs)[:, i, j]
    return float(np.mean(vals))


def phibar(x) -> np.ndarray:
    """Closed form of the averaged coefficients on S^2: 2 x."""
    return 2.0 * _coords(x)


def _levi_civita(i: int, j: int, k: int) -> float:
    return float(np.linalg.det(np.eye(3)[[i, j, k]]))


def _third(i: int, j: int) -> int | None:
    return None if i == j else 3 - i - j


def _random_sphere(rng, n: int) -> np.ndarray:
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


@dataclass
class HomogeneousReport:
    bracket: dict
    derivative: dict
    spanning: dict
    samples: int

    @property
    def passed(self) -> bool:
        return self.bracket["pass"] and self.derivative["pass"] and self.spanning["pass"]

    def to_dict(self) -> dict:
        return {
            "bracket": self.bracket,
            "derivative": self.derivative,
            "spanning": self.spanning,
            "samples": self.samples,
            "passed": self.passed,
        }


def verify_homogeneous_relations(n_samples: int = 100, tol: float = 1e-10, seed: int = 0) -> HomogeneousReport:
    """Check the S^2 relations at random points plus the poles and an equator point.

    [tau(X_i), tau(X_j)] = -det(e_i, e_j, e_k) tau(X_k) and
    tau(X_i) phibar^j = det(e_i, e_j, e_k) phibar^k.
    """
    rng = np.random.default_rng(seed)
    fixed = [np.array(p, dtype=float) for p in ([1, 0, 0], [-1, 0, 0], [0, 0, 1], [0, 0, -1], [0, 1, 0])]
    points = fixed + [_random_sphere(rng, 3) for _ in range(n_samples)]
    xs = catalog_set("so", 3).stack
    worst_b, wit_b, worst_d, wit_d = 0.0, None, 0.0, None
    min_rank_t, min_rank_d = 3, 3
    for s, x in enumerate(points):
        for i in range(3):
            for j in range(3):
                k = _third(i, j)
                lhs = linear_field_bracket(xs[i], xs[j], x)
                rhs = np.zeros(3) if k is None else -_levi_civita(i, j, k) * tau_field(xs[k], x)
                err = float(np.max(np.abs(lhs - rhs)))
                if err > worst_b:
                    worst_b, wit_b = err, {"point": x.tolist(), "i": i, "j": j}
                # directional derivative of phibar^j = 2 x_j along X_i x
                deriv = 2.0 * tau_field(xs[i], x)[j]
                expected = 0.0 if k is None else _levi_civita(i, j, k) * phibar(x)[k]
                err = abs(deriv - expected)
                if err > worst_d:
                    worst_d, wit_d = err, {"point": x.tolist(), "i": i, "j": j}
        fields = np.stack([tau_field(xs[i], x) for i in range(3)])
        min_rank_t = min(min_rank_t, int(np.linalg.matrix_rank(fields, tol=1e-10)))
        # differentials of phibar^j = 2 x_j restricted to the tangent plane
        tangent = np.linalg.svd(np.eye(3) - np.outer(x, x))[0][:, :2]
        min_rank_d = min(min_rank_d, int(np.linalg.matrix_rank(2.0 * np.eye(3) @ tangent, tol=1e-10)))
    return HomogeneousReport(
        {"pass": worst_b <= tol, "max_residual": worst_b, "witness": wit_b},
        {"pass": worst_d <= tol, "max_residual": worst_d, "witness": wit_d},
        {"pass": min_rank_t == 2 and min_rank_d == 2, "field_rank": min_rank_t, "differential_rank": min_rank_d},
        len(points),
    )


@dataclass(frozen=True, eq=False)
class SphereTrajectory:
    grid: ParamGrid
    times: np.ndarray
    points: np.ndarray  # (N+1, Q, n)
    max_norm_drift: float

    def profile(self, k: int) -> SphereProfile:
        return SphereProfile(self.grid, self.points[k])


def integrate_sphere_ensemble(grid: ParamGrid, init: SphereProfile, u, T: float, dt: float,
                              generators: GeneratorSet | None = None,
                              params: ParametrizationSet | None = None,
                              tol_norm: float = TOL_NORM) -> SphereTrajectory:
    """Per node x' = A(t, sigma) x, advanced by x <- exp(Omega) x with the RKMK4 increment."""
    if not init.grid.same_as(grid):
        raise ValueError("initial sphere profile is on a different grid")
    generators = catalog_set("so", init.n) if generators is None else generators
    if generators.family != "so" or generators.n != init.n:
        raise FamilyMismatchError("sphere ensembles need so(n) generators")
    params = ParametrizationSet.from_expressions(["sigma"]) if params is None else params
    system = EnsembleSystem(grid, generators, params, orientation="right")
    times, states, worst = integrate_states(
        system, np.array(init.points)[:, :, None], u, T, dt,
        lambda x: np.abs(np.linalg.norm(x[:, :, 0], axis=1) - 1.0), 100.0 * tol_norm, "sphere",
    )
    return SphereTrajectory(grid, times, states[:, :, :, 0], worst)


def rotate(x, a: np.ndarray) -> np.ndarray:
    """exp(A) x for a generator-space matrix A."""
    return expm(np.asarray(a)) @ _coords(x)


__all__ = [
    "HomogeneousReport",
    "SpherePoint",
    "SphereProfile",
    "SphereTrajectory",
    "average_over_stabilizer",
    "integrate_sphere_ensemble",
    "linear_field_bracket",
    "phibar",
    "section",
    "stabilizer_rotation",
    "tau_field",
    "verify_homogeneous_relations",
]
