"""Constructive tracking of a target profile trajectory.

A target trajectory is decomposed in the generator frame,

    d/dt g = g (Z(sigma) + sum_i c_i(t, sigma) X_i),

the coefficients c_i are approximated by polynomials in the parametrization
functions (with the designated rho factored out, so every monomial has degree
at least one), and the resulting broadcast signal drives the extended system.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import time
from typing import Callable, Sequence
import warnings

import numpy as np
import scipy.linalg

from .ensemble import (
    ControlSignal,
    EnsembleSystem,
    ParamGrid,
    ParametrizationSet,
    Profile,
    Trajectory,
    integrate_ensemble,
    step_count,
)
from .liecore import GroupElement, algebra_dimension, coordinates_batch
from .monomials import MonomialDictionary
from .structure import GeneratorSet, span_rank

TOL_FRAME = 1e-8
PRINCIPAL_LIMIT = math.pi / 2


class PrincipalBranchError(ArithmeticError):
    def __init__(self, message, step=None, node=None):
        super().__init__(message)
        self.step = step
        self.node = node


class FrameResidualError(ArithmeticError):
    pass


class RankDeficientWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TargetTrajectory:
    grid: ParamGrid
    times: np.ndarray
    states: np.ndarray  # (N+1, Q, n, n)
    family: str
    generator: Callable | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        st = np.asarray(self.states)
        if st.ndim != 4 or st.shape[0] != len(t) or st.shape[1] != self.grid.size:
            raise ValueError(f"target states have shape {st.shape}")
        if len(t) > 2:
            steps = np.diff(t)
            if np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, t[-1]):
                raise ValueError("target time grid must be uniform")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", st)

    @classmethod
    def from_generator(cls, grid: ParamGrid, fn: Callable, T: float, dt: float,
                       family: str) -> "TargetTrajectory":
        """Sample ``fn(t, sigma)`` (a GroupElement or matrix) on the time and node grids."""
        steps = step_count(T, dt)
        times = np.array([k * dt for k in range(steps)] + [T]) if steps else np.array([0.0])
        rows = []
        for t in times:
            row = []
            for s in grid.nodes:
                g = fn(float(t), float(s))
                row.append(g.matrix if isinstance(g, GroupElement) else np.asarray(g))
            rows.append(row)
        return cls(grid, times, np.array(rows), family, fn)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def profile(self, k: int) -> Profile:
        return Profile(self.grid, self.states[k], self.family, tol=None)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """c[i, k, q] = c_i(t_k, sigma_q) together with the per-interval frame residual."""

    values: np.ndarray
    times: np.ndarray
    residual: np.ndarray  # (N, Q)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0


def log_near_identity(d: np.ndarray, series_radius: float = 0.1) -> np.ndarray:
    """Principal logarithm of a stack of matrices.

    Close to the identity a batched Mercator series is used; anything farther
    out is handed to scipy's logm one matrix at a time.
    """
    d = np.asarray(d)
    n = d.shape[-1]
    e = d - np.eye(n)
    norms = np.linalg.norm(e, ord=2, axis=(-2, -1)) if e.size else np.zeros(d.shape[:-2])
    out = np.empty_like(e)
    near = norms <= series_radius
    if np.any(near):
        en = e[near]
        acc = en.copy()
        power = en.copy()
        rad = float(np.max(norms[near]))
        terms = 1 if rad == 0 else max(1, int(math.ceil(math.log(1e-18) / math.log(rad))))
        for k in range(2, terms + 1):
            power = power @ en
            acc = acc + ((-1) ** (k + 1) / k) * power
        out[near] = acc
    for idx in zip(*np.nonzero(~near)):
        out[idx] = scipy.linalg.logm(d[idx])
    if not np.iscomplexobj(d):
        out = out.real
    return out


def _algebra_coords(S: GeneratorSet, mats: np.ndarray) -> np.ndarray:
    return coordinates_batch(S.descriptor, mats)


def _frame_solve(S: GeneratorSet, v: np.ndarray):
    """Minimal-norm B_theta least squares V ~ sum c_i X_i for a stack v (..., n, n)."""
    gen = _algebra_coords(S, S.stack).T  # (dim, m)
    coords = _algebra_coords(S, v.reshape((-1,) + v.shape[-2:]))  # (K, dim)
    pinv = np.linalg.pinv(gen)
    c = coords @ pinv.T  # (K, m)
    # measured in matrix space, so components outside the algebra also count
    flat = v.reshape((-1,) + v.shape[-2:])
    recon = np.einsum("ki,iab->kab", c, S.stack)
    resid = np.linalg.norm(flat - recon, axis=(1, 2))
    return c.reshape(v.shape[:-2] + (len(S),)), resid.reshape(v.shape[:-2])


def extract_coefficients(target: TargetTrajectory, drift: Callable | None, S: GeneratorSet,
                         tol_frame: float = TOL_FRAME) -> CoefficientField:
    """Frame coefficients of a target from its discrete body velocities.

    The interval velocity log(g_k^-1 g_{k+1}) / dt (second-order accurate at
    the interval midpoint) is averaged onto the time samples; the two end
    samples are extrapolated linearly.
    """
    if span_rank(S) < algebra_dimension(S.family, S.n):
        raise ValueError("generator set does not span the algebra")
    times = target.times
    steps = len(times) - 1
    q = target.grid.size
    if steps == 0:
        return CoefficientField(np.zeros((len(S), 1, q)), times, np.zeros((0, q)))
    dt = target.dt
    g = target.states
    disp = np.linalg.solve(g[:-1], g[1:])  # g_k^-1 g_{k+1}
    logs = log_near_identity(disp)
    lnorm = np.linalg.norm(logs, ord=2, axis=(-2, -1))
    if np.max(lnorm) >= PRINCIPAL_LIMIT:
        k, node = np.unravel_index(np.argmax(lnorm), lnorm.shape)
        raise PrincipalBranchError(
            f"displacement logarithm norm {lnorm[k, node]:.3f} exceeds pi/2 at step {k}, node {node}",
            step=int(k), node=int(node),
        )
    v = logs / dt
    if drift is not None:
        z = np.stack([np.asarray(getattr(drift(float(s)), "matrix", drift(float(s)))) for s in target.grid.nodes])
        v = v - z[None]
    c_mid, resid = _frame_solve(S, v)  # (N, Q, m), (N, Q)
    if np.max(resid) > tol_frame:
        raise FrameResidualError(f"frame residual {np.max(resid):.3e} exceeds {tol_frame:.1e}")
    c_mid = np.moveaxis(c_mid, -1, 0)  # (m, N, Q)
    c = np.empty((len(S), steps + 1, q))
    if steps == 1:
        c[:, 0] = c[:, 1] = c_mid[:, 0]
    else:
        c[:, 1:-1] = 0.5 * (c_mid[:, :-1] + c_mid[:, 1:])
        c[:, 0] = 1.5 * c_mid[:, 0] - 0.5 * c_mid[:, 1]
        c[:, -1] = 1.5 * c_mid[:, -1] - 0.5 * c_mid[:, -2]
    return CoefficientField(c, times, resid)


@dataclass(frozen=True, eq=False)
class MonomialFit:
    signal: ControlSignal
    delta: float
    rank: int
    columns: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.columns


def fit_monomials(cf: CoefficientField, ps: ParametrizationSet, grid: ParamGrid, K: int) -> MonomialFit:
    """Least-squares fit of rho_d^-1 c_i by monomials of degree <= K, per (i, t).

    The fitted signal is expressed over the shifted dictionary rho_d * p, so
    every monomial used has degree in [1, K + 1].  ``delta`` is the sup-norm
    error over (i, t, node).
    """
    if K < 0:
        raise ValueError("degree must be non-negative")
    rho = ps.evaluate(grid.nodes)
    lead = rho[ps.designated]
    if np.any(np.abs(lead) <= 1e-12):
        raise ValueError("designated parametrization function vanishes on the grid")
    base = MonomialDictionary.graded(ps.r, K)
    design = base.evaluate(rho).T  # (Q, P)
    scale = np.linalg.norm(design, axis=0)
    scale[scale == 0] = 1.0
    m, nt, q = cf.values.shape
    rhs = (cf.values / lead).transpose(2, 0, 1).reshape(q, m * nt)
    sol, _, rank, _ = np.linalg.lstsq(design / scale, rhs, rcond=None)
    if rank < design.shape[1]:
        warnings.warn(
            f"monomial design matrix has rank {rank} < {design.shape[1]}; using the minimal-norm solution",
            RankDeficientWarning, stacklevel=2,
        )
    coeffs = (sol / scale[:, None]).reshape(len(base), m, nt).transpose(1, 0, 2)
    approx = lead * ((sol.T @ (design / scale).T).reshape(m, nt, q))
    delta = float(np.max(np.abs(approx - cf.values)))
    signal = ControlSignal(cf.times, base.shifted(ps.designated), coeffs)
    return MonomialFit(signal, delta, int(rank), design.shape[1])


def track_extended(init: Profile, u: ControlSignal, drift: Callable | None, S: GeneratorSet,
                   ps: ParametrizationSet, T: float, dt: float,
                   target: TargetTrajectory) -> tuple[Trajectory, float]:
    """Drive the extended ensemble with ``u``; return the trajectory and the sup tracking error."""
    if not np.array_equal(init.states, target.states[0]):
        raise ValueError("initial profile must equal the target's initial profile")
    system = EnsembleSystem(init.grid, S, ps, drift)
    traj = integrate_ensemble(system, init, u, T, dt)
    if len(traj.times) != len(target.times) or np.max(np.abs(traj.times - target.times)) > 1e-12:
        raise ValueError("simulation and target time grids differ")
    diff = np.linalg.norm(traj.states - target.states, axis=(-2, -1))
    return traj, float(np.max(diff))


@dataclass(frozen=True, eq=False)
class SynthesisProblem:
    target: TargetTrajectory
    generators: GeneratorSet
    params: ParametrizationSet
    drift: Callable | None = None

    @property
    def grid(self) -> ParamGrid:
        return self.target.grid


@dataclass(frozen=True)
class StudyRow:
    K: int
    delta: float
    epsilon: float
    seconds: float


def convergence_study(problem: SynthesisProblem, degrees: Sequence[int]) -> list[StudyRow]:
    """delta(K) and epsilon(K) for each requested degree, rows sorted by K."""
    target = problem.target
    cf = extract_coefficients(target, problem.drift, problem.generators)
    init = target.profile(0)
    rows = []
    for K in sorted(set(int(k) for k in degrees)):
        start = time.perf_counter()
        fit = fit_monomials(cf, problem.params, problem.grid, K)
        _, eps = track_extended(init, fit.signal, problem.drift, problem.generators, problem.params,
                                target.horizon, target.dt or 1.0, target)
        rows.append(StudyRow(K, fit.delta, eps, time.perf_counter() - start))
    return rows


__all__ = [
    "CoefficientField",
    "FrameResidualError",
    "MonomialFit",
    "PrincipalBranchError",
    "RankDeficientWarning",
    "StudyRow",
    "SynthesisProblem",
    "TargetTrajectory",
    "convergence_study",
    "extract_coefficients",
    "fit_monomials",
    "log_near_identity",
    "track_extended",
]
