"""Discretized continuum ensembles driven by broadcast controls.

Every node sigma_q of a parameter grid carries a copy of the system

    d/dt g_q = g_q A(t, sigma_q),   A = Z(sigma) + sum_i sum_s u_{i,s}(t) rho_s(sigma) X_i

(or ``A g_q`` with ``orientation="right"``).  Integration uses a fixed-step
fourth-order Runge-Kutta-Munthe-Kaas scheme: each step builds an algebra
increment and exponentiates it once.  States are never re-projected onto the
group; the deviation is measured and reported instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable, Sequence

import numpy as np

from .expressions import SigmaFunction, parse_expression
from .liecore import (
    TOL_GRP,
    AlgebraElement,
    GroupElement,
    _commutator,
    expm,
    normalize_family,
)
from .monomials import MonomialDictionary
from .structure import GeneratorSet


class IntegrationError(RuntimeError):
    def __init__(self, message, node=None, time=None):
        super().__init__(message)
        self.node = node
        self.time = time


# --------------------------------------------------------------------------
# parameter grid and parametrization functions


@dataclass(frozen=True, eq=False)
class ParamGrid:
    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray
    rule: str

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if len(nodes) > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if abs(weights.sum() - (self.b - self.a)) > 1e-12 * max(1.0, self.b - self.a):
            raise ValueError("quadrature weights must sum to b - a")
        for arr in (nodes, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def same_as(self, other: "ParamGrid") -> bool:
        return (
            self is other
            or (self.size == other.size
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.weights, other.weights))
        )

    def node(self, q: int) -> "ParamGrid":
        """One-node grid carrying node q with its weight."""
        w = float(self.weights[q])
        s = float(self.nodes[q])
        return ParamGrid(s - w / 2, s + w / 2, np.array([s]), np.array([w]), self.rule)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "nodes": self.size, "rule": self.rule}


GRID_RULES = ("uniform-trapezoid", "gauss-legendre")


def build_grid(a: float, b: float, q: int, rule: str = "gauss-legendre",
               require_positive: bool = True) -> ParamGrid:
    """Quadrature grid on [a, b] with ``q`` nodes.

    ``require_positive`` enforces 0 < a, needed whenever a parametrization
    function must stay away from zero.
    """
    a, b = float(a), float(b)
    if not a < b or (require_positive and a <= 0):
        raise ValueError(f"invalid interval [{a}, {b}]")
    if q < 2:
        raise ValueError("at least two nodes are required")
    if rule == "uniform-trapezoid":
        nodes = np.linspace(a, b, q)
        h = (b - a) / (q - 1)
        weights = np.full(q, h)
        weights[0] = weights[-1] = h / 2
    elif rule == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(q)
        nodes = (b - a) / 2 * x + (a + b) / 2
        weights = (b - a) / 2 * w
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    # absorb round-off so the weights sum to the interval length
    weights = weights * ((b - a) / weights.sum())
    return ParamGrid(a, b, nodes, weights, rule)


@dataclass(frozen=True, eq=False)
class ParametrizationSet:
    functions: tuple[Callable, ...]
    names: tuple[str, ...] = ()
    designated: int = 0

    def __post_init__(self):
        fns = tuple(self.functions)
        if not fns:
            raise ValueError("at least one parametrization function is required")
        names = tuple(self.names) or tuple(getattr(f, "text", f"rho{s + 1}") for s, f in enumerate(fns))
        if not 0 <= self.designated < len(fns):
            raise ValueError("designated index out of range")
        object.__setattr__(self, "functions", fns)
        object.__setattr__(self, "names", names)

    @classmethod
    def from_expressions(cls, texts: Sequence[str], designated: int = 0) -> "ParametrizationSet":
        fns = tuple(parse_expression(t) for t in texts)
        return cls(fns, tuple(str(t) for t in texts), designated)

    @property
    def r(self) -> int:
        return len(self.functions)

    def evaluate(self, sigma) -> np.ndarray:
        """Values of every rho_s, shape (r, len(sigma))."""
        s = np.atleast_1d(np.asarray(sigma, dtype=float))
        return np.stack([np.broadcast_to(np.asarray(f(s), dtype=float), s.shape) for f in self.functions])


@dataclass(frozen=True)
class SeparationVerdict:
    separating: bool
    nonvanishing: bool
    squared: bool
    witness: tuple[int, int] | None
    min_gap: float

    @property
    def passed(self) -> bool:
        return self.separating and self.nonvanishing

    def to_dict(self) -> dict:
        return {
            "separating": self.separating,
            "nonvanishing": self.nonvanishing,
            "squared": self.squared,
            "witness": None if self.witness is None else list(self.witness),
            "min_gap": self.min_gap,
        }


def check_separating(ps: ParametrizationSet, grid: ParamGrid, squared: bool = False,
                     tol: float = 1e-12) -> SeparationVerdict:
    """Pairwise node separation of {rho_s} (or {rho_s^2}) and nonvanishing of the designated rho."""
    vals = ps.evaluate(grid.nodes)
    if squared:
        vals = vals**2
    gaps = np.max(np.abs(vals[:, :, None] - vals[:, None, :]), axis=0)
    np.fill_diagonal(gaps, np.inf)
    q1, q2 = np.unravel_index(np.argmin(gaps), gaps.shape)
    min_gap = float(gaps[q1, q2]) if grid.size > 1 else math.inf
    separating = min_gap > tol
    nonvanishing = bool(np.all(np.abs(ps.evaluate(grid.nodes)[ps.designated]) > tol))
    witness = None if separating else (int(min(q1, q2)), int(max(q1, q2)))
    return SeparationVerdict(bool(separating), nonvanishing, squared, witness, min_gap)


# --------------------------------------------------------------------------
# profiles


def _group_deviation(states: np.ndarray, family: str) -> np.ndarray:
    """Per-matrix distance from the group, shape states.shape[:-2]."""
    n = states.shape[-1]
    det_err = np.abs(np.linalg.det(states) - 1.0)
    if family == "sl":
        return det_err
    gram = np.swapaxes(states.conj(), -1, -2) @ states - np.eye(n)
    return np.maximum(np.linalg.norm(gram, axis=(-2, -1)), det_err)


@dataclass(frozen=True, eq=False)
class Profile:
    grid: ParamGrid
    states: np.ndarray  # (Q, n, n)
    family: str
    tol: float = field(default=TOL_GRP, repr=False)

    def __post_init__(self):
        fam = normalize_family(self.family)
        st = np.array(self.states, dtype=complex if fam == "su" else float)
        if st.ndim != 3 or st.shape[0] != self.grid.size or st.shape[1] != st.shape[2]:
            raise ValueError(f"profile states have shape {st.shape} for {self.grid.size} nodes")
        if self.tol is not None:
            dev = _group_deviation(st, fam)
            bad = int(np.argmax(dev))
            if dev[bad] > self.tol:
                raise ValueError(f"profile state at node {bad} is off the group by {dev[bad]:.3e}")
        st.setflags(write=False)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "states", st)

    @property
    def n(self) -> int:
        return self.states.shape[-1]

    def element(self, q: int) -> GroupElement:
        return GroupElement(self.states[q], self.family, tol=None)

    def max_deviation(self) -> float:
        return float(np.max(_group_deviation(self.states, self.family)))


def constant_profile(grid: ParamGrid, g) -> Profile:
    m = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
    fam = g.family if isinstance(g, GroupElement) else ("su" if np.iscomplexobj(m) else "so")
    return Profile(grid, np.broadcast_to(m, (grid.size,) + m.shape), fam)


def profile_sup_distance(p1: Profile, p2: Profile) -> float:
    """max_q ||g_q - g'_q||_F (an ambient distance for SL(n, R))."""
    if not p1.grid.same_as(p2.grid):
        raise ValueError("profiles live on different grids")
    if p1.states.shape != p2.states.shape:
        raise ValueError("profiles have different state shapes")
    return float(np.max(np.linalg.norm(p1.states - p2.states, axis=(1, 2))))


# --------------------------------------------------------------------------
# control inputs


@dataclass(frozen=True)
class PiecewiseConstantInput:
    """Segments (i, s, nu, t_p): on [t_{p-1}, t_p) only u_{i,s} = nu is nonzero."""

    segments: tuple[tuple[int, int, float, float], ...]

    def __post_init__(self):
        segs = tuple((int(i), int(s), float(nu), float(t)) for i, s, nu, t in self.segments)
        times = [seg[3] for seg in segs]
        if not segs or times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("switching times must be positive and strictly increasing")
        object.__setattr__(self, "segments", segs)

    @property
    def horizon(self) -> float:
        return self.segments[-1][3]

    def segment_at(self, t: float) -> int:
        for p, seg in enumerate(self.segments):
            if t < seg[3]:
                return p
        return len(self.segments) - 1

    def breakpoints(self) -> list[float]:
        return [0.0] + [seg[3] for seg in self.segments]


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Extended-system controls u_{i,p}(t), piecewise linear in t.

    ``coeffs`` has shape (m, P, len(times)); monomial p is ``monomials.exponents[p]``.
    """

    times: np.ndarray
    monomials: MonomialDictionary
    coeffs: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != len(self.monomials) or c.shape[2] != len(t):
            raise ValueError(f"coefficient array shape {c.shape} does not match times/monomials")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("signal time grid must be increasing")
        for arr in (t, c):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    def at(self, t: float) -> np.ndarray:
        """u_{i,p}(t), shape (m, P)."""
        times = self.times
        if len(times) == 1 or t <= times[0]:
            return self.coeffs[:, :, 0]
        if t >= times[-1]:
            return self.coeffs[:, :, -1]
        k = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * self.coeffs[:, :, k] + w * self.coeffs[:, :, k + 1]

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "exponents": [list(e) for e in self.monomials.exponents],
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSignal":
        return cls(np.array(d["times"]), MonomialDictionary(tuple(map(tuple, d["exponents"]))),
                   np.array(d["coeffs"]))


@dataclass(frozen=True, eq=False)
class SmoothInput:
    """Inputs u_{i,s}(t) given by a callable returning an (m, r) array.

    Evaluated exactly at every Runge-Kutta stage, so smooth inputs keep the
    full order of the integrator.
    """

    fn: Callable[[float], np.ndarray]

    def at(self, t: float) -> np.ndarray:
        return np.asarray(self.fn(float(t)), dtype=float)


# --------------------------------------------------------------------------
# integration


@dataclass(frozen=True, eq=False)
class EnsembleSystem:
    """Grid, control generators, parametrization functions and a left-invariant drift."""

    grid: ParamGrid
    generators: GeneratorSet
    params: ParametrizationSet
    drift: Callable | None = None
    orientation: str = "left"

    def __post_init__(self):
        if self.orientation not in ("left", "right"):
            raise ValueError("orientation must be 'left' or 'right'")

    @property
    def family(self) -> str:
        return self.generators.family

    @property
    def n(self) -> int:
        return self.generators.n

    def drift_matrices(self) -> np.ndarray:
        q, n = self.grid.size, self.n
        dtype = complex if self.family == "su" else float
        out = np.zeros((q, n, n), dtype=dtype)
        if self.drift is None:
            return out
        for idx, s in enumerate(self.grid.nodes):
            z = self.drift(float(s))
            out[idx] = z.matrix if isinstance(z, AlgebraElement) else np.asarray(z)
        return out

    def rho_values(self) -> np.ndarray:
        return self.params.evaluate(self.grid.nodes)

    def field(self, coef: np.ndarray, drift: np.ndarray) -> np.ndarray:
        """A per node from generator coefficients of shape (m, Q)."""
        a = drift.copy()
        for i, x in enumerate(self.generators.elements):
            a = a + coef[i][:, None, None] * x.matrix
        return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: ParamGrid
    times: np.ndarray
    states: np.ndarray  # (N+1, Q, n, n)
    family: str
    max_deviation: float

    def profile(self, k: int) -> Profile:
        return Profile(self.grid, self.states[k], self.family, tol=None)

    @property
    def final(self) -> Profile:
        return self.profile(len(self.times) - 1)

    def __len__(self):
        return len(self.times)


def _dexpinv(omega, a, orientation):
    c1 = _commutator(omega, a)
    c2 = _commutator(omega, c1)
    if orientation == "left":
        return a + 0.5 * c1 + c2 / 12.0
    return a - 0.5 * c1 + c2 / 12.0


def rkmk4_increment(a0, ah, a1, h, orientation="left"):
    """Algebra increment of one RKMK4 step from the field at t, t+h/2, t+h."""
    k1 = h * a0
    k2 = h * _dexpinv(0.5 * k1, ah, orientation)
    k3 = h * _dexpinv(0.5 * k2, ah, orientation)
    k4 = h * _dexpinv(k3, a1, orientation)
    return (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def step_count(T: float, dt: float) -> int:
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-12 * max(1.0, T):
        raise ValueError(f"dt = {dt} does not divide T = {T}")
    return n


def _weighted_sum(coef: np.ndarray, values: np.ndarray) -> np.ndarray:
    """sum_p coef[:, p] * values[p], elementwise per node (no BLAS reduction)."""
    out = np.zeros((coef.shape[0], values.shape[1]))
    for p in range(values.shape[0]):
        out += coef[:, p, None] * values[p]
    return out


class _Coefficients:
    """Generator coefficients c_i(t, sigma_q), shape (m, Q), for any input kind."""

    def __init__(self, system: EnsembleSystem, u):
        self.u = u
        self.m = len(system.generators)
        self.q = system.grid.size
        self.rho = system.rho_values()
        if isinstance(u, ControlSignal):
            if u.coeffs.shape[0] != self.m:
                raise ValueError("control signal has the wrong number of generators")
            self.mono = u.monomials.evaluate(self.rho)
        elif isinstance(u, PiecewiseConstantInput):
            for i, s, _, _ in u.segments:
                if not (0 <= i < self.m and 0 <= s < self.rho.shape[0]):
                    raise ValueError(f"segment index ({i}, {s}) out of range")
        elif isinstance(u, SmoothInput):
            pass
        elif u is not None:
            raise TypeError("unsupported input type")

    def at(self, t: float) -> np.ndarray:
        u = self.u
        if u is None:
            return np.zeros((self.m, self.q))
        if isinstance(u, ControlSignal):
            return _weighted_sum(u.at(t), self.mono)
        if isinstance(u, SmoothInput):
            vals = u.at(t)
            if vals.shape != (self.m, self.rho.shape[0]):
                raise ValueError(f"smooth input returned shape {vals.shape}")
            return _weighted_sum(vals, self.rho)
        i, s, nu, _ = u.segments[u.segment_at(t)]
        out = np.zeros((self.m, self.q))
        out[i] = nu * self.rho[s]
        return out


def _step_pieces(u, t0, t1):
    """Sub-intervals of [t0, t1] on which a piecewise-constant input is constant."""
    cuts = [t0]
    for t in u.breakpoints():
        if t0 < t < t1 and not math.isclose(t, t0, abs_tol=1e-12) and not math.isclose(t, t1, abs_tol=1e-12):
            cuts.append(t)
    cuts.append(t1)
    return list(zip(cuts[:-1], cuts[1:]))


def _advance(states, omega, orientation):
    e = expm(omega)
    return states @ e if orientation == "left" else e @ states


def integrate_states(system: EnsembleSystem, states0: np.ndarray, u, T: float, dt: float,
                     deviation: Callable[[np.ndarray], np.ndarray], limit: float,
                     what: str = "group"):
    """Shared stepping loop; ``states0`` has shape (Q, n, k) and is acted on by the flow.

    Returns the time grid, the state stack and the largest measured deviation.
    """
    steps = step_count(T, dt)
    coef = _Coefficients(system, u)
    drift = system.drift_matrices()
    orient = system.orientation

    states = np.empty((steps + 1,) + states0.shape, dtype=states0.dtype)
    states[0] = states0
    times = np.array([k * dt for k in range(steps)] + [T]) if steps else np.array([0.0])
    worst = float(np.max(deviation(states[0])))
    for k in range(steps):
        t0, t1 = times[k], times[k + 1]
        g = states[k]
        if isinstance(u, PiecewiseConstantInput) or u is None:
            pieces = _step_pieces(u, t0, t1) if u is not None else [(t0, t1)]
            for a, b in pieces:
                field_ = system.field(coef.at(0.5 * (a + b)), drift)
                g = _advance(g, (b - a) * field_, orient)
        else:
            h = t1 - t0
            a0 = system.field(coef.at(t0), drift)
            ah = system.field(coef.at(t0 + 0.5 * h), drift)
            a1 = system.field(coef.at(t1), drift)
            g = _advance(g, rkmk4_increment(a0, ah, a1, h, orient), orient)
        states[k + 1] = g
        dev = deviation(g)
        bad = int(np.argmax(dev))
        worst = max(worst, float(dev[bad]))
        if dev[bad] > limit:
            raise IntegrationError(
                f"state left the {what} by {dev[bad]:.3e} at node {bad}, t = {t1}",
                node=bad, time=float(t1),
            )
    states.setflags(write=False)
    return times, states, worst


def integrate_ensemble(system: EnsembleSystem, init: Profile, u, T: float, dt: float,
                       tol_grp: float = TOL_GRP) -> Trajectory:
    """Integrate every node over [0, T] with fixed step ``dt``.

    ``u`` is a :class:`ControlSignal`, a :class:`PiecewiseConstantInput`, a
    :class:`SmoothInput` or ``None`` (drift only).  Piecewise-constant inputs
    are integrated exactly between switching times.  Raises
    :class:`IntegrationError` if a state leaves the group by more than
    ``100 * tol_grp``.
    """
    if not init.grid.same_as(system.grid):
        raise ValueError("initial profile is on a different grid")
    if init.family != system.family or init.n != system.n:
        raise ValueError("initial profile does not match the generator family")
    times, states, worst = integrate_states(
        system, init.states, u, T, dt,
        lambda g: _group_deviation(g, system.family), 100.0 * tol_grp,
    )
    return Trajectory(system.grid, times, states, system.family, worst)


# --------------------------------------------------------------------------
# outputs


def ensemble_output(profile: Profile, fam) -> np.ndarray:
    """y^{ij} = sum_q w_q phi^{ij}(g_q), accumulated in node order."""
    from .coefficients import phi_batch

    phi = phi_batch(fam, profile.states)
    out = np.zeros(phi.shape[1:])
    for q, w in enumerate(profile.grid.weights):
        out = out + w * phi[q]
    return out


def output_series(traj: Trajectory, fam) -> np.ndarray:
    """Outputs along a trajectory, shape (N+1, m, m)."""
    from .coefficients import phi_batch

    phi = phi_batch(fam, traj.states)  # (N+1, Q, m, m)
    out = np.zeros((phi.shape[0],) + phi.shape[2:])
    for q, w in enumerate(traj.grid.weights):
        out = out + w * phi[:, q]
    return out


def expression_params(*texts: str) -> ParametrizationSet:
    return ParametrizationSet.from_expressions(texts)


__all__ = [
    "ControlSignal",
    "EnsembleSystem",
    "IntegrationError",
    "ParamGrid",
    "ParametrizationSet",
    "PiecewiseConstantInput",
    "Profile",
    "SeparationVerdict",
    "SigmaFunction",
    "SmoothInput",
    "Trajectory",
    "build_grid",
    "check_separating",
    "constant_profile",
    "ensemble_output",
    "integrate_ensemble",
    "integrate_states",
    "output_series",
    "profile_sup_distance",
    "rkmk4_increment",
    "step_count",
]
