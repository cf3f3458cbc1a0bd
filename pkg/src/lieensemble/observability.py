"""Moment fingerprints of profiles, distinguishability tests and inversion.

The moment of the pair (i, j) against the monomial p is

    m^{ij}_p = sum_q w_q phi^{ij}(g_q) p(sigma_q),

a quadrature version of integrating the coefficient against p over the
parameter interval.  Two profiles whose tables agree for every monomial give
identical outputs under every piecewise-constant input.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import least_squares

from .coefficients import CoefficientFamily, center_elements, phi_batch
from .ensemble import ParamGrid, ParametrizationSet, Profile, profile_sup_distance
from .liecore import GroupElement, expm, identity
from .monomials import MonomialDictionary, format_exponents
from .structure import GeneratorSet

K_OBS_DEFAULT = 4
N_STARTS = 8


@dataclass(frozen=True, eq=False)
class MomentTable:
    pairs: tuple[tuple[int, int], ...]
    monomials: MonomialDictionary
    values: np.ndarray  # (len(pairs), len(monomials))

    @property
    def K_obs(self) -> int:
        return max(self.monomials.degrees, default=0)

    def column(self, exponents) -> np.ndarray:
        return self.values[:, self.monomials.exponents.index(tuple(exponents))]

    def as_matrix(self, p: int) -> np.ndarray:
        m = int(round(math.sqrt(len(self.pairs))))
        return self.values[:, p].reshape(m, m)

    def truncated(self, K: int) -> "MomentTable":
        keep = [p for p, d in enumerate(self.monomials.degrees) if d <= K]
        mono = MonomialDictionary(tuple(self.monomials.exponents[p] for p in keep))
        return MomentTable(self.pairs, mono, self.values[:, keep])

    def rows(self):
        """(i, j, exponent string, value) in pair-major, graded-lex order."""
        for r, (i, j) in enumerate(self.pairs):
            for p, e in enumerate(self.monomials.exponents):
                yield i, j, format_exponents(e), float(self.values[r, p])


def _moments(phi: np.ndarray, weights: np.ndarray, mono: np.ndarray) -> np.ndarray:
    """Node-ordered accumulation; phi (Q, m, m), mono (P, Q) -> (m*m, P)."""
    q, m, _ = phi.shape
    out = np.zeros((mono.shape[0], m, m))
    for node in range(q):
        coef = weights[node] * mono[:, node]
        out += coef[:, None, None] * phi[node]
    return out.reshape(mono.shape[0], m * m).T


def moment_table(profile: Profile, fam: CoefficientFamily, ps: ParametrizationSet,
                 K_obs: int = K_OBS_DEFAULT) -> MomentTable:
    grid = profile.grid
    mono = MonomialDictionary.graded(ps.r, K_obs)
    phi = phi_batch(fam, profile.states)
    vals = _moments(phi, grid.weights, mono.evaluate(ps.evaluate(grid.nodes)))
    pairs = tuple((i, j) for i in range(fam.m) for j in range(fam.m))
    return MomentTable(pairs, mono, vals)


@dataclass(frozen=True)
class MomentVerdict:
    separated: bool
    K_obs: int
    pair: tuple[int, int] | None
    exponents: tuple[int, ...] | None
    gap: float
    max_difference: float

    @property
    def degree(self) -> int | None:
        return None if self.exponents is None else sum(self.exponents)

    def to_dict(self) -> dict:
        return {
            "separated": self.separated,
            "K_obs": self.K_obs,
            "pair": None if self.pair is None else list(self.pair),
            "exponents": None if self.exponents is None else list(self.exponents),
            "degree": self.degree,
            "gap": self.gap,
            "max_difference": self.max_difference,
        }


def moment_separation_test(p1: Profile, p2: Profile, fam: CoefficientFamily, ps: ParametrizationSet,
                           K_obs: int = K_OBS_DEFAULT, tol: float = 1e-10) -> MomentVerdict:
    """First entry (monomials in graded-lex order, then pairs row-major) with |difference| > tol."""
    if not p1.grid.same_as(p2.grid):
        raise ValueError("profiles live on different grids")
    t1 = moment_table(p1, fam, ps, K_obs)
    t2 = moment_table(p2, fam, ps, K_obs)
    diff = np.abs(t1.values - t2.values)
    worst = float(np.max(diff)) if diff.size else 0.0
    for p, e in enumerate(t1.monomials.exponents):
        hits = np.nonzero(diff[:, p] > tol)[0]
        if hits.size:
            r = int(hits[0])
            return MomentVerdict(True, K_obs, t1.pairs[r], e, float(diff[r, p]), worst)
    return MomentVerdict(False, K_obs, None, None, 0.0, worst)


def center_shift_profile(p: Profile, z: GroupElement, tol: float = 1e-10) -> Profile:
    """Right-translate every node by a central element z."""
    cat = center_elements(p.family, p.n)
    zm = z.matrix if isinstance(z, GroupElement) else np.asarray(z)
    if not cat.contains(zm, tol):
        raise ValueError("z is not in the center of the group")
    return Profile(p.grid, p.states @ zm, p.family)


@dataclass(frozen=True, eq=False)
class ProfileAnsatz:
    """sigma -> g0 exp(sum_{i,d} a[i, d] sigma^d X_i)."""

    base: GroupElement
    generators: GeneratorSet
    coeffs: np.ndarray  # (m, d_max + 1)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != len(self.generators):
            raise ValueError(f"ansatz coefficients have shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d_max(self) -> int:
        return self.coeffs.shape[1] - 1

    def algebra_values(self, sigma: np.ndarray) -> np.ndarray:
        powers = np.asarray(sigma, dtype=float)[None, :] ** np.arange(self.d_max + 1)[:, None]
        c = self.coeffs @ powers  # (m, Q)
        return np.einsum("iq,iab->qab", c, self.generators.stack)

    def profile(self, grid: ParamGrid) -> Profile:
        states = self.base.matrix @ expm(self.algebra_values(grid.nodes))
        return Profile(grid, states, self.generators.family)

    def to_dict(self) -> dict:
        base = self.base.matrix
        out = {"coeffs": self.coeffs.tolist(), "d_max": self.d_max}
        if np.iscomplexobj(base):
            out["base_real"] = base.real.tolist()
            out["base_imag"] = base.imag.tolist()
        else:
            out["base"] = base.tolist()
        return out


def center_resolved_distance(estimate: Profile, truth: Profile) -> tuple[float, int]:
    """min over central z of the sup distance between estimate * z and truth, with the minimizing index."""
    cat = center_elements(truth.family, truth.n)
    dists = [profile_sup_distance(Profile(estimate.grid, estimate.states @ z.matrix, estimate.family, tol=None), truth)
             for z in cat.elements]
    k = int(np.argmin(dists))
    return float(dists[k]), k


@dataclass(frozen=True, eq=False)
class Reconstruction:
    ansatz: ProfileAnsatz
    residual: float
    converged: bool
    seed_index: int
    attempts: tuple[dict, ...]
    distance: float | None = None
    center_index: int | None = None

    def to_dict(self) -> dict:
        return {
            "ansatz": self.ansatz.to_dict(),
            "residual": self.residual,
            "converged": self.converged,
            "seed_index": self.seed_index,
            "attempts": list(self.attempts),
            "center_resolved_distance": self.distance,
            "center_index": self.center_index,
        }


def reconstruct_profile(target: MomentTable, d_max: int, fam: CoefficientFamily, ps: ParametrizationSet,
                        grid: ParamGrid, seed: int = 0, n_starts: int = N_STARTS,
                        base: GroupElement | None = None, truth: Profile | None = None,
                        threshold: float = 1e-7) -> Reconstruction:
    """Levenberg-Marquardt fit of the ansatz to a moment table, multi-start.

    Starts are the zero vector followed by uniform draws in [-1, 1] from
    ``seed``.  The best attempt is chosen by (residual, start index).
    """
    S = fam.base
    base = identity(S.family, S.n) if base is None else base
    m = len(S)
    shape = (m, d_max + 1)
    mono_vals = target.monomials.evaluate(ps.evaluate(grid.nodes))
    tvals = target.values.ravel()

    def mismatch(x):
        ans = ProfileAnsatz(base, S, x.reshape(shape))
        states = base.matrix @ expm(ans.algebra_values(grid.nodes))
        vals = _moments(phi_batch(fam, states), grid.weights, mono_vals)
        return vals.ravel() - tvals

    rng = np.random.default_rng(seed)
    starts = [np.zeros(m * (d_max + 1))]
    starts += [rng.uniform(-1.0, 1.0, m * (d_max + 1)) for _ in range(n_starts - 1)]
    attempts, best = [], None
    for idx, x0 in enumerate(starts):
        r0 = float(np.linalg.norm(mismatch(x0)))
        if r0 <= threshold:
            x, r = x0, r0
        else:
            sol = least_squares(mismatch, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=200 * len(x0))
            x, r = sol.x, float(np.linalg.norm(sol.fun))
            if r > r0:
                x, r = x0, r0
        attempts.append({"start": idx, "initial_residual": r0, "residual": r})
        if best is None or r < best[1]:
            best = (x, r, idx)
    x, r, idx = best
    ans = ProfileAnsatz(base, S, x.reshape(shape))
    dist = cidx = None
    if truth is not None:
        dist, cidx = center_resolved_distance(ans.profile(grid), truth)
    return Reconstruction(ans, r, r <= threshold, idx, tuple(attempts), dist, cidx)


__all__ = [
    "K_OBS_DEFAULT",
    "MomentTable",
    "MomentVerdict",
    "ProfileAnsatz",
    "Reconstruction",
    "center_resolved_distance",
    "center_shift_profile",
    "moment_separation_test",
    "moment_table",
    "reconstruct_profile",
]
