"""Adjoint-representation matrix coefficients and codistinguished checks.

phi^{ij}(g) = c * tr(g X_j g^-1 X_i^H) for the left orientation; the right
orientation evaluates the same expression at g^-1.  With c = 1 this is the raw
trace form; every check below is invariant under a positive global scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .liecore import (
    GROUP_OF,
    AlgebraElement,
    GroupElement,
    _commutator,
    algebra_dimension,
    descriptor,
    killing_constant,
    normalize_family,
    random_group_element,
)
from .structure import BracketTable, GeneratorSet, span_rank


class ConventionError(ArithmeticError):
    """A coefficient that must be real came out with a sizeable imaginary part."""


@dataclass(frozen=True, eq=False)
class CenterCatalog:
    family: str
    n: int
    elements: tuple[GroupElement, ...]

    @property
    def chi(self) -> int:
        return len(self.elements)

    def contains(self, z: np.ndarray, tol: float = 1e-10) -> bool:
        return any(np.max(np.abs(z - c.matrix)) <= tol for c in self.elements)


def center_elements(family: str, n: int) -> CenterCatalog:
    """Center of SO(n), SL(n, R) or SU(n) as an explicit list."""
    fam = normalize_family(family)
    if fam in ("so", "sl"):
        scalars = [1.0] if n % 2 else [1.0, -1.0]
        els = tuple(GroupElement(s * np.eye(n), fam) for s in scalars)
    else:
        els = []
        for k in range(n):
            # exact values where the root of unity is real or purely imaginary
            if (2 * k) % n == 0:
                z = complex(1 if (2 * k) // n % 2 == 0 else -1)
            elif (4 * k) % n == 0:
                z = 1j if (4 * k) // n % 4 == 1 else -1j
            else:
                z = complex(np.exp(2j * math.pi * k / n))
            els.append(GroupElement(z * np.eye(n, dtype=complex), fam))
        els = tuple(els)
    return CenterCatalog(fam, n, els)


@dataclass(frozen=True, eq=False)
class CoefficientFamily:
    base: GeneratorSet
    orientation: str = "left"
    scale: float = 1.0
    require_span: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.orientation not in ("left", "right"):
            raise ValueError("orientation must be 'left' or 'right'")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.require_span:
            dim = algebra_dimension(self.base.family, self.base.n)
            if span_rank(self.base) < dim:
                raise ValueError("coefficient base set does not span the algebra")

    @property
    def m(self) -> int:
        return len(self.base)

    @property
    def family(self) -> str:
        return self.base.family

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def relation_sign(self) -> float:
        """Sign s in  f_i phi^{i'j} = s * lambda * phi^{i'k}."""
        return -1.0 if self.orientation == "left" else 1.0


def _real(vals: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(vals):
        bound = 1e-12 * max(1.0, float(np.max(np.abs(vals.real), initial=0.0)))
        worst = float(np.max(np.abs(vals.imag), initial=0.0))
        if worst > bound:
            raise ConventionError(f"non-real matrix coefficient, |imag| = {worst:.3e}")
        return np.ascontiguousarray(vals.real)
    return vals


def _as_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, GroupElement) else np.asarray(g)


def phi_batch(fam: CoefficientFamily, states: np.ndarray) -> np.ndarray:
    """All coefficients for a stack of group matrices, shape (..., m, m), [i, j] = phi^{ij}."""
    states = np.asarray(states)
    if fam.orientation == "right":
        # evaluated literally as the left form at g^-1, so the duality is exact
        states = np.linalg.inv(states)
    inv = np.linalg.inv(states)
    xs = fam.base.stack
    ad = states[..., None, :, :] @ xs @ inv[..., None, :, :]
    vals = np.einsum("...jab,iab->...ij", ad, xs.conj())
    return fam.scale * _real(vals)


def phi_matrix(fam: CoefficientFamily, g) -> np.ndarray:
    return phi_batch(fam, _as_matrix(g)[None])[0]


def phi_eval(fam: CoefficientFamily, g, i: int, j: int) -> float:
    if not (0 <= i < fam.m and 0 <= j < fam.m):
        raise IndexError(f"coefficient index ({i}, {j}) out of range")
    return float(phi_matrix(fam, g)[i, j])


def lie_derivative_matrix(fam: CoefficientFamily, g, x) -> np.ndarray:
    """Derivatives of every phi^{ij} along the invariant field of X.

    Left orientation: d/dt phi(g exp(tX)) at 0.  Right orientation:
    d/dt phi_right(exp(tX) g) at 0.
    """
    g = _as_matrix(g)
    xm = x.matrix if isinstance(x, AlgebraElement) else np.asarray(x)
    xs = fam.base.stack
    ginv = np.linalg.inv(g)
    if fam.orientation == "left":
        inner = _commutator(xm, xs)
        d = g @ inner @ ginv
    else:
        inner = _commutator(-xm, xs)
        d = ginv @ inner @ g
    vals = np.einsum("jab,iab->ij", d, xs.conj())
    return fam.scale * _real(vals)


def phi_lie_derivative(fam: CoefficientFamily, g, x, i: int, j: int) -> float:
    return float(lie_derivative_matrix(fam, g, x)[i, j])


def one_form_matrix(fam: CoefficientFamily, g) -> np.ndarray:
    """Rows: pairs (i, j) row-major; columns: B_theta-orthonormal basis directions."""
    d = descriptor(fam.family, fam.n)
    cols = [lie_derivative_matrix(fam, g, e).ravel() for e in d.basis]
    return np.stack(cols, axis=1)


@dataclass
class CodistinguishedReport:
    family: str
    n: int
    orientation: str
    killing_constant: float
    spanning: dict
    relations: dict
    separation: dict
    notes: list

    @property
    def weakly_codistinguished(self) -> bool:
        return self.spanning["pass"] and self.relations["pass"]

    @property
    def passed(self) -> bool:
        return self.weakly_codistinguished and self.separation["pass"]

    @property
    def codistinguished(self) -> bool:
        return self.passed and self.separation["center_size"] == 1

    def to_dict(self) -> dict:
        return {
            "group": f"{GROUP_OF[self.family]}({self.n})",
            "orientation": self.orientation,
            "killing_constant": self.killing_constant,
            "spanning": self.spanning,
            "relations": self.relations,
            "separation": self.separation,
            "weakly_codistinguished": self.weakly_codistinguished,
            "codistinguished": self.codistinguished,
            "passed": self.passed,
            "notes": self.notes,
        }


def verify_codistinguished(fam: CoefficientFamily, table: BracketTable, n_samples: int = 100,
                           tol: float = 1e-6, relation_tol: float = 1e-10,
                           n_pairs: int = 200, seed: int = 0) -> CodistinguishedReport:
    """Check the three codistinguished axioms at random group elements.

    1. the differentials of all phi^{ij} span the cotangent space (scale-free
       singular value ratio above ``tol``);
    2. every bracket-table entry (i, j) -> (k, lambda) gives
       f_i phi^{i'j} = s lambda phi^{i'k} for all i' (relative residual at most
       ``relation_tol``; s = -1 left, +1 right);
    3. phi is constant on center cosets and separates ``n_pairs`` random pairs
       whose quotient is not central (gap above ``tol``).
    """
    if len(table.labels) != fam.m:
        raise ValueError("bracket table does not match the coefficient base set")
    rng = np.random.default_rng(seed)
    fam_tag, n = fam.family, fam.n
    dim = algebra_dimension(fam_tag, n)
    samples = [random_group_element(fam_tag, n, rng).matrix for _ in range(n_samples)]

    # 1. spanning
    min_sv, min_ratio, worst = math.inf, math.inf, None
    for s, g in enumerate(samples):
        sv = np.linalg.svd(one_form_matrix(fam, g), compute_uv=False)
        smallest = float(sv[dim - 1]) if len(sv) >= dim else 0.0
        ratio = smallest / float(sv[0]) if sv[0] > 0 else 0.0
        if ratio < min_ratio:
            min_ratio, worst = ratio, s
        min_sv = min(min_sv, smallest)
    spanning = {
        "pass": bool(min_ratio > tol),
        "min_singular_value": min_sv,
        "min_singular_ratio": min_ratio,
        "rank_required": dim,
        "witness_sample": worst,
        "samples": n_samples,
    }

    # 2. structure relations
    xs = fam.base.elements
    sign = fam.relation_sign
    max_abs, max_rel, witness, count = 0.0, 0.0, None, 0
    for s, g in enumerate(samples):
        phi = phi_matrix(fam, g)
        scale = max(float(np.max(np.abs(phi))), 1e-300)
        for i in range(fam.m):
            deriv = lie_derivative_matrix(fam, g, xs[i])
            for j in range(fam.m):
                e = table.get(i, j)
                if e.k is None:
                    expected = np.zeros(fam.m)
                else:
                    expected = sign * e.lam * phi[:, e.k]
                res = np.abs(deriv[:, j] - expected)
                worst_ip = int(np.argmax(res))
                if s == 0:
                    count += fam.m
                if res[worst_ip] > max_abs:
                    max_abs = float(res[worst_ip])
                    witness = {"sample": s, "i": i, "i_prime": worst_ip, "j": j}
                max_rel = max(max_rel, float(res[worst_ip]) / scale)
    relations = {
        "pass": bool(max_rel <= relation_tol),
        "max_abs_residual": max_abs,
        "max_rel_residual": max_rel,
        "relations_checked": count,
        "witness": witness,
    }

    # 3. separation up to the center
    center = center_elements(fam_tag, n)
    center_gap = 0.0
    for g in samples:
        phi = phi_matrix(fam, g)
        for z in center.elements:
            center_gap = max(center_gap, float(np.max(np.abs(phi - phi_matrix(fam, g @ z.matrix)))))
    min_gap, sep_witness, checked = math.inf, None, 0
    for p in range(n_pairs):
        g = random_group_element(fam_tag, n, rng).matrix
        h = random_group_element(fam_tag, n, rng).matrix
        q = np.linalg.inv(g) @ h
        if min(np.max(np.abs(q - z.matrix)) for z in center.elements) < 1e-6:
            continue
        checked += 1
        gap = float(np.max(np.abs(phi_matrix(fam, g) - phi_matrix(fam, h))))
        if gap < min_gap:
            min_gap, sep_witness = gap, p
    scale = fam.scale
    separation = {
        "pass": bool(center_gap <= relation_tol * max(1.0, scale) and min_gap > tol),
        "center_size": center.chi,
        "center_max_discrepancy": center_gap,
        "pairs_checked": checked,
        "min_pair_gap": min_gap,
        "witness_pair": sep_witness,
        "injective": center.chi == 1,
    }
    notes = [
        "samples are exponentials of random algebra elements and lie in the identity component",
    ]
    return CodistinguishedReport(fam_tag, n, fam.orientation, killing_constant(fam_tag, n),
                                 spanning, relations, separation, notes)
