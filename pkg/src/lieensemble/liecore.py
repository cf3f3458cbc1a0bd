"""Matrix Lie algebra and Lie group arithmetic for so(n), sl(n, R) and su(n).

The Lie bracket used throughout the package is the *negated* matrix
commutator, ``[X, Y] = -(XY - YX)``.  With this convention the standard
so(3) generators ``X_i = e_j e_k^T - e_k e_j^T`` satisfy
``[X_1, X_2] = X_3``.  The raw commutator is kept private.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np

TOL_ALG = 1e-9
TOL_GRP = 1e-8

ALGEBRA_FAMILIES = ("so", "sl", "su")
GROUP_OF = {"so": "SO", "sl": "SL", "su": "SU"}
ALGEBRA_OF = {v: k for k, v in GROUP_OF.items()}

# Killing constant c with B(X, Y) = c tr(XY); checked against tr(ad ad) when
# a descriptor is built.
_KILLING_CONSTANTS = {
    "so": lambda n: float(n - 2),
    "sl": lambda n: float(2 * n),
    "su": lambda n: float(2 * n),
}


class FamilyMismatchError(ValueError):
    """Operands belong to different algebra families or sizes."""


class MembershipError(ValueError):
    """A matrix violates the defining invariant of its family."""


def normalize_family(family: str) -> str:
    """Map 'so'/'SO'/'so(n)'-style tags to the algebra tag 'so', 'sl' or 'su'."""
    tag = family.strip()
    if "(" in tag:
        tag = tag[: tag.index("(")]
    if tag in ALGEBRA_OF:
        return ALGEBRA_OF[tag]
    tag = tag.lower()
    if tag not in ALGEBRA_FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    return tag


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _algebra_residual(m: np.ndarray, family: str) -> float:
    scale = max(1.0, float(np.linalg.norm(m)))
    if family == "so":
        r = np.linalg.norm(m + m.T)
    elif family == "sl":
        r = abs(np.trace(m))
    else:
        r = max(np.linalg.norm(m + m.conj().T), abs(np.trace(m)))
    return float(r) / scale


def _group_residual(g: np.ndarray, family: str) -> float:
    n = g.shape[0]
    det_err = abs(np.linalg.det(g) - 1.0)
    if family == "sl":
        return float(det_err)
    orth_err = np.linalg.norm(g.conj().T @ g - np.eye(n))
    return float(max(orth_err, det_err))


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """A square matrix in so(n), sl(n, R) or su(n)."""

    matrix: np.ndarray
    family: str
    tol: float = field(default=TOL_ALG, repr=False)

    def __post_init__(self):
        fam = normalize_family(self.family)
        object.__setattr__(self, "family", fam)
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise MembershipError(f"expected a square matrix, got shape {m.shape}")
        if fam == "su":
            m = m.astype(complex)
        else:
            if np.iscomplexobj(m):
                if np.max(np.abs(m.imag), initial=0.0) > self.tol:
                    raise MembershipError(f"{fam}(n) requires real entries")
                m = m.real
            m = m.astype(float)
        if self.tol is not None:
            res = _algebra_residual(m, fam)
            if res > self.tol:
                raise MembershipError(
                    f"matrix is not in {fam}({m.shape[0]}): residual {res:.3e}"
                )
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def _like(self, m):
        return AlgebraElement(m, self.family, tol=None)

    def _check(self, other):
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        if other.family != self.family or other.n != self.n:
            raise FamilyMismatchError(
                f"{self.family}({self.n}) vs {other.family}({other.n})"
            )
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._like(self.matrix + other.matrix)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._like(self.matrix - other.matrix)

    def __neg__(self):
        return self._like(-self.matrix)

    def __mul__(self, c):
        if not np.isscalar(c) or isinstance(c, complex):
            return NotImplemented
        return self._like(float(c) * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def allclose(self, other: "AlgebraElement", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= atol)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A matrix in SO(n), SL(n, R) or SU(n)."""

    matrix: np.ndarray
    family: str
    tol: float = field(default=TOL_GRP, repr=False)

    def __post_init__(self):
        fam = normalize_family(self.family)
        object.__setattr__(self, "family", fam)
        g = np.asarray(self.matrix)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise MembershipError(f"expected a square matrix, got shape {g.shape}")
        if fam == "su":
            g = g.astype(complex)
        else:
            if np.iscomplexobj(g):
                if np.max(np.abs(g.imag), initial=0.0) > self.tol:
                    raise MembershipError(f"{GROUP_OF[fam]}(n) requires real entries")
                g = g.real
            g = g.astype(float)
        if self.tol is not None:
            res = _group_residual(g, fam)
            if res > self.tol:
                raise MembershipError(
                    f"matrix is not in {GROUP_OF[fam]}({g.shape[0]}): residual {res:.3e}"
                )
        object.__setattr__(self, "matrix", _frozen(g))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def group(self) -> str:
        return GROUP_OF[self.family]

    def __matmul__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        if other.family != self.family or other.n != self.n:
            raise FamilyMismatchError(f"{self.group}({self.n}) vs {other.group}({other.n})")
        return GroupElement(self.matrix @ other.matrix, self.family, tol=None)

    def inverse(self) -> "GroupElement":
        return GroupElement(np.linalg.inv(self.matrix), self.family, tol=None)

    def deviation(self) -> float:
        """Distance from the group manifold (orthogonality and determinant)."""
        return _group_residual(self.matrix, self.family)


def identity(family: str, n: int) -> GroupElement:
    fam = normalize_family(family)
    return GroupElement(np.eye(n, dtype=complex if fam == "su" else float), fam)


def zero(family: str, n: int) -> AlgebraElement:
    fam = normalize_family(family)
    return AlgebraElement(np.zeros((n, n), dtype=complex if fam == "su" else float), fam)


# --------------------------------------------------------------------------
# matrix exponential: scaling and squaring with the degree-13 diagonal Pade
# approximant (Higham 2005), batched over leading axes

_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square matrix or a stack of them.

    Each matrix in a stack gets its own scaling exponent, so the result for a
    slice does not depend on what else is in the batch.
    """
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {a.shape}")
    shape = a.shape
    n = shape[-1]
    a = a.reshape((-1, n, n))
    dtype = np.result_type(a.dtype, float)
    a = a.astype(dtype)

    norm1 = np.max(np.sum(np.abs(a), axis=-2), axis=-1)
    with np.errstate(divide="ignore"):
        s = np.where(
            norm1 > _THETA13, np.ceil(np.log2(norm1 / _THETA13)), 0.0
        ).astype(int)
    s = np.maximum(s, 0)
    a = a / (2.0 ** s)[:, None, None]

    b = _PADE13
    ident = np.broadcast_to(np.eye(n, dtype=dtype), a.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (
        a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        + b[7] * a6
        + b[5] * a4
        + b[3] * a2
        + b[1] * ident
    )
    v = (
        a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        + b[6] * a6
        + b[4] * a4
        + b[2] * a2
        + b[0] * ident
    )
    # (V - U)^-1 (V + U) written as I + (V - U)^-1 2U: exact at the zero matrix
    r = ident + np.linalg.solve(v - u, 2.0 * u)
    for k in range(int(s.max(initial=0))):
        idx = np.nonzero(s > k)[0]
        sub = r[idx]
        r[idx] = sub @ sub
    return r.reshape(shape)


def _commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# --------------------------------------------------------------------------
# operations


def _same(x: AlgebraElement, y: AlgebraElement):
    if x.family != y.family or x.n != y.n:
        raise FamilyMismatchError(f"{x.family}({x.n}) vs {y.family}({y.n})")


def bracket(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    """Lie bracket ``[X, Y] = -(XY - YX)``."""
    _same(x, y)
    return AlgebraElement(-_commutator(x.matrix, y.matrix), x.family, tol=None)


def group_exp(x: AlgebraElement) -> GroupElement:
    return GroupElement(expm(x.matrix), x.family, tol=None)


def group_adjoint(g: GroupElement, x: AlgebraElement) -> AlgebraElement:
    """Ad(g) X = g X g^-1."""
    if g.family != x.family or g.n != x.n:
        raise FamilyMismatchError(f"{g.group}({g.n}) acting on {x.family}({x.n})")
    m = g.matrix @ x.matrix @ np.linalg.inv(g.matrix)
    return AlgebraElement(m, x.family, tol=None)


def killing_constant(family: str, n: int) -> float:
    return _KILLING_CONSTANTS[normalize_family(family)](n)


def killing_form(x: AlgebraElement, y: AlgebraElement) -> float:
    _same(x, y)
    c = killing_constant(x.family, x.n)
    return float(c * np.real(np.trace(x.matrix @ y.matrix)))


def cartan_theta(x: AlgebraElement) -> AlgebraElement:
    """Cartan involution, negative (conjugate) transpose."""
    return AlgebraElement(-x.matrix.conj().T, x.family, tol=None)


def btheta(x: AlgebraElement, y: AlgebraElement) -> float:
    """Positive-definite form B_theta(X, Y) = -B(X, theta Y) = c Re tr(X Y^H)."""
    _same(x, y)
    c = killing_constant(x.family, x.n)
    return float(c * np.real(np.vdot(y.matrix, x.matrix)))


# --------------------------------------------------------------------------
# descriptors


def _unit(n, i, j, dtype=float):
    e = np.zeros((n, n), dtype=dtype)
    e[i, j] = 1.0
    return e


def natural_basis(family: str, n: int) -> list[np.ndarray]:
    """A basis of the algebra as a real vector space (not normalized)."""
    fam = normalize_family(family)
    if n < 2:
        raise ValueError("n must be at least 2")
    out = []
    if fam == "so":
        for i in range(n):
            for j in range(i + 1, n):
                out.append(_unit(n, i, j) - _unit(n, j, i))
    elif fam == "sl":
        for i in range(n - 1):
            out.append(_unit(n, i, i) - _unit(n, i + 1, i + 1))
        for i in range(n):
            for j in range(n):
                if i != j:
                    out.append(_unit(n, i, j))
    else:
        for i in range(n - 1):
            out.append(1j * (_unit(n, i, i, complex) - _unit(n, i + 1, i + 1, complex)))
        for i in range(n):
            for j in range(i + 1, n):
                out.append(_unit(n, i, j, complex) - _unit(n, j, i, complex))
                out.append(1j * (_unit(n, i, j, complex) + _unit(n, j, i, complex)))
    return out


def algebra_dimension(family: str, n: int) -> int:
    fam = normalize_family(family)
    return n * (n - 1) // 2 if fam == "so" else n * n - 1


def _real_vec(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if np.iscomplexobj(m):
        return np.concatenate([m.real.ravel(), m.imag.ravel()])
    return m.ravel()


def ad_matrix(x: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    """Matrix of ad_X in ``basis`` (ad_X(Y) = [Y, X] with the package bracket)."""
    b = np.stack([_real_vec(e) for e in basis], axis=1)
    cols = [_real_vec(-_commutator(e, x)) for e in basis]
    coords, *_ = np.linalg.lstsq(b, np.stack(cols, axis=1), rcond=None)
    return coords


@dataclass(frozen=True, eq=False)
class AlgebraDescriptor:
    family: str
    n: int
    dimension: int
    basis: tuple[AlgebraElement, ...]
    killing_constant: float

    def coordinates(self, x) -> np.ndarray:
        """Coordinates of X (element or raw matrix) in the B_theta-orthonormal basis."""
        m = x.matrix if isinstance(x, AlgebraElement) else np.asarray(x)
        return coordinates_batch(self, m[None])[0]

    def from_coordinates(self, coords) -> AlgebraElement:
        m = np.tensordot(np.asarray(coords, dtype=float), self.basis_stack, axes=1)
        return AlgebraElement(m, self.family, tol=None)

    @property
    def basis_stack(self) -> np.ndarray:
        return _basis_stack(self.family, self.n)

    def random_element(self, rng: np.random.Generator, max_norm: float = 1.0) -> AlgebraElement:
        """Random element with uniform direction and Frobenius norm uniform in [0, max_norm]."""
        v = rng.standard_normal(self.dimension)
        v /= np.linalg.norm(v)
        x = self.from_coordinates(v).matrix
        x = x * (max_norm * rng.uniform() / np.linalg.norm(x))
        return AlgebraElement(x, self.family, tol=None)


def coordinates_batch(desc: AlgebraDescriptor, mats: np.ndarray) -> np.ndarray:
    """B_theta coordinates of a stack of matrices, shape (..., dim)."""
    basis = desc.basis_stack
    mats = np.asarray(mats)
    ip = np.real(np.einsum("...ab,kab->...k", mats, basis.conj()))
    return desc.killing_constant * ip


@lru_cache(maxsize=None)
def _basis_stack(family: str, n: int) -> np.ndarray:
    d = descriptor(family, n)
    s = np.stack([e.matrix for e in d.basis])
    s.setflags(write=False)
    return s


@lru_cache(maxsize=None)
def descriptor(family: str, n: int) -> AlgebraDescriptor:
    """Algebra descriptor with a B_theta-orthonormal basis and a verified Killing constant."""
    fam = normalize_family(family)
    if fam == "so" and n < 3:
        raise ValueError("so(n) is semi-simple only for n >= 3")
    nat = natural_basis(fam, n)
    c = killing_constant(fam, n)

    # the Killing constant is validated against tr(ad_X ad_Y), not assumed
    ads = [ad_matrix(e, nat) for e in nat]
    for p, ep in enumerate(nat):
        for q, eq_ in enumerate(nat):
            oracle = float(np.trace(ads[p] @ ads[q]))
            claimed = c * float(np.real(np.trace(ep @ eq_)))
            if not math.isclose(oracle, claimed, rel_tol=1e-9, abs_tol=1e-9):
                raise AssertionError(
                    f"Killing constant {c} fails for {fam}({n}): {oracle} vs {claimed}"
                )

    def ip(a, b):
        return c * float(np.real(np.vdot(b, a)))

    ortho = []
    for e in nat:
        v = e.copy()
        for _ in range(2):
            for u in ortho:
                v = v - ip(v, u) * u
        v = v / math.sqrt(ip(v, v))
        ortho.append(v)
    basis = tuple(AlgebraElement(v, fam) for v in ortho)
    return AlgebraDescriptor(fam, n, algebra_dimension(fam, n), basis, c)


def random_group_element(family: str, n: int, rng: np.random.Generator,
                         max_norm: float = math.pi) -> GroupElement:
    """exp of a random algebra element of Frobenius norm at most ``max_norm``."""
    x = descriptor(family, n).random_element(rng, max_norm)
    return group_exp(x)
