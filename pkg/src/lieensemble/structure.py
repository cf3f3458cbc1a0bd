"""Distinguished and pre-distinguished generator sets.

A finite spanning set {X_i} is distinguished when every bracket [X_i, X_j]
equals lambda * X_k for some k and real lambda, and every X_k arises this way
with a nonzero lambda.  Checks here are numerical, so "equals" means within a
relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .liecore import (
    AlgebraElement,
    FamilyMismatchError,
    _commutator,
    algebra_dimension,
    coordinates_batch,
    descriptor,
    normalize_family,
)

TOL_CLOSURE = 1e-9
TOL_PROJ = 1e-9
# an arithmetic pattern must show at least this many terms inside the horizon
MIN_PATTERN_TERMS = 3


class NotDistinguishedError(Exception):
    """Raised when a set fails one clause of the distinguished-set definition.

    ``clause`` is one of ``"span"``, ``"closure"`` or ``"surjectivity"``;
    ``witness`` holds the offending indices.
    """

    def __init__(self, clause: str, witness, message: str):
        super().__init__(message)
        self.clause = clause
        self.witness = witness


class ClosureOverflowError(Exception):
    """Too many projective representatives: not projectively finite at this tolerance."""


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    elements: tuple[AlgebraElement, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        els = tuple(self.elements)
        if not els:
            raise ValueError("a generator set needs at least one element")
        fam, n = els[0].family, els[0].n
        for x in els:
            if x.family != fam or x.n != n:
                raise FamilyMismatchError("generator set mixes families or sizes")
            if not np.any(x.matrix):
                raise ValueError("generator set contains the zero matrix")
        labels = tuple(self.labels) if self.labels else tuple(f"X{i + 1}" for i in range(len(els)))
        if len(labels) != len(els):
            raise ValueError("one label per element is required")
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "labels", labels)

    @property
    def family(self) -> str:
        return self.elements[0].family

    @property
    def n(self) -> int:
        return self.elements[0].n

    @property
    def descriptor(self):
        return descriptor(self.family, self.n)

    @property
    def stack(self) -> np.ndarray:
        return np.stack([x.matrix for x in self.elements])

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i) -> AlgebraElement:
        return self.elements[i]

    def subset(self, indices) -> "GeneratorSet":
        indices = list(indices)
        return GeneratorSet(
            tuple(self.elements[i] for i in indices), tuple(self.labels[i] for i in indices)
        )

    def scaled(self, c: float) -> "GeneratorSet":
        return GeneratorSet(tuple(c * x for x in self.elements), self.labels)


# --------------------------------------------------------------------------
# catalog


def _e(n, i, j, dtype=float):
    m = np.zeros((n, n), dtype=dtype)
    m[i, j] = 1
    return m


CATALOG_VARIANTS = {
    "so": ("standard", "omega"),
    "sl": ("A", "A'", "chevalley"),
    "su": ("compact", "pauli", "compact-pair"),
}


def catalog_set(family: str, n: int, variant: str = "standard") -> GeneratorSet:
    """Catalogued distinguished (or pre-distinguished) sets.

    so(n):  ``standard``  -- for n = 3 the X_i = e_j e_k^T - e_k e_j^T with
                             det(e_i, e_j, e_k) = 1; otherwise Omega_ij.
            ``omega``     -- Omega_ij = e_i e_j^T - e_j e_i^T, i < j.
    sl(2):  ``A``, ``A'`` -- the two inequivalent sets {H, X, Y}, {H', X', Y'}.
    sl(n):  ``chevalley`` -- E_ii - E_jj (i < j), E_ij and E_ji (i != j).
    su(n):  ``compact``   -- per pair i < j: i(E_ij + E_ji), E_ij - E_ji,
                             i(E_ii - E_jj); for n = 2 this is {i sigma_k}.
            ``compact-pair`` -- only E_ij - E_ji and i(E_ij + E_ji); this set is
                             pre-distinguished, not distinguished.
    """
    fam = normalize_family(family)
    if variant == "standard" and fam != "so":
        variant = {"sl": "chevalley", "su": "compact"}[fam]
    if variant not in CATALOG_VARIANTS[fam]:
        raise ValueError(f"unsupported catalog variant {variant!r} for {fam}")
    if fam == "so" and n < 3 or n < 2:
        raise ValueError(f"unsupported size n={n} for {fam}")

    els, labels = [], []
    if fam == "so":
        if variant == "standard" and n == 3:
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                els.append(_e(3, j, k) - _e(3, k, j))
                labels.append(f"X{i + 1}")
        else:
            for i in range(n):
                for j in range(i + 1, n):
                    els.append(_e(n, i, j) - _e(n, j, i))
                    labels.append(f"Omega{i + 1}{j + 1}")
    elif fam == "sl":
        if variant in ("A", "A'"):
            if n != 2:
                raise ValueError(f"variant {variant!r} exists only for sl(2)")
            h = np.diag([1.0, -1.0])
            if variant == "A":
                els = [h, _e(2, 0, 1), _e(2, 1, 0)]
                labels = ["H", "X", "Y"]
            else:
                els = [h, np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[0.0, 1.0], [-1.0, 0.0]])]
                labels = ["H'", "X'", "Y'"]
        else:
            for i in range(n):
                for j in range(i + 1, n):
                    els.append(_e(n, i, i) - _e(n, j, j))
                    labels.append(f"H{i + 1}{j + 1}")
            for i in range(n):
                for j in range(n):
                    if i != j:
                        els.append(_e(n, i, j))
                        labels.append(f"E{i + 1}{j + 1}")
    else:
        if variant == "pauli" and n != 2:
            raise ValueError("variant 'pauli' exists only for su(2)")
        for i in range(n):
            for j in range(i + 1, n):
                y = _e(n, i, j, complex) - _e(n, j, i, complex)
                z = 1j * (_e(n, i, j, complex) + _e(n, j, i, complex))
                ih = 1j * (_e(n, i, i, complex) - _e(n, j, j, complex))
                tag = f"{i + 1}{j + 1}"
                if variant == "compact-pair":
                    els += [y, z]
                    labels += [f"Y{tag}", f"Z{tag}"]
                else:
                    els += [z, y, ih]
                    labels += [f"Z{tag}", f"Y{tag}", f"iH{tag}"]
    return GeneratorSet(tuple(AlgebraElement(m, fam) for m in els), tuple(labels))


# --------------------------------------------------------------------------
# bracket tables


@dataclass(frozen=True)
class BracketEntry:
    k: int | None  # None means the bracket vanishes
    lam: float
    residual: float


@dataclass(frozen=True, eq=False)
class BracketTable:
    labels: tuple[str, ...]
    entries: dict  # (i, j) -> BracketEntry

    def get(self, i: int, j: int) -> BracketEntry:
        return self.entries[(i, j)]

    def max_residual(self) -> float:
        return max((e.residual for e in self.entries.values()), default=0.0)

    def to_dict(self) -> dict:
        rows = []
        for (i, j), e in sorted(self.entries.items()):
            rows.append(
                {
                    "i": i,
                    "j": j,
                    "k": e.k,
                    "lambda": e.lam,
                    "residual": e.residual,
                    "zero": e.k is None,
                }
            )
        return {"labels": list(self.labels), "entries": rows}


def _fro(a, b) -> float:
    return float(np.real(np.vdot(b, a)))


def _match_bracket(b: np.ndarray, mats: np.ndarray, norms2: np.ndarray, tol: float, zero_thresh: float):
    bn = float(np.linalg.norm(b))
    if bn <= zero_thresh:
        return BracketEntry(None, 0.0, bn)
    for k in range(len(mats)):
        lam = float(_fro(b, mats[k]) / norms2[k])
        res = float(np.linalg.norm(b - lam * mats[k])) / bn
        if res <= tol:
            return BracketEntry(k, lam, res)
    return None


def span_rank(gset: GeneratorSet, tol: float = TOL_CLOSURE) -> int:
    """Rank of the B_theta Gram matrix of the set."""
    d = gset.descriptor
    coords = coordinates_batch(d, gset.stack)
    gram = coords @ coords.T
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def verify_distinguished(gset: GeneratorSet, tol_closure: float = TOL_CLOSURE) -> BracketTable:
    """Check spanning, closure up to scaling, and surjectivity with nonzero scalars.

    Returns the full bracket table, or raises :class:`NotDistinguishedError`
    naming the first violated clause.
    """
    dim = algebra_dimension(gset.family, gset.n)
    rank = span_rank(gset, tol_closure)
    if rank < dim:
        raise NotDistinguishedError(
            "span", {"rank": rank, "dimension": dim},
            f"set spans a {rank}-dimensional subspace of a {dim}-dimensional algebra",
        )
    mats = gset.stack
    norms2 = np.sum(np.abs(mats) ** 2, axis=(1, 2))
    norms = np.sqrt(norms2)
    m = len(gset)
    entries = {}
    for i in range(m):
        entries[(i, i)] = BracketEntry(None, 0.0, 0.0)
        for j in range(i + 1, m):
            b = -_commutator(mats[i], mats[j])
            zt = tol_closure * max(norms[i], norms[j]) ** 2
            e = _match_bracket(b, mats, norms2, tol_closure, zt)
            if e is None:
                raise NotDistinguishedError(
                    "closure", {"i": i, "j": j},
                    f"[{gset.labels[i]}, {gset.labels[j]}] is not a multiple of any element",
                )
            entries[(i, j)] = e
            entries[(j, i)] = BracketEntry(e.k, -e.lam, e.residual)
    hit = set()
    for e in entries.values():
        if e.k is not None and abs(e.lam) > tol_closure:
            hit.add(e.k)
    for k in range(m):
        if k not in hit:
            raise NotDistinguishedError(
                "surjectivity", {"k": k},
                f"{gset.labels[k]} is not reached by any bracket with nonzero scalar",
            )
    return BracketTable(gset.labels, entries)


# --------------------------------------------------------------------------
# projective closure


def _canonical(m: np.ndarray) -> np.ndarray:
    """Unit Frobenius norm and a canonical real sign: first entry of
    magnitude above 1e-12 gets positive real part (positive imaginary part
    when its real part vanishes)."""
    m = m / np.linalg.norm(m)
    flat = m.ravel()
    for v in flat:
        if abs(v) > 1e-12:
            key = v.real if abs(v.real) > 1e-12 else getattr(v, "imag", 0.0)
            if key < 0:
                m = -m
            break
    return m


@dataclass(frozen=True, eq=False)
class ProjectiveClosure:
    family: str
    representatives: tuple[np.ndarray, ...]
    depth_found: tuple[frozenset, ...]  # per representative
    layers: tuple[frozenset, ...]  # per depth, representative indices present
    new_by_depth: tuple[int, ...]
    finite: bool
    max_depth: int

    @property
    def size(self) -> int:
        return len(self.representatives)

    def as_generator_set(self) -> GeneratorSet:
        return GeneratorSet(
            tuple(AlgebraElement(r, self.family, tol=None) for r in self.representatives),
            tuple(f"R{i + 1}" for i in range(self.size)),
        )

    def size_by_depth(self) -> list[int]:
        return [int(v) for v in np.cumsum(self.new_by_depth)]

    def find(self, m: np.ndarray, tol_proj: float = TOL_PROJ) -> int | None:
        return _find_parallel(self.representatives, m, tol_proj)

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "finite": self.finite,
            "max_depth": self.max_depth,
            "new_by_depth": list(self.new_by_depth),
            "depth_found": [sorted(d) for d in self.depth_found],
        }


def _find_parallel(reps, m, tol_proj):
    mn = np.linalg.norm(m)
    for idx, r in enumerate(reps):
        cos = _fro(m, r) / (mn * np.linalg.norm(r))
        if abs(cos) >= 1.0 - tol_proj:
            return idx
    return None


def lie_closure(gset: GeneratorSet, max_depth: int, tol_proj: float = TOL_PROJ,
                cap: int | None = None) -> ProjectiveClosure:
    """Breadth-first projective closure of the Lie products generated by ``gset``.

    Depth-k products are brackets of a depth-p and a depth-q product with
    p + q = k - 1.  Since the bracket is bilinear, working with projective
    representatives loses nothing.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    dim = algebra_dimension(gset.family, gset.n)
    cap = 10 * dim if cap is None else cap
    reps: list[np.ndarray] = []
    found: list[set] = []
    layers: list[set] = []
    new_by_depth = []

    def register(m, depth):
        idx = _find_parallel(reps, m, tol_proj)
        if idx is None:
            reps.append(_canonical(m))
            found.append(set())
            idx = len(reps) - 1
            if len(reps) > cap:
                raise ClosureOverflowError(
                    f"more than {cap} projective representatives at depth {depth}"
                )
        found[idx].add(depth)
        return idx

    before = 0
    layer0 = set()
    for x in gset.elements:
        layer0.add(register(x.matrix, 0))
    layers.append(layer0)
    new_by_depth.append(len(reps) - before)

    for k in range(1, max_depth + 1):
        before = len(reps)
        layer = set()
        for p in range(k):
            q = k - 1 - p
            for a in sorted(layers[p]):
                for b in sorted(layers[q]):
                    prod = -_commutator(reps[a], reps[b])
                    if np.linalg.norm(prod) <= tol_proj:
                        continue
                    layer.add(register(prod, k))
        layers.append(layer)
        new_by_depth.append(len(reps) - before)

    tail = new_by_depth[-2:] if max_depth >= 1 else new_by_depth
    finite = len(new_by_depth) >= 2 and all(v == 0 for v in tail)
    return ProjectiveClosure(
        gset.family,
        tuple(reps),
        tuple(frozenset(f) for f in found),
        tuple(frozenset(l) for l in layers),
        tuple(new_by_depth),
        finite,
        max_depth,
    )


def verify_pre_distinguished(gset: GeneratorSet, max_depth: int = 6,
                             tol: float = TOL_CLOSURE) -> tuple[ProjectiveClosure, BracketTable]:
    closure = lie_closure(gset, max_depth, tol_proj=tol)
    table = verify_distinguished(closure.as_generator_set(), tol)
    return closure, table


# --------------------------------------------------------------------------
# indicator sequences


@dataclass(frozen=True)
class IndicatorSequence:
    index: int
    label: str
    depths: tuple[int, ...]
    pattern: tuple[int, int] | None  # (delta0, delta)
    max_depth: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "label": self.label,
            "depths": list(self.depths),
            "pattern": None if self.pattern is None else
            {"delta0": self.pattern[0], "delta": self.pattern[1]},
            "note": "horizon too small to detect a pattern" if self.pattern is None else "",
        }


def detect_pattern(depths, max_depth: int, min_terms: int = MIN_PATTERN_TERMS):
    """Smallest (delta, delta0), reported as (delta0, delta), such that every
    delta0 + N*delta <= max_depth lies in ``depths`` and at least ``min_terms``
    such terms fit in the horizon."""
    ds = set(depths)
    for delta in range(1, 5):
        for d0 in range(0, max_depth + 1):
            terms = list(range(d0, max_depth + 1, delta))
            if len(terms) < min_terms:
                break
            if all(t in ds for t in terms):
                return d0, delta
    return None


def indicator_sequences(f: GeneratorSet, fbar: GeneratorSet, max_depth: int,
                        tol_proj: float = TOL_PROJ) -> list[IndicatorSequence]:
    """Depths at which a Lie product of ``f`` is parallel to each element of ``fbar``."""
    closure = lie_closure(f, max_depth, tol_proj=tol_proj)
    out = []
    for i, x in enumerate(fbar.elements):
        idx = closure.find(x.matrix, tol_proj)
        if idx is None:
            raise ValueError(
                f"{fbar.labels[i]} is not projectively contained in the closure of F"
            )
        depths = tuple(sorted(closure.depth_found[idx]))
        out.append(IndicatorSequence(i, fbar.labels[i], depths,
                                     detect_pattern(depths, max_depth), max_depth))
    return out
