import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lieensemble.liecore import AlgebraElement, bracket
from lieensemble.structure import (
    CATALOG_VARIANTS,
    ClosureOverflowError,
    GeneratorSet,
    NotDistinguishedError,
    catalog_set,
    detect_pattern,
    indicator_sequences,
    lie_closure,
    span_rank,
    verify_distinguished,
    verify_pre_distinguished,
)


def lie_bracket(a, b):
    return -(a @ b - b @ a)


def bracket_tree_depths(gens, targets, max_depth, tol=1e-9):
    """Exhaustive oracle: every bracketing tree of depth <= max_depth.

    Depth k products are [p, q] with p of depth a, q of depth b, a + b = k - 1.
    Returns, per target, the set of depths at which some nonzero product is
    parallel to it.
    """
    layers = [[g for g in gens]]
    for k in range(1, max_depth + 1):
        layer = []
        for a in range(k):
            b = k - 1 - a
            for p in layers[a]:
                for q in layers[b]:
                    m = lie_bracket(p, q)
                    if np.linalg.norm(m) > 1e-12:
                        layer.append(m)
        layers.append(layer)
    out = []
    for t in targets:
        tn = np.linalg.norm(t)
        depths = set()
        for k, layer in enumerate(layers):
            for m in layer:
                cos = abs(np.vdot(t, m).real) / (tn * np.linalg.norm(m))
                if cos >= 1 - tol:
                    depths.add(k)
                    break
        out.append(depths)
    return out


def levi(i, j, k):
    return float(np.linalg.det(np.eye(3)[[i, j, k]]))


def test_so3_catalog_is_example_set():
    xs = catalog_set("so", 3).stack
    e = np.eye(3)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        ref = np.outer(e[j], e[k]) - np.outer(e[k], e[j])
        assert np.array_equal(xs[i], ref)


def test_so3_table_is_levi_civita():
    table = verify_distinguished(catalog_set("so", 3))
    for i in range(3):
        for j in range(3):
            e = table.get(i, j)
            if i == j:
                assert e.k is None
            else:
                k = 3 - i - j
                assert e.k == k and e.lam == levi(i, j, k)
    assert table.max_residual() <= 1e-12


def test_su2_compact_is_pauli():
    s1 = np.array([[0, 1], [1, 0]], dtype=complex)
    s2 = np.array([[0, -1j], [1j, 0]])
    s3 = np.diag([1.0 + 0j, -1.0])
    xs = catalog_set("su", 2, "compact").stack
    for x, s in zip(xs, (s1, s2, s3)):
        assert np.array_equal(x, 1j * s)
    # [i s_i, i s_j]_M = -2 i s_k
    m = xs[0] @ xs[1] - xs[1] @ xs[0]
    assert np.allclose(m, -2 * xs[2], atol=0)


@pytest.mark.parametrize("family,n,variant", [
    (f, n, v) for f, vs in CATALOG_VARIANTS.items() for v in vs for n in (2, 3, 4)
    if not (f == "so" and n < 3) and not (v in ("A", "A'", "pauli") and n != 2) and v != "compact-pair"
])
def test_catalog_sets_distinguished(family, n, variant):
    gset = catalog_set(family, n, variant)
    table = verify_distinguished(gset, 1e-9)
    assert table.max_residual() <= 1e-12
    for (i, j), e in table.entries.items():
        back = table.get(j, i)
        assert back.k == e.k
        if e.k is not None:
            assert back.lam == -e.lam


def test_catalog_cardinalities():
    assert len(catalog_set("so", 5)) == 10
    assert len(catalog_set("sl", 3, "chevalley")) == 3 + 6
    assert len(catalog_set("su", 3, "compact")) == 9
    assert len(catalog_set("su", 3, "compact-pair")) == 6


def test_catalog_errors():
    with pytest.raises(ValueError):
        catalog_set("sl", 3, "A")
    with pytest.raises(ValueError):
        catalog_set("so", 2)
    with pytest.raises(ValueError):
        catalog_set("su", 2, "nope")


def test_span_deficiency_reported():
    with pytest.raises(NotDistinguishedError) as info:
        verify_distinguished(catalog_set("so", 3).subset([0, 1]))
    assert info.value.clause == "span"


def test_closure_failure_reported():
    # X1 and X1 + X2 span nothing new under brackets in a closed way
    x1, x2, x3 = catalog_set("so", 3).elements
    gset = GeneratorSet((x1, x1 + x2, x3))
    with pytest.raises(NotDistinguishedError) as info:
        verify_distinguished(gset)
    assert info.value.clause == "closure"


def test_sl2_tables():
    a = verify_distinguished(catalog_set("sl", 2, "A"))
    # package bracket: [H, X] = -2X, [H, Y] = 2Y, [X, Y] = -H
    assert (a.get(0, 1).k, a.get(0, 1).lam) == (1, -2.0)
    assert (a.get(0, 2).k, a.get(0, 2).lam) == (2, 2.0)
    assert (a.get(1, 2).k, a.get(1, 2).lam) == (0, -1.0)
    ap = verify_distinguished(catalog_set("sl", 2, "A'"))
    assert (ap.get(0, 1).k, ap.get(0, 1).lam) == (2, -2.0)
    assert (ap.get(0, 2).k, ap.get(0, 2).lam) == (1, -2.0)
    assert (ap.get(1, 2).k, ap.get(1, 2).lam) == (0, 2.0)


def test_scale_invariance_of_table():
    gset = catalog_set("so", 3)
    t1 = verify_distinguished(gset)
    t7 = verify_distinguished(gset.scaled(7.0))
    for key, e in t1.entries.items():
        f = t7.entries[key]
        assert f.k == e.k
        if e.k is not None:
            assert f.lam == pytest.approx(7.0 * e.lam, rel=1e-14)


def test_closures_small_examples():
    c = lie_closure(catalog_set("so", 3), 4)
    assert c.size == 3 and c.finite
    pair = catalog_set("so", 3).subset([1, 2])
    c = lie_closure(pair, 4)
    assert c.size == 3 and c.new_by_depth[:2] == (2, 1)
    su = lie_closure(catalog_set("su", 2, "compact-pair"), 6)
    assert su.size == 3 and su.size_by_depth()[1] == 3 and su.finite


def test_closure_idempotent():
    c = lie_closure(catalog_set("sl", 3, "chevalley").subset([0, 3, 4]), 6)
    again = lie_closure(c.as_generator_set(), 6)
    assert again.size == c.size


def test_pre_distinguished_examples():
    closure, table = verify_pre_distinguished(catalog_set("su", 3, "compact-pair"), 6)
    assert closure.size == 9
    closure, _ = verify_pre_distinguished(catalog_set("so", 3).subset([1, 2]))
    assert closure.size == 3
    with pytest.raises(NotDistinguishedError):
        verify_pre_distinguished(catalog_set("so", 3).subset([0]))


def test_closure_cap():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3))
    a -= np.trace(a) / 3 * np.eye(3)
    b -= np.trace(b) / 3 * np.eye(3)
    gset = GeneratorSet((AlgebraElement(a, "sl"), AlgebraElement(b, "sl")))
    with pytest.raises(ClosureOverflowError):
        lie_closure(gset, 8, cap=20)


def test_indicator_so3_pair_matches_tree_oracle():
    full = catalog_set("so", 3)
    pair = full.subset([1, 2])
    seqs = indicator_sequences(pair, full, 9)
    assert [s.depths for s in seqs] == [(1, 3, 5, 7, 9), (0, 2, 4, 6, 8), (0, 2, 4, 6, 8)]
    assert [s.pattern for s in seqs] == [(1, 2), (0, 2), (0, 2)]
    oracle = bracket_tree_depths(list(pair.stack), list(full.stack), 6)
    assert [set(d for d in s.depths if d <= 6) for s in seqs] == oracle


def test_indicator_sl2_pair_matches_tree_oracle():
    full = catalog_set("sl", 2, "A")
    pair = full.subset([1, 2])
    seqs = indicator_sequences(pair, full, 6)
    oracle = bracket_tree_depths(list(pair.stack), list(full.stack), 6)
    assert [set(s.depths) for s in seqs] == oracle


def test_indicator_full_set_all_depths():
    full = catalog_set("so", 3)
    for s in indicator_sequences(full, full, 6):
        assert s.depths == tuple(range(7))
        assert s.pattern == (0, 1)


def test_indicator_target_outside_closure():
    full = catalog_set("so", 3)
    with pytest.raises(ValueError):
        indicator_sequences(full.subset([0]), full, 4)


@settings(max_examples=100, deadline=None)
@given(st.sets(st.integers(0, 12), max_size=13), st.integers(3, 12))
def test_detected_patterns_are_contained(depths, max_depth):
    depths = {d for d in depths if d <= max_depth}
    pat = detect_pattern(depths, max_depth)
    if pat is not None:
        d0, delta = pat
        assert all(t in depths for t in range(d0, max_depth + 1, delta))
        assert len(range(d0, max_depth + 1, delta)) >= 3


def test_span_rank():
    assert span_rank(catalog_set("su", 3, "compact")) == 8
    assert span_rank(catalog_set("su", 3, "compact-pair")) == 6


def test_table_json_shape():
    d = verify_distinguished(catalog_set("so", 3)).to_dict()
    assert d["labels"] == ["X1", "X2", "X3"]
    assert len(d["entries"]) == 9
