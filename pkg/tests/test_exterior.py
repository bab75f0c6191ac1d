import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from distcurrents.exterior import (
    KVector,
    adjoint_entry,
    graph_key,
    graph_nvector,
    graph_tangent_vectors,
    laplace_minor,
    minor,
    pair,
    wedge_vectors,
)
from distcurrents.multiindex import InvalidIndexError, enumerate_indices


def test_minor_examples():
    eye = np.eye(3)
    assert minor(eye, (1, 3), (1, 3)) == 1.0
    assert minor(eye, (1, 2), (1, 3)) == 0.0
    assert minor([[1, 2], [3, 4]], (1, 2), (1, 2)) == -2.0
    assert minor(np.random.default_rng(0).random((3, 2)), (), ()) == 1.0
    with pytest.raises(InvalidIndexError):
        minor(eye, (1, 2), (1,))


def test_minor_rows_and_columns_convention():
    # rows index the target, columns the source
    A = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    assert minor(A, (3,), (1,)) == 3.0
    assert minor(A, (1, 3), (1, 2)) == pytest.approx(1 * 6 - 3 * 4)


def test_minor_batched_matches_loop(rng):
    A = rng.standard_normal((5, 7, 4, 4))
    for a in enumerate_indices(3, 4):
        for b in enumerate_indices(3, 4):
            batch = minor(A, a, b)
            loop = np.array([[minor(A[i, j], a, b) for j in range(7)] for i in range(5)])
            np.testing.assert_allclose(batch, loop, rtol=0, atol=1e-13)


def test_minor_four_by_four_uses_lu(rng):
    A = rng.standard_normal((4, 4))
    assert minor(A, (1, 2, 3, 4), (1, 2, 3, 4)) == pytest.approx(np.linalg.det(A), rel=1e-12)


def test_adjoint_examples():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert adjoint_entry(A, (1, 2), (1, 2), 1, 1) == 4.0
    assert adjoint_entry(A, (1,), (2,), 2, 1) == 1.0
    assert adjoint_entry(np.eye(2), (1, 2), (1, 2), 1, 2) == 0.0
    # classical adjugate of a 2x2: [[d, -b], [-c, a]]
    adj = np.array([[adjoint_entry(A, (1, 2), (1, 2), j, i) for j in (1, 2)] for i in (1, 2)])
    np.testing.assert_array_equal(adj, [[4.0, -2.0], [-3.0, 1.0]])
    with pytest.raises(InvalidIndexError):
        adjoint_entry(A, (1,), (1,), 2, 1)


def test_laplace_examples():
    for a in enumerate_indices(2, 3):
        assert laplace_minor(np.eye(3), a, a, a.entries[0]) == 1.0
    rank1 = np.outer([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    assert abs(laplace_minor(rank1, (1, 2), (2, 3), 2)) < 1e-12


def test_laplace_equals_minor_random(rng):
    worst = 0.0
    for _ in range(1000):
        A = rng.standard_normal((4, 4))
        for k in (2, 3, 4):
            for a in enumerate_indices(k, 4):
                b = enumerate_indices(k, 4)[rng.integers(0, len(enumerate_indices(k, 4)))]
                d = minor(A, a, b)
                scale = np.prod(np.linalg.norm(A[np.ix_([j - 1 for j in b], [i - 1 for i in a])], axis=1))
                for i in b.entries:
                    worst = max(worst, abs(laplace_minor(A, a, b, i) - d) / scale)
    assert worst <= 1e-12


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-10, 10)))
def test_minor_alternating_in_rows(A):
    swapped = A[[1, 0, 2]]
    for a in enumerate_indices(2, 3):
        assert minor(swapped, a, (1, 2)) == pytest.approx(-minor(A, a, (1, 2)), abs=1e-9)


def test_pair_examples(rng):
    x = KVector(4, 2, {(1, 2): 0.5, (2, 4): -1.5, (3, 4): 2.0})
    assert pair(x, x) == pytest.approx(0.25 + 2.25 + 4.0)
    assert pair(x, KVector(4, 2)) == 0.0
    assert pair(KVector.basis((1, 2), 3), KVector.basis((1, 3), 3)) == 0.0
    with pytest.raises(InvalidIndexError):
        pair(KVector.basis((1,), 3), KVector.basis((1, 2), 3))


def test_graph_nvector_examples():
    g = graph_nvector(np.zeros((2, 2)))
    assert g.coefficients == {(1, 2): 1.0}
    g = graph_nvector(np.array([[2.5]]))
    assert g[(1,)] == 1.0 and g[(2,)] == 2.5


def test_graph_nvector_two_by_two_norm(rng):
    Du = rng.standard_normal((2, 2))
    g = graph_nvector(Du)
    expected = sum(minor(Du, abar, b) ** 2 for k in range(3) for abar in enumerate_indices(k, 2) for b in enumerate_indices(k, 2))
    assert g.norm() ** 2 == pytest.approx(expected, rel=1e-14)
    # e_2 ^ eps_1 carries sigma((2),(1)) M_(1)^(1) = -Du[0,0]
    assert g[graph_key((2,), (1,), 2)] == pytest.approx(-Du[0, 0])


def test_graph_nvector_matches_wedge(rng):
    for n in range(1, 6):
        for N in range(1, 7 - n):
            for _ in range(3):
                Du = rng.standard_normal((N, n))
                g = graph_nvector(Du)
                w = wedge_vectors(graph_tangent_vectors(Du))
                keys = set(g.coefficients) | set(w.coefficients)
                assert max(abs(g[k] - w[k]) for k in keys) <= 1e-12
