import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from convhash._validation import on_simplex
from convhash.archetypes import (
    AaConfig,
    ArchetypalAnalysis,
    ArchetypalDictionary,
    ConcatenatedDictionary,
    encode,
    encode_batch,
    furthest_sum,
    learn_dictionary,
    simplex_lstsq,
    simplex_lstsq_batch,
)
from convhash.exceptions import DataError

TRIANGLE = np.array([[0.0, 4.0, 1.0], [0.0, 0.0, 3.0]])


def simplex_grid(n, steps):
    """Every point of the simplex in R^n whose coordinates are multiples of 1/steps."""
    pts = []
    for bars in itertools.combinations(range(steps + n - 1), n - 1):
        edges = (-1,) + bars + (steps + n - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(n)])
    return np.array(pts, dtype=np.float64) / steps


def objective(D, x, y):
    r = x - D @ y
    return float(r @ r)


def dictionary_of(D, label="c"):
    return ConcatenatedDictionary([ArchetypalDictionary(np.asarray(D, dtype=float), None, label)])


# simplex-constrained least squares ----------------------------------------

def test_simplex_grid_helper():
    g = simplex_grid(3, 4)
    assert len(g) == 15
    assert np.allclose(g.sum(axis=1), 1)


def test_encode_recovers_archetype():
    rng = np.random.default_rng(0)
    Df = dictionary_of(rng.standard_normal((20, 8)))
    for j in range(8):
        y = encode(Df.D_f[:, j], Df)
        np.testing.assert_allclose(y, np.eye(8)[j], atol=1e-4)


def test_encode_barycentric():
    Df = dictionary_of(np.vstack([TRIANGLE, np.ones((1, 3))]))  # plane z = 1
    rng = np.random.default_rng(1)
    for _ in range(20):
        lam = rng.dirichlet(np.ones(3))
        x = Df.D_f @ lam
        bary = np.linalg.solve(Df.D_f, x)
        np.testing.assert_allclose(encode(x, Df), bary, atol=1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_encode_beats_simplex_grid_qd5(seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((4, 5))
    x = rng.standard_normal(4)
    grid = simplex_grid(5, 50)
    R = x[None, :] - grid @ D.T
    best_grid = np.einsum("ij,ij->i", R, R).min()
    assert objective(D, x, encode(x, dictionary_of(D))) <= best_grid + 1e-12


def kkt_gap(D, x, y, tol=1e-8):
    g = D.T @ (D @ y - x)
    support = y > tol
    lam = g[support].mean()
    return max(np.abs(g[support] - lam).max(), lam - g.min())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 30), st.integers(2, 60))
def test_solution_is_feasible_and_kkt(seed, K, n):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((K, n))
    x = rng.standard_normal(K)
    y = simplex_lstsq(D, x)
    assert on_simplex(y)
    scale = max(1.0, np.abs(D.T @ x).max(), (D * D).sum(axis=0).max())
    assert kkt_gap(D, x, y) <= 1e-6 * scale


def test_support_within_caratheodory_bound():
    rng = np.random.default_rng(2)
    K = 20
    Df = dictionary_of(rng.standard_normal((K, 300)))
    for _ in range(20):
        y = encode(rng.standard_normal(K), Df)
        assert np.count_nonzero(y > 1e-3) <= K + 1


def test_zero_input_minimises_norm():
    rng = np.random.default_rng(3)
    D = rng.standard_normal((3, 6))
    y = simplex_lstsq(D, np.zeros(3))
    assert on_simplex(y)
    grid = simplex_grid(6, 20)
    assert objective(D, np.zeros(3), y) <= np.min(np.sum((grid @ D.T) ** 2, axis=1)) + 1e-12


def test_equal_columns_tie_to_lower_index():
    col = np.array([1.0, 2.0, 3.0])
    D = np.column_stack([np.zeros(3), col, col, -col])
    y = simplex_lstsq(D, col)
    np.testing.assert_allclose(y, [0, 1, 0, 0], atol=1e-12)


def test_warm_start_reaches_same_objective():
    rng = np.random.default_rng(4)
    D = rng.standard_normal((10, 40))
    x = rng.standard_normal(10)
    cold = simplex_lstsq(D, x)
    warm = simplex_lstsq(D, x, init=rng.dirichlet(np.ones(40)))
    assert objective(D, x, warm) == pytest.approx(objective(D, x, cold), rel=1e-9, abs=1e-12)


def test_batch_solver_matches_single():
    rng = np.random.default_rng(5)
    D = rng.standard_normal((12, 30))
    X = rng.standard_normal((12, 25))
    Y = simplex_lstsq_batch(D, X)
    for i in range(25):
        # D.T @ X in one product differs from per-column products by an ulp
        np.testing.assert_allclose(Y[:, i], simplex_lstsq(D, X[:, i], gram=D.T @ D), rtol=0, atol=1e-12)


def test_encode_batch_equivalence():
    rng = np.random.default_rng(6)
    Df = dictionary_of(rng.standard_normal((15, 40)))
    X = rng.standard_normal((15, 100))
    batch = encode_batch(X, Df)
    assert batch.shape == (100, 40)
    for i in range(100):
        np.testing.assert_array_equal(batch[i], encode(X[:, i], Df))
    np.testing.assert_array_equal(encode_batch(X[:, :1], Df)[0], encode(X[:, 0], Df))
    assert encode_batch(np.zeros((15, 0)), Df).shape == (0, 40)


def test_encode_is_deterministic():
    rng = np.random.default_rng(7)
    Df = dictionary_of(rng.standard_normal((15, 40)))
    x = rng.standard_normal(15)
    assert np.array_equal(encode(x, Df), encode(x.copy(), Df))


def test_encode_errors():
    Df = dictionary_of(np.eye(3))
    with pytest.raises(DataError, match="dictionary/input mismatch"):
        encode(np.ones(4), Df)
    with pytest.raises(DataError, match="dictionary/input mismatch"):
        encode_batch(np.ones((4, 2)), Df)
    with pytest.raises(DataError, match="invalid data"):
        encode(np.array([1.0, np.nan, 0.0]), Df)


# archetypal analysis --------------------------------------------------------

def match_columns(A, B):
    """Smallest max column error over all column pairings."""
    return min(
        np.abs(A[:, list(p)] - B).max() for p in itertools.permutations(range(A.shape[1]))
    )


def test_triangle_vertices_are_recovered():
    res = learn_dictionary(TRIANGLE, AaConfig(d=3))
    assert res.objective[-1] < 1e-6
    assert match_columns(res.D, TRIANGLE) < 1e-3


def test_self_representation_when_l_equals_d():
    X = np.random.default_rng(8).standard_normal((6, 4))
    res = learn_dictionary(X, AaConfig(d=4))
    assert res.objective[-1] < 1e-6


def test_learn_dictionary_invariants():
    X = np.random.default_rng(9).standard_normal((8, 60))
    res = learn_dictionary(X, AaConfig(d=5, max_outer_iters=40), class_label="a")
    assert res.D.shape == (8, 5) and res.B.shape == (60, 5) and res.d == 5
    assert on_simplex(res.B)
    np.testing.assert_array_equal(res.D, X @ res.B)
    assert np.all(np.diff(res.objective) <= 1e-8)
    assert res.class_label == "a"


def test_learn_dictionary_deterministic():
    X = np.random.default_rng(10).standard_normal((8, 60))
    a = learn_dictionary(X, AaConfig(d=5, seed=3))
    b = learn_dictionary(X, AaConfig(d=5, seed=3))
    assert np.array_equal(a.D, b.D) and a.objective == b.objective


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6))
def test_objective_never_increases(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 30))
    res = learn_dictionary(X, AaConfig(d=d, max_outer_iters=25, seed=seed))
    assert np.all(np.diff(res.objective) <= 1e-8)


def test_learn_dictionary_errors():
    with pytest.raises(DataError, match="insufficient data for d archetypes"):
        learn_dictionary(np.ones((3, 4)), AaConfig(d=5))
    X = np.ones((3, 10))
    X[0, 0] = np.inf
    with pytest.raises(DataError, match="invalid data"):
        learn_dictionary(X, AaConfig(d=2))
    with pytest.raises(ValueError):
        AaConfig(d=1)
    with pytest.raises(ValueError):
        AaConfig(tol=0)


def test_furthest_sum_picks_extremes():
    rng = np.random.default_rng(11)
    interior = rng.dirichlet(np.ones(3), 50) @ TRIANGLE.T
    X = np.hstack([interior.T, TRIANGLE])
    picks = furthest_sum(X, 3, seed=0)
    assert sorted(picks) == [50, 51, 52]


def test_concatenated_dictionary_layout():
    rng = np.random.default_rng(12)
    dics = [
        learn_dictionary(rng.standard_normal((10, 30)), AaConfig(d=25, max_outer_iters=1), class_label=k)
        for k in range(50)
    ]
    Df = ConcatenatedDictionary(dics)
    assert Df.qd == 1250 and Df.q == 50 and Df.K == 10
    assert Df.class_offsets[0] == (0, 25) and Df.class_offsets[-1] == (1225, 1250)
    assert Df.owner(0) == 0 and Df.owner(1249) == 49
    np.testing.assert_array_equal(Df.dictionary(3), dics[3].D)
    with pytest.raises(ValueError):
        Df.D_f[0, 0] = 1.0


def test_estimator_api():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((40, 6))
    aa = ArchetypalAnalysis(n_archetypes=4, max_iter=20, random_state=1)
    codes = aa.fit_transform(X)
    assert aa.archetypes_.shape == (4, 6)
    assert codes.shape == (40, 4)
    assert on_simplex(codes, axis=1)
    assert clone(aa).get_params() == aa.get_params()
    assert aa.n_iter_ == len(aa.objective_) - 1
