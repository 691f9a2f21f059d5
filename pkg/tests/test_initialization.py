import numpy as np
import pytest

from archetypal import (
    DegenerateGeometryError,
    InvalidInputError,
    initialize,
    spectral_init,
    successive_projections_init,
)

from oracles import brute_spa


def test_spa_single_point():
    res = successive_projections_init(np.array([[1.0, 2.0]]), 1)
    assert res.selected_indices == (0,)
    np.testing.assert_array_equal(res.archetypes, [[1.0, 2.0]])


def test_spa_hand_example():
    X = np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 0.5]])
    res = successive_projections_init(X, 2)
    assert res.selected_indices == (0, 1)
    assert brute_spa(X, 2) == [0, 1]


def test_spa_recovers_triangle_vertices():
    rng = np.random.default_rng(0)
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]])
    X = np.vstack([rng.dirichlet(np.ones(3) * 2, 50) @ V, V])
    res = successive_projections_init(X, 3)
    assert sorted(res.selected_indices) == [50, 51, 52]
    assert np.array_equal(res.archetypes, X[list(res.selected_indices)])


def test_spa_matches_brute_force_on_random_data():
    rng = np.random.default_rng(1)
    for _ in range(20):
        X = rng.normal(size=(30, 5))
        r = int(rng.integers(1, 6))
        assert list(successive_projections_init(X, r).selected_indices) == brute_spa(X, r)


def test_spa_separable_recovery_is_exact():
    rng = np.random.default_rng(2)
    for _ in range(20):
        r = int(rng.integers(2, 6))
        d = int(rng.integers(r - 1, r + 4))
        H = rng.normal(size=(r, d))
        X = rng.dirichlet(np.ones(r), 40) @ H
        X = np.insert(X, rng.choice(40, r, replace=False), H, axis=0)
        got = successive_projections_init(X, r).archetypes
        assert sorted(map(tuple, got)) == sorted(map(tuple, H))


def test_spa_ties_go_to_lowest_index():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    assert successive_projections_init(X, 1).selected_indices == (0,)


def test_spa_row_permutation():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(25, 4))
    perm = rng.permutation(25)
    a = successive_projections_init(X, 3)
    b = successive_projections_init(X[perm], 3)
    assert [perm[i] for i in b.selected_indices] == list(a.selected_indices)


def test_spa_reports_degenerate_data():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateGeometryError) as info:
        successive_projections_init(X, 3)
    assert info.value.found == 2


def test_spectral_rank_one():
    v = np.array([3.0, -4.0]) / 5
    X = np.outer([1.0, 2.0, -0.5], v)
    res = spectral_init(X, 1)
    np.testing.assert_allclose(res.archetypes[0], -v, atol=1e-12)
    assert res.archetypes[0][np.argmax(np.abs(res.archetypes[0]))] > 0


def test_spectral_identity_gives_orthonormal_rows():
    H = spectral_init(np.eye(3), 3).archetypes
    np.testing.assert_allclose(H @ H.T, np.eye(3), atol=1e-10)


def test_spectral_spans_row_space():
    rng = np.random.default_rng(4)
    H0 = rng.normal(size=(3, 8))
    X0 = rng.dirichlet(np.ones(3), 40) @ H0
    H = spectral_init(X0, 3).archetypes
    # sines of the principal angles between the two row spaces
    Qa, _ = np.linalg.qr(H.T)
    Qb, _ = np.linalg.qr(H0.T)
    sines = np.linalg.svd(Qb - Qa @ (Qa.T @ Qb), compute_uv=False)
    assert np.max(np.arcsin(np.clip(sines, 0, 1))) < 1e-8


def test_spectral_flags_rank_deficiency():
    X = np.outer(np.arange(1.0, 6.0), [1.0, 2.0, 3.0])
    res = spectral_init(X, 2)
    assert res.diagnostics["rank_deficient"]
    np.testing.assert_allclose(res.archetypes @ res.archetypes.T, np.eye(2), atol=1e-10)


def test_initialize_dispatch_and_errors():
    X = np.random.default_rng(5).normal(size=(10, 3))
    assert initialize(X, 2, "spa").method == "successive_projections"
    assert initialize(X, 2, "spectral").method == "spectral"
    with pytest.raises(InvalidInputError):
        initialize(X, 2, "random")
    with pytest.raises(InvalidInputError):
        spectral_init(X, 4)
    with pytest.raises(InvalidInputError):
        successive_projections_init(X, 11)
