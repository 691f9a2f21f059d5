import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from archetypal import (
    CSVParseError,
    InvalidInputError,
    MixtureRecipe,
    SparsityBlock,
    default_recipe,
    gen_dataset,
    gen_smooth_archetypes,
    gen_toy_2d,
    gen_weights,
    load_matrix_csv,
    save_matrix_csv,
)
from archetypal import synth
from archetypal.synth import TOY_ARCHETYPES


def test_default_recipe_block_structure():
    W = gen_weights(default_recipe(), seed=7)
    nnz = np.count_nonzero(W, axis=1)
    assert W.shape == (250, 4)
    assert np.sum(nnz == 2) == 9 and np.sum(nnz == 3) == 11 and np.sum(nnz == 4) == 230
    assert list(nnz[:9]) == [2] * 9 and list(nnz[9:20]) == [3] * 11
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)


def test_separable_recipe_contains_every_archetype():
    H0 = gen_smooth_archetypes(seed=1)
    ds = gen_dataset(H0, default_recipe(separable=True), seed=2)
    np.testing.assert_array_equal(ds.X[:4], H0)
    nnz = np.count_nonzero(ds.W0, axis=1)
    assert list(nnz[:4]) == [1] * 4 and np.sum(nnz == 4) == 226
    # without the flag no random draws are spent on the pure block
    assert np.array_equal(gen_weights(default_recipe(), 5), gen_weights(default_recipe(separable=False), 5))


def test_weights_are_reproducible():
    a = gen_weights(default_recipe(), seed=3)
    b = gen_weights(default_recipe(), seed=3)
    c = gen_weights(default_recipe(), seed=4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_dirichlet_means():
    recipe = MixtureRecipe(10000, 4, (SparsityBlock(10000, 3),))
    W = gen_weights(recipe, seed=1)
    vals = W[W > 0].reshape(10000, 3)
    # Dir(5,5,5) marginal: mean 1/3, variance (1/3)(2/3)/16
    se = np.sqrt((1 / 3) * (2 / 3) / 16 / 10000)
    assert np.all(np.abs(vals.mean(axis=0) - 1 / 3) <= 3 * se)


def test_supports_cover_all_index_sets():
    recipe = MixtureRecipe(600, 4, (SparsityBlock(600, 2),))
    W = gen_weights(recipe, seed=2)
    supports = {tuple(np.flatnonzero(w)) for w in W}
    assert len(supports) == 6


@pytest.mark.parametrize("blocks", [
    (SparsityBlock(5, 2),),
    (SparsityBlock(10, 5),),
    (SparsityBlock(10, 0),),
])
def test_invalid_recipes(blocks):
    with pytest.raises(InvalidInputError):
        MixtureRecipe(10, 4, blocks)


def test_noiseless_dataset():
    H0 = gen_smooth_archetypes(seed=0)
    ds = gen_dataset(H0, default_recipe(), seed=5)
    assert np.array_equal(ds.X, ds.X0) and ds.delta == 0.0
    assert not np.signbit(ds.Z).any()
    assert ds.X.shape == (250, 87)


def test_noisy_dataset_invariants():
    H0 = gen_smooth_archetypes(seed=0)
    ds = gen_dataset(H0, default_recipe(sigma=1e-3), seed=5)
    np.testing.assert_allclose(ds.X, ds.W0 @ ds.H0 + ds.Z, atol=1e-12)
    assert ds.delta == pytest.approx(np.linalg.norm(ds.Z, axis=1).max())
    assert abs(ds.Z.std() - 1e-3) <= 0.05e-3
    again = gen_dataset(H0, default_recipe(sigma=1e-3), seed=5)
    assert np.array_equal(ds.X, again.X)


def test_dataset_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        gen_dataset(np.ones((3, 5)), default_recipe(), seed=0)


def test_smooth_archetypes_are_positive_and_independent():
    H = gen_smooth_archetypes(r=4, d=87, seed=11)
    assert H.shape == (4, 87) and H.min() > 0
    assert np.linalg.matrix_rank(H) == 4


def test_toy_dataset():
    ds = gen_toy_2d()
    assert ds.X.shape == (500, 2)
    np.testing.assert_array_equal(ds.H0, TOY_ARCHETYPES)
    dist = np.linalg.norm(ds.X[:, None, :] - TOY_ARCHETYPES[None], axis=2)
    assert dist.min() > 1e-3
    assert np.all(ds.W0 > 0)


def _vertex_gap(X):
    return np.linalg.norm(X[:, None, :] - TOY_ARCHETYPES[None], axis=2).min()


def test_toy_dataset_skips_near_separable_draws(monkeypatch):
    first = gen_toy_2d(n=50, seed=0)
    assert first.seed == 0
    # make the first draw fail the separation check
    monkeypatch.setattr(synth, "TOY_SEPARATION", _vertex_gap(first.X))
    ds = gen_toy_2d(n=50, seed=0)
    assert ds.seed > 0
    assert _vertex_gap(ds.X) > _vertex_gap(first.X)


def test_csv_round_trip(tmp_path):
    M = np.random.default_rng(0).normal(size=(5, 3))
    path = tmp_path / "m.csv"
    save_matrix_csv(M, path, header="test")
    assert np.array_equal(load_matrix_csv(path), M)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=100, deadline=None)
@given(rows=st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=6))
def test_csv_round_trip_any_finite_double(rows, tmp_path_factory):
    M = np.array(rows)
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    save_matrix_csv(M, path)
    out = load_matrix_csv(path)
    assert np.array_equal(out.view(np.int64), M.view(np.int64))


def test_csv_ragged_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(CSVParseError) as info:
        load_matrix_csv(path)
    assert info.value.line == 2


def test_csv_non_numeric(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# header\n1,2\n3,x\n")
    with pytest.raises(CSVParseError) as info:
        load_matrix_csv(path)
    assert info.value.line == 3


def test_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_matrix_csv(os.fspath(tmp_path / "none.csv"))


def test_csv_spectra_dimensions(tmp_path):
    H0 = gen_smooth_archetypes(seed=2)
    ds = gen_dataset(H0, default_recipe(sigma=1e-3), seed=1)
    path = tmp_path / "X.csv"
    save_matrix_csv(ds.X, path)
    assert load_matrix_csv(path).shape == (250, 87)
