"""Synthetic mixtures of archetypes, noise injection and matrix CSV files."""

from dataclasses import dataclass
import math
import os

import numpy as np

from .exceptions import CSVParseError, InvalidInputError
from .risk import check_data_matrix

__all__ = [
    "SparsityBlock",
    "MixtureRecipe",
    "NoisyDataset",
    "make_rng",
    "default_recipe",
    "gen_weights",
    "gen_dataset",
    "gen_toy_2d",
    "gen_smooth_archetypes",
    "TOY_ARCHETYPES",
    "load_matrix_csv",
    "save_matrix_csv",
]

# Triangle used by the planar toy problem.
TOY_ARCHETYPES = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]])
# Minimum distance between any toy data point and any archetype.
TOY_SEPARATION = 1e-3


def make_rng(seed):
    """Counter-based Philox generator; every sampler in the package uses it."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InvalidInputError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SparsityBlock:
    """``rows`` weight vectors with ``support`` nonzeros drawn from a
    symmetric Dirichlet with parameter ``concentration``.

    Rows of a single-support block are pure archetypes taken in turn
    (0, 1, ..., r-1, 0, ...), so ``r`` such rows make the data separable.
    """

    rows: int
    support: int
    concentration: float = 5.0


@dataclass(frozen=True)
class MixtureRecipe:
    n: int
    r: int
    blocks: tuple
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.r < 1:
            raise InvalidInputError("n and r must be positive")
        if sum(b.rows for b in self.blocks) != self.n:
            raise InvalidInputError("block row counts must sum to n")
        for b in self.blocks:
            if b.rows < 0 or not 1 <= b.support <= self.r:
                raise InvalidInputError(f"invalid block {b}")
            if not b.concentration > 0:
                raise InvalidInputError("Dirichlet concentration must be positive")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be non-negative")


def default_recipe(n=250, r=4, sigma=0.0, separable=False):
    """9 rows on edges, 11 rows on 2-faces, the rest in the interior.

    Needs ``r >= 3`` and ``n >= 20``; the interior block has full support.
    With ``separable`` the recipe opens with ``r`` rows equal to the
    archetypes themselves, taken out of the interior block.
    """
    if r < 3 or n < 20 + (r if separable else 0):
        raise InvalidInputError("the default recipe needs r >= 3 and n >= 20 (+ r if separable)")
    pure = r if separable else 0
    blocks = (SparsityBlock(pure, 1), SparsityBlock(9, 2), SparsityBlock(11, 3), SparsityBlock(n - 20 - pure, r))
    return MixtureRecipe(n, r, blocks, sigma)


@dataclass(frozen=True)
class NoisyDataset:
    X: np.ndarray
    X0: np.ndarray
    W0: np.ndarray
    H0: np.ndarray
    Z: np.ndarray
    sigma: float
    delta: float
    seed: int


def _weights(recipe, rng):
    W = np.zeros((recipe.n, recipe.r))
    row = 0
    for b in recipe.blocks:
        for j in range(b.rows):
            if b.support == 1:
                W[row, j % recipe.r] = 1.0
                row += 1
                continue
            support = np.sort(rng.choice(recipe.r, size=b.support, replace=False))
            W[row, support] = rng.dirichlet(np.full(b.support, b.concentration))
            row += 1
    return W


def gen_weights(recipe, seed):
    """Row-stochastic weight matrix following ``recipe`` block by block."""
    return _weights(recipe, make_rng(seed))


def _noise(shape, sigma, rng):
    if sigma == 0:
        return np.zeros(shape)
    return sigma * rng.standard_normal(shape)


def gen_dataset(H0, recipe, seed):
    """Mixtures ``W0 H0`` plus i.i.d. ``N(0, sigma^2)`` noise in every entry."""
    H0 = check_data_matrix(H0, "H0")
    if H0.shape[0] != recipe.r:
        raise InvalidInputError(f"recipe has r={recipe.r} but H0 has {H0.shape[0]} rows")
    rng = make_rng(seed)
    W0 = _weights(recipe, rng)
    X0 = W0 @ H0
    Z = _noise(X0.shape, recipe.noise_sigma, rng)
    delta = float(np.max(np.linalg.norm(Z, axis=1)))
    return NoisyDataset(X0 + Z, X0, W0, H0.copy(), Z, float(recipe.noise_sigma), delta, int(seed))


def gen_toy_2d(n=500, seed=0, sigma=0.0):
    """Dir(5,5,5) mixtures of a fixed planar triangle.

    If any point falls within ``TOY_SEPARATION`` of a vertex the draw is
    repeated with the next seed, so the returned data are never separable;
    ``seed`` of the result records the seed actually used.
    """
    if n < 3:
        raise InvalidInputError("toy data need n >= 3")
    recipe = MixtureRecipe(n, 3, (SparsityBlock(n, 3),), sigma)
    s = int(seed)
    while True:
        ds = gen_dataset(TOY_ARCHETYPES, recipe, s)
        diff = ds.X0[:, None, :] - TOY_ARCHETYPES[None, :, :]
        if np.min(np.linalg.norm(diff, axis=2)) > TOY_SEPARATION:
            return ds
        s += 1


def gen_smooth_archetypes(r=4, d=87, seed=0, bands=6):
    """Positive, spectrum-like archetypes: a baseline plus Gaussian bands.

    Used when no measured spectra are supplied.  Band centers, widths and
    heights are random; rows are rejected until they are linearly
    independent with condition number below 1e3.
    """
    if r < 1 or d < r:
        raise InvalidInputError("need 1 <= r <= d")
    rng = make_rng(seed)
    grid = np.arange(d, dtype=float)
    while True:
        H = np.empty((r, d))
        for ell in range(r):
            centers = rng.uniform(0, d - 1, bands)
            widths = rng.uniform(0.02, 0.08, bands) * d
            heights = rng.uniform(0.2, 1.0, bands)
            base = rng.uniform(0.02, 0.1)
            prof = heights[:, None] * np.exp(-0.5 * ((grid[None, :] - centers[:, None]) / widths[:, None]) ** 2)
            H[ell] = base + prof.sum(axis=0)
        s = np.linalg.svd(H, compute_uv=False)
        if s[-1] > 0 and s[0] / s[-1] < 1e3:
            return H


def save_matrix_csv(M, path, header=None):
    """Write one row per line with shortest round-trip float formatting."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError("only 2-D matrices can be saved")
    lines = []
    if header is not None:
        lines.append("# " + header.replace("\n", " "))
    for row in M:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix_csv(path):
    """Read a matrix written by ``save_matrix_csv`` (or any plain numeric CSV).

    Blank lines are skipped; a single leading line starting with ``#`` is
    treated as a header.  Raises ``CSVParseError`` with the 1-based line
    number of the first ragged or non-numeric row.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(path)
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                if rows or lineno != 1:
                    raise CSVParseError(f"line {lineno}: unexpected comment line", line=lineno)
                continue
            try:
                vals = [float(tok) for tok in text.split(",")]
            except ValueError:
                raise CSVParseError(f"line {lineno}: non-numeric entry", line=lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise CSVParseError(
                    f"line {lineno}: expected {width} columns, found {len(vals)}", line=lineno
                )
            if not all(math.isfinite(v) for v in vals):
                raise CSVParseError(f"line {lineno}: non-finite entry", line=lineno)
            rows.append(vals)
    if not rows:
        raise CSVParseError("file contains no data rows", line=0)
    return np.array(rows, dtype=float)
