"""Low-rank CPD representation of a joint PMF.

A rank-``F`` model over ``N`` categorical variables stores a latent prior
``weights`` (length ``F``) and one column-stochastic factor matrix per
variable (shape ``I_n x F``).  Column ``f`` of factor ``n`` is the
conditional PMF of ``X_n`` given the latent state ``H = f``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MISSING = -1
"""Code used for an unobserved feature in assignments and datasets."""

DEFAULT_TENSOR_CAP = 10**7

_NEG_CLAMP = 1e-12
_SUM_TOL = 1e-9


class TensorTooLargeError(ValueError):
    """Raised when a dense tensor would exceed the configured size cap."""


def _clean_stochastic(arr, name):
    arr = np.array(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    # float noise only; real negatives are rejected below
    arr[(arr < 0) & (arr > -_NEG_CLAMP)] = 0.0
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    sums = arr.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > _SUM_TOL):
        raise ValueError(f"{name} does not sum to 1 along axis 0 (sums={sums})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CpdModel:
    """Rank-F CPD of an N-way joint PMF.

    Parameters
    ----------
    weights : array_like, shape (F,)
        Latent-state prior; nonnegative, sums to one.
    factors : sequence of array_like, each shape (I_n, F)
        Column-stochastic mode factors.
    """

    weights: np.ndarray
    factors: tuple

    def __post_init__(self):
        weights = _clean_stochastic(self.weights, "weights")
        if weights.ndim != 1 or weights.size < 1:
            raise ValueError("weights must be a nonempty vector")
        factors = tuple(
            _clean_stochastic(A, f"factor {n}") for n, A in enumerate(self.factors)
        )
        if len(factors) < 2:
            raise ValueError("a CPD model needs at least two variables")
        for n, A in enumerate(factors):
            if A.ndim != 2 or A.shape[1] != weights.size:
                raise ValueError(
                    f"factor {n} has shape {A.shape}, expected (I_{n}, {weights.size})"
                )
            if A.shape[0] < 1:
                raise ValueError(f"factor {n} has no categories")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "factors", factors)

    @property
    def num_vars(self) -> int:
        return len(self.factors)

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def cardinalities(self) -> tuple:
        return tuple(A.shape[0] for A in self.factors)

    def __eq__(self, other):
        if not isinstance(other, CpdModel):
            return NotImplemented
        return (
            self.cardinalities == other.cardinalities
            and self.rank == other.rank
            and np.array_equal(self.weights, other.weights)
            and all(np.array_equal(a, b) for a, b in zip(self.factors, other.factors))
        )

    __hash__ = None

    def permuted(self, perm) -> "CpdModel":
        """Return the same distribution with latent states reordered by ``perm``."""
        perm = np.asarray(perm)
        return CpdModel(self.weights[perm], [A[:, perm] for A in self.factors])

    def subset(self, variables) -> "CpdModel":
        """Marginal model over ``variables`` (in the given order)."""
        return CpdModel(self.weights, [self.factors[n] for n in variables])


def _check_assignment(model, a, allow_missing):
    a = np.asarray(a, dtype=int)
    if a.shape != (model.num_vars,):
        raise ValueError(f"assignment has length {a.size}, expected {model.num_vars}")
    for n, (v, card) in enumerate(zip(a, model.cardinalities)):
        if v == MISSING:
            if not allow_missing:
                raise ValueError(f"variable {n} is missing")
        elif not 0 <= v < card:
            raise IndexError(f"category {v} out of range for variable {n} (I={card})")
    return a


def eval_joint(model: CpdModel, a: Sequence[int]) -> float:
    """Probability of a fully observed assignment."""
    a = _check_assignment(model, a, allow_missing=False)
    prod = model.weights.copy()
    for A, v in zip(model.factors, a):
        prod *= A[v]
    return float(prod.sum())


def eval_marginalized(model: CpdModel, a: Sequence[int]) -> float:
    """Probability of the observed part of ``a``; MISSING entries are summed out."""
    a = _check_assignment(model, a, allow_missing=True)
    prod = model.weights.copy()
    for A, v in zip(model.factors, a):
        if v != MISSING:
            prod *= A[v]
    return float(prod.sum())


def log_marginal_scores(model: CpdModel, codes: np.ndarray) -> np.ndarray:
    """Per-row, per-latent-state log of ``lambda_f * prod_obs A_n(x_n, f)``.

    ``codes`` is a (T, N) integer array using MISSING for unobserved entries.
    Returns a (T, F) array.
    """
    codes = np.asarray(codes)
    with np.errstate(divide="ignore"):
        out = np.tile(np.log(model.weights), (codes.shape[0], 1))
        for n, A in enumerate(model.factors):
            col = codes[:, n]
            obs = col != MISSING
            out[obs] += np.log(A[col[obs]])
    return out


def _distinct(model, idx):
    if len(set(idx)) != len(idx):
        raise ValueError(f"variable indices must be distinct, got {idx}")
    for n in idx:
        if not 0 <= n < model.num_vars:
            raise IndexError(f"variable index {n} out of range")


def pairwise_marginal(model: CpdModel, j: int, k: int) -> np.ndarray:
    """Two-way marginal ``A_j diag(lambda) A_k^T``."""
    _distinct(model, (j, k))
    Z = (model.factors[j] * model.weights) @ model.factors[k].T
    return np.clip(Z, 0.0, None)


def threeway_marginal(model: CpdModel, j: int, k: int, l: int) -> np.ndarray:
    """Three-way marginal tensor of shape (I_j, I_k, I_l)."""
    _distinct(model, (j, k, l))
    Aj, Ak, Al = (model.factors[n] for n in (j, k, l))
    return np.einsum("f,if,jf,kf->ijk", model.weights, Aj, Ak, Al)


def full_tensor(model: CpdModel, cap: int = DEFAULT_TENSOR_CAP) -> np.ndarray:
    """Dense joint PMF tensor.

    Raises
    ------
    TensorTooLargeError
        If the tensor would have more than ``cap`` entries.
    """
    size = int(np.prod(model.cardinalities, dtype=object))
    if size > cap:
        raise TensorTooLargeError(
            f"full tensor has {size} entries, above cap {cap}; use factor-space metrics"
        )
    # grow one mode at a time, keeping the rank axis last
    out = model.factors[0] * model.weights
    for A in model.factors[1:]:
        out = out[..., None, :] * A
    return out.sum(axis=-1)


def sample(model: CpdModel, count: int, kappa: float = 1.0, seed=None):
    """Draw ``count`` samples; each feature is observed with probability ``kappa``.

    Returns a :class:`juror.marginals.Dataset`.
    """
    from .marginals import Dataset

    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0.0 < kappa <= 1.0:
        raise ValueError("kappa must be in (0, 1]")
    rng = np.random.default_rng(seed)
    latent = rng.choice(model.rank, size=count, p=model.weights)
    codes = np.empty((count, model.num_vars), dtype=np.int64)
    for n, A in enumerate(model.factors):
        # inverse-CDF draw from column A[:, h] for each sample
        cdf = np.cumsum(A, axis=0)[:, latent]
        u = rng.random(count)
        codes[:, n] = np.minimum((u[None, :] > cdf).sum(axis=0), A.shape[0] - 1)
    if kappa < 1.0:
        mask = rng.random(codes.shape) >= kappa
        codes[mask] = MISSING
    return Dataset(codes, model.cardinalities)


def project_on_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex.

    Sort-and-threshold; if ``v`` is 2-D each column is projected separately.
    """
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    if v.ndim == 1:
        return _project_columns(v[:, None])[:, 0]
    if v.ndim == 2:
        return _project_columns(v)
    raise ValueError("expected a vector or a matrix of column vectors")


def _project_columns(V):
    d = V.shape[0]
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    ks = np.arange(1, d + 1)[:, None]
    cond = U - css / ks > 0
    # cond is true on a prefix; its length is the support size
    rho = cond.sum(axis=0)
    theta = css[rho - 1, np.arange(V.shape[1])] / rho
    return np.maximum(V - theta, 0.0)
