"""Coupled factorization of pairwise marginals by separable NMF.

Variables are split into a row set ``S1`` and a column set ``S2``.  Stacking
the marginals ``Z_jk`` (``j`` in ``S1``, ``k`` in ``S2``) into one block
matrix gives ``Zt = W H^T`` with ``W`` the stacked ``S1`` factors and ``H``
the stacked ``S2`` factors scaled by the latent prior.  The successive
projection algorithm (SPA) picks ``F`` anchor rows of ``Zt`` from which
``H`` follows directly, and ``W`` by nonnegative least squares.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .model import CpdModel


class IdentifiabilityError(ValueError):
    pass


class AssemblyError(ValueError):
    pass


class DegenerateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    S1: tuple
    S2: tuple
    cardinalities: tuple

    @property
    def row_offsets(self) -> dict:
        return _offsets(self.S1, self.cardinalities)

    @property
    def col_offsets(self) -> dict:
        return _offsets(self.S2, self.cardinalities)

    @property
    def shape(self) -> tuple:
        return (
            sum(self.cardinalities[n] for n in self.S1),
            sum(self.cardinalities[n] for n in self.S2),
        )

    @property
    def pairs(self) -> list:
        return [(j, k) for j in self.S1 for k in self.S2]


def _offsets(group, cards):
    out, pos = {}, 0
    for n in group:
        out[n] = (pos, pos + cards[n])
        pos += cards[n]
    return out


@dataclass(frozen=True, eq=False)
class AssembledMatrix:
    matrix: np.ndarray
    plan: SplitPlan


@dataclass(frozen=True, eq=False)
class FactorPair:
    W: np.ndarray
    H: np.ndarray
    anchors: tuple = ()
    residual: float = float("nan")


def make_split(N: int, cardinalities, F: int) -> SplitPlan:
    """Split variables into the first ``ceil(N/2)`` and the rest.

    Raises :class:`IdentifiabilityError` if ``F`` exceeds either side's
    total number of categories.
    """
    if N < 2:
        raise ValueError("need at least two variables")
    cards = tuple(int(c) for c in cardinalities)
    if len(cards) != N:
        raise ValueError("cardinalities length does not match N")
    half = math.ceil(N / 2)
    plan = SplitPlan(tuple(range(half)), tuple(range(half, N)), cards)
    bound = min(plan.shape)
    if F > bound:
        raise IdentifiabilityError(
            f"rank {F} exceeds the identifiability bound min(sum I over S1, "
            f"sum I over S2) = {bound}"
        )
    return plan


def assemble(marginals: dict, plan: SplitPlan) -> AssembledMatrix:
    """Place each ``Z_jk`` (``j`` in S1, ``k`` in S2) at its block of ``Zt``.

    ``marginals`` may key a pair either way round; a ``(k, j)`` entry is
    transposed so rows always index the S1 variable.
    """
    rows, cols = plan.row_offsets, plan.col_offsets
    Zt = np.zeros(plan.shape)
    absent = []
    for j in plan.S1:
        for k in plan.S2:
            if (j, k) in marginals:
                block = np.asarray(marginals[(j, k)])
            elif (k, j) in marginals:
                block = np.asarray(marginals[(k, j)]).T
            else:
                absent.append((j, k))
                continue
            r0, r1 = rows[j]
            c0, c1 = cols[k]
            if block.shape != (r1 - r0, c1 - c0):
                raise AssemblyError(f"marginal {(j, k)} has shape {block.shape}")
            Zt[r0:r1, c0:c1] = block
    if absent:
        raise AssemblyError(f"missing marginals for pairs {absent}")
    return AssembledMatrix(np.clip(Zt, 0.0, None), plan)


def select_anchors(X, F, tol=1e-12):
    """Successive projection: indices of ``F`` anchor rows of ``X``.

    Repeatedly takes the row of largest remaining norm (lowest index on
    ties) and projects every row onto the orthogonal complement of it.
    """
    R = np.array(X, dtype=float)
    norms = np.einsum("ij,ij->i", R, R)
    scale = norms.max() if norms.size else 0.0
    anchors = []
    for _ in range(F):
        i = int(np.argmax(norms))
        if norms[i] <= tol * scale or scale == 0:
            raise DegenerateError(
                f"only {len(anchors)} distinguishable anchors; try a smaller rank"
            )
        u = R[i] / math.sqrt(norms[i])
        R -= np.outer(R @ u, u)
        norms = np.einsum("ij,ij->i", R, R)
        anchors.append(i)
    return anchors


def nonneg_lstsq_rows(X, H):
    """Solve ``min ||X[i] - W[i] H^T||`` with ``W >= 0`` independently per row."""
    W = np.empty((X.shape[0], H.shape[1]))
    for i, row in enumerate(X):
        W[i], _ = nnls(H, row)
    return W


def spa(Zt, F: int) -> FactorPair:
    """Separable NMF ``Zt ~ W H^T`` via SPA on the row-normalized matrix."""
    X = Zt.matrix if isinstance(Zt, AssembledMatrix) else np.asarray(Zt, dtype=float)
    if F > min(X.shape):
        raise IdentifiabilityError(f"rank {F} exceeds matrix dimensions {X.shape}")
    sums = X.sum(axis=1, keepdims=True)
    Xn = np.divide(X, sums, out=np.zeros_like(X), where=sums > 0)
    anchors = select_anchors(Xn, F)
    H = Xn[anchors].T.copy()
    W = nonneg_lstsq_rows(X, H)
    residual = float(np.linalg.norm(X - W @ H.T))
    return FactorPair(W, H, tuple(anchors), residual)


def _normalize_columns(block, what):
    block = np.clip(block, 0.0, None)
    sums = block.sum(axis=0)
    dead = sums <= 0
    if np.any(dead):
        warnings.warn(f"{what}: latent states {np.flatnonzero(dead).tolist()} have no mass; "
                      "using uniform columns")
        block[:, dead] = 1.0
        sums = block.sum(axis=0)
    return block / sums, sums


def extract_factors(pair: FactorPair, plan: SplitPlan, cardinalities=None) -> CpdModel:
    """Slice ``W`` and ``H`` into per-variable factors and recover the prior.

    The per-state scale left in ``W`` (mean S1 block column sum) times that
    in ``H`` (mean S2 block column sum) is proportional to the prior weight.
    """
    if cardinalities is not None and tuple(cardinalities) != plan.cardinalities:
        raise ValueError("cardinalities do not match the split plan")
    F = pair.W.shape[1]
    N = len(plan.cardinalities)
    factors = [None] * N
    w_mass = np.zeros(F)
    for n, (r0, r1) in plan.row_offsets.items():
        factors[n], sums = _normalize_columns(pair.W[r0:r1].copy(), f"variable {n}")
        w_mass += np.clip(pair.W[r0:r1], 0.0, None).sum(axis=0)
    h_mass = np.zeros(F)
    for n, (c0, c1) in plan.col_offsets.items():
        factors[n], sums = _normalize_columns(pair.H[c0:c1].copy(), f"variable {n}")
        h_mass += np.clip(pair.H[c0:c1], 0.0, None).sum(axis=0)
    weights = (w_mass / len(plan.S1)) * (h_mass / len(plan.S2))
    total = weights.sum()
    if total <= 0 or not np.isfinite(total):
        warnings.warn("degenerate prior; falling back to uniform weights")
        weights = np.full(F, 1.0 / F)
    else:
        weights = weights / total
    return CpdModel(weights, factors)


def factorize_marginals(marginals: dict, plan: SplitPlan, F: int) -> CpdModel:
    """assemble -> spa -> extract_factors."""
    return extract_factors(spa(assemble(marginals, plan), F), plan)
