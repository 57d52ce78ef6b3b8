"""Estimators of a low-rank joint PMF.

``juror`` fits the CPD model to histograms of random pairwise projections
in up to three stages:

* G1: least-squares Radon inversion of every pair, then SPA on the
  assembled pairwise marginals.
* G2: alternate a penalized re-inversion of each pair (pulled towards the
  current model's marginal) with a fresh SPA factorization.
* G3: projected gradient descent on the projection misfit ``J`` with
  Armijo backtracking.

Variant ``A`` runs G1+G2+G3, ``B`` runs G1+G3 and ``C`` runs G1+G2.  The
module also hosts the baselines: SPA on histogrammed 2-way marginals, the
coupled 3-way factorization (CTF) and randomly initialized EM.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .factorization import factorize_marginals, make_split
from .marginals import (
    Dataset,
    ProjectedStack,
    estimate_pairwise,
    estimate_projected,
    estimate_threeway,
    pair_operators,
)
from .model import MISSING, CpdModel, log_marginal_scores, project_on_simplex
from .radon import adjoint, forward, ls_invert, sample_directions

log = logging.getLogger(__name__)

VARIANTS = {"A": (True, True), "B": (False, True), "C": (True, False)}

ARMIJO_C = 1e-4
STEP_GROWTH = 1.2
MAX_BACKTRACKS = 60


@dataclass
class SolverConfig:
    rank: int
    num_projections: int = 200
    rho: float = 1.0
    rho_grid: tuple = None
    epsilon: float = 1e-6
    max_outer: int = 50
    max_inner: int = 200
    step0: float = 0.1
    seed: int = 0
    num_bins: int = None
    g3_objective: str = "J"
    holdout: float = 0.2

    def __post_init__(self):
        if self.rank < 1 or self.num_projections < 1:
            raise ValueError("rank and num_projections must be positive")
        if self.rho < 0 or self.epsilon <= 0 or self.step0 <= 0:
            raise ValueError("rho must be >= 0; epsilon and step0 must be > 0")
        if self.max_outer < 0 or self.max_inner < 0:
            raise ValueError("iteration caps must be nonnegative")
        if self.g3_objective not in ("J", "J1"):
            raise ValueError("g3_objective must be 'J' or 'J1'")


@dataclass
class FitReport:
    method: str
    variant: str = None
    traces: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    converged: dict = field(default_factory=dict)
    final_J: float = None
    final_J1: float = None
    config: dict = field(default_factory=dict)

    def to_json(self, **kwargs) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable, **kwargs)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ----------------------------------------------------------------------
# objectives on raw parameter arrays
# ----------------------------------------------------------------------


def _pair_marginal(weights, factors, j, k):
    return (factors[j] * weights) @ factors[k].T


def _chain_pair_grads(weights, factors, dP):
    """Push per-pair gradients ``dJ/dP_jk`` back to the factors and prior."""
    gA = [np.zeros_like(A) for A in factors]
    gl = np.zeros_like(weights)
    for (j, k), G in dP.items():
        Aj, Ak = factors[j], factors[k]
        GAk = G @ Ak
        gA[j] += GAk * weights
        gA[k] += (G.T @ Aj) * weights
        gl += np.einsum("af,af->f", Aj, GAk)
    return gA, gl


def _J_value_grad(weights, factors, stack, ops, need_grad=True):
    value = 0.0
    dP = {}
    for p in stack.pairs:
        op = ops[p]
        E = forward(op, _pair_marginal(weights, factors, *p)) - stack.Y[p]
        value += float(np.vdot(E, E))
        if need_grad:
            dP[p] = 2.0 * adjoint(op, E)
    if not need_grad:
        return value, None
    return value, _chain_pair_grads(weights, factors, dP)


def _J1_model_value_grad(weights, factors, Z_aux, rho, data_term, need_grad=True):
    """J1 as a function of the model only (``Z_aux`` fixed)."""
    value = data_term
    dP = {}
    for p, Z in Z_aux.items():
        D = _pair_marginal(weights, factors, *p) - Z
        value += rho * float(np.vdot(D, D))
        if need_grad:
            dP[p] = 2.0 * rho * D
    if not need_grad:
        return value, None
    return value, _chain_pair_grads(weights, factors, dP)


def objective_J(model: CpdModel, stack: ProjectedStack, ops: dict) -> float:
    """Sum over retained pairs of ``||Y_jk - R(A_j D(lambda) A_k^T)||_F^2``."""
    return _J_value_grad(model.weights, model.factors, stack, ops, need_grad=False)[0]


def grad_J(model: CpdModel, stack: ProjectedStack, ops: dict):
    """Gradient of :func:`objective_J`: (list of dJ/dA_n, dJ/dlambda)."""
    return _J_value_grad(model.weights, model.factors, stack, ops)[1]


def _data_term(Z_aux, stack, ops):
    total = 0.0
    for p in stack.pairs:
        E = stack.Y[p] - forward(ops[p], Z_aux[p])
        total += float(np.vdot(E, E))
    return total


def objective_J1(model: CpdModel, Z_aux: dict, stack: ProjectedStack, ops: dict,
                 rho: float) -> float:
    """Penalized objective: data misfit of ``Z_aux`` plus ``rho`` times its gap to the model."""
    penalty = 0.0
    for p in stack.pairs:
        D = Z_aux[p] - _pair_marginal(model.weights, model.factors, *p)
        penalty += float(np.vdot(D, D))
    return _data_term(Z_aux, stack, ops) + rho * penalty


# ----------------------------------------------------------------------
# projected gradient descent shared by G3 and CTF
# ----------------------------------------------------------------------


def projected_descent(value_grad, weights, factors, max_iter, step0, epsilon):
    """Minimize over column-stochastic factors and a simplex prior.

    Each step projects ``x - eta * grad`` back onto the constraint set and
    accepts it when the projected-arc Armijo condition holds; ``eta`` is
    halved until it does and grown by 1.2 after acceptance.

    Returns ``(weights, factors, trace, converged)`` where ``trace`` holds
    the objective at the start and after every accepted step.
    """
    weights = np.array(weights, dtype=float)
    factors = [np.array(A, dtype=float) for A in factors]
    value, (gA, gl) = value_grad(weights, factors, True)
    trace = [value]
    eta = step0
    converged = False
    for _ in range(max_iter):
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            new_f = [project_on_simplex(A - eta * g) for A, g in zip(factors, gA)]
            new_w = project_on_simplex(weights - eta * gl)
            decrease = sum(float(np.vdot(g, B - A)) for g, A, B in zip(gA, factors, new_f))
            decrease += float(np.vdot(gl, new_w - weights))
            new_value, _ = value_grad(new_w, new_f, False)
            if new_value <= value + ARMIJO_C * decrease and new_value <= value:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            converged = True
            break
        rel = (value - new_value) / max(abs(value), np.finfo(float).tiny)
        weights, factors, value = new_w, new_f, new_value
        trace.append(value)
        eta *= STEP_GROWTH
        _, (gA, gl) = value_grad(weights, factors, True)
        if rel < epsilon:
            converged = True
            break
    return weights, factors, trace, converged


def _to_model(weights, factors):
    weights = project_on_simplex(weights)
    factors = [project_on_simplex(A) for A in factors]
    return CpdModel(weights, factors)


# ----------------------------------------------------------------------
# JUROR
# ----------------------------------------------------------------------


def _g1(stack, ops, plan, F):
    Z = {p: ls_invert(ops[p], stack.Y[p], 0.0) for p in stack.pairs}
    return factorize_marginals(Z, plan, F), Z


def _g2(model, Z, stack, ops, plan, cfg, rho, report):
    trace = [objective_J1(model, Z, stack, ops, rho)]
    best = (trace[0], model, Z)
    converged = cfg.max_outer == 0
    for _ in range(cfg.max_outer):
        # every pair is pulled towards the previous iterate's marginals
        Z = {
            p: ls_invert(ops[p], stack.Y[p], rho,
                         _pair_marginal(model.weights, model.factors, *p))
            for p in stack.pairs
        }
        model = factorize_marginals(Z, plan, cfg.rank)
        value = objective_J1(model, Z, stack, ops, rho)
        rel = abs(trace[-1] - value) / max(abs(trace[-1]), np.finfo(float).tiny)
        trace.append(value)
        if value < best[0]:
            best = (value, model, Z)
        if rel < cfg.epsilon:
            converged = True
            break
    report.traces["G2_J1"] = trace
    report.converged["G2"] = converged
    return best[1], best[2]


def _g3(model, Z, stack, ops, cfg, rho, report):
    if cfg.g3_objective == "J":
        def value_grad(w, f, need_grad):
            return _J_value_grad(w, f, stack, ops, need_grad)
    else:
        data = _data_term(Z, stack, ops)

        def value_grad(w, f, need_grad):
            return _J1_model_value_grad(w, f, {p: Z[p] for p in stack.pairs}, rho, data,
                                        need_grad)

    w, f, trace, converged = projected_descent(
        value_grad, model.weights, model.factors, cfg.max_inner, cfg.step0, cfg.epsilon
    )
    report.traces["G3_" + cfg.g3_objective] = trace
    report.converged["G3"] = converged
    return _to_model(w, f)


def _prepare(data, cfg, ops):
    if isinstance(data, ProjectedStack):
        if ops is None:
            raise ValueError("a ProjectedStack needs its operators")
        return data, ops
    directions = sample_directions(cfg.num_projections, cfg.seed)
    ops = pair_operators(directions, data.cardinalities, num_bins=cfg.num_bins)
    return estimate_projected(data, ops), ops


def _cardinalities(stack, ops):
    cards = {}
    for (j, k), op in ops.items():
        cards[j], cards[k] = op.shape
    return tuple(cards[n] for n in range(max(cards) + 1))


def _juror_once(stack, ops, cfg, variant, rho):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of A, B, C")
    run_g2, run_g3 = VARIANTS[variant]
    cards = _cardinalities(stack, ops)
    plan = make_split(len(cards), cards, cfg.rank)
    report = FitReport("juror", variant, config={**asdict(cfg), "rho_used": rho})

    t0 = time.perf_counter()
    model, Z = _g1(stack, ops, plan, cfg.rank)
    report.timings["G1"] = time.perf_counter() - t0
    report.traces["G1_J"] = [objective_J(model, stack, ops)]

    if run_g2:
        t0 = time.perf_counter()
        model, Z = _g2(model, Z, stack, ops, plan, cfg, rho, report)
        report.timings["G2"] = time.perf_counter() - t0
    if run_g3:
        t0 = time.perf_counter()
        model = _g3(model, Z, stack, ops, cfg, rho, report)
        report.timings["G3"] = time.perf_counter() - t0

    report.final_J = objective_J(model, stack, ops)
    report.final_J1 = objective_J1(model, Z, stack, ops, rho)
    return model, report


def juror(data, cfg: SolverConfig, variant: str = "A", ops: dict = None):
    """Fit a rank-``cfg.rank`` CPD from projected 1-D histograms.

    Parameters
    ----------
    data : Dataset or ProjectedStack
        Raw samples (projections are drawn from ``cfg.seed``) or an
        already histogrammed stack, in which case ``ops`` is required.
    cfg : SolverConfig
    variant : {'A', 'B', 'C'}
    ops : dict, optional
        Pair -> RadonOperator used to build ``data`` when it is a stack.

    Returns
    -------
    model : CpdModel
    report : FitReport
    """
    rho = cfg.rho
    if cfg.rho_grid and isinstance(data, Dataset):
        rho = select_rho(data, cfg, variant)
    stack, ops = _prepare(data, cfg, ops)
    return _juror_once(stack, ops, cfg, variant, rho)


def select_rho(data: Dataset, cfg: SolverConfig, variant: str = "A") -> float:
    """Pick ``rho`` from ``cfg.rho_grid`` by the projection misfit on held-out samples."""
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(data.num_samples)
    n_hold = max(1, int(round(cfg.holdout * data.num_samples)))
    if n_hold >= data.num_samples:
        return cfg.rho
    held, train = data.take(order[:n_hold]), data.take(order[n_hold:])
    directions = sample_directions(cfg.num_projections, cfg.seed)
    ops = pair_operators(directions, data.cardinalities, num_bins=cfg.num_bins)
    train_stack = estimate_projected(train, ops)
    held_stack = estimate_projected(held, ops)
    held_stack.pairs = [p for p in held_stack.pairs if p in train_stack.pairs]
    scores = []
    for rho in cfg.rho_grid:
        model, _ = _juror_once(train_stack, ops, cfg, variant, rho)
        scores.append(objective_J(model, held_stack, ops))
    return float(cfg.rho_grid[int(np.argmin(scores))])


# ----------------------------------------------------------------------
# baselines
# ----------------------------------------------------------------------


def fit_spa_2way(data: Dataset, F: int) -> CpdModel:
    """SPA on directly histogrammed 2-way marginals."""
    plan = make_split(data.num_vars, data.cardinalities, F)
    Z = {p: estimate_pairwise(data, *p) for p in plan.pairs}
    return factorize_marginals(Z, plan, F)


def _ctf_value_grad(weights, factors, tensors, need_grad=True):
    value = 0.0
    gA = [np.zeros_like(A) for A in factors] if need_grad else None
    gl = np.zeros_like(weights) if need_grad else None
    for (j, k, l), Z in tensors.items():
        Aj, Ak, Al = factors[j], factors[k], factors[l]
        E = np.einsum("f,af,bf,cf->abc", weights, Aj, Ak, Al) - Z
        value += float(np.vdot(E, E))
        if need_grad:
            E2 = 2.0 * E
            gA[j] += np.einsum("abc,bf,cf->af", E2, Ak, Al) * weights
            gA[k] += np.einsum("abc,af,cf->bf", E2, Aj, Al) * weights
            gA[l] += np.einsum("abc,af,bf->cf", E2, Aj, Ak) * weights
            gl += np.einsum("abc,af,bf,cf->f", E2, Aj, Ak, Al)
    if not need_grad:
        return value, None
    return value, (gA, gl)


def ctf_objective(model: CpdModel, tensors: dict):
    """Coupled 3-way loss and its gradient ``(value, (dA list, dlambda))``."""
    return _ctf_value_grad(model.weights, model.factors, tensors)


def threeway_tensors(data: Dataset) -> dict:
    """Histogrammed 3-way marginals of every triple with nonzero support."""
    out = {}
    for j, k, l in itertools.combinations(range(data.num_vars), 3):
        Z = estimate_threeway(data, j, k, l)
        if Z.sum() > 0:
            out[(j, k, l)] = Z
    return out


def fit_ctf_3way(data: Dataset, F: int, cfg: SolverConfig = None):
    """Coupled tensor factorization of 3-way marginals, initialized from SPA.

    Returns ``(model, report)``.
    """
    if data.num_vars < 3:
        raise ValueError("CTF needs at least three variables")
    cfg = cfg or SolverConfig(rank=F)
    tensors = threeway_tensors(data)
    init = fit_spa_2way(data, F)

    def value_grad(w, f, need_grad):
        return _ctf_value_grad(w, f, tensors, need_grad)

    w, f, trace, converged = projected_descent(
        value_grad, init.weights, init.factors, cfg.max_inner, cfg.step0, cfg.epsilon
    )
    report = FitReport("ctf", traces={"CTF": trace}, converged={"CTF": converged})
    return _to_model(w, f), report


def _em_init(cards, F, rng):
    weights = 0.5 / F + 0.5 * rng.dirichlet(np.ones(F))
    factors = [rng.dirichlet(np.ones(I), size=F).T for I in cards]
    return weights, factors


def fit_em(data: Dataset, F: int, seed=None, max_iters: int = 500, tol: float = 1e-8):
    """Maximum-likelihood CPD by EM from a random start.

    Missing features are marginalized in the E-step and skipped in the
    M-step.  Returns ``(model, report)``; ``report.traces['loglik']`` holds
    the log-likelihood of every iterate, which never decreases.
    """
    if data.num_samples < 1:
        raise ValueError("empty dataset")
    if F < 1:
        raise ValueError("rank must be positive")
    rng = np.random.default_rng(seed)
    weights, factors = _em_init(data.cardinalities, F, rng)
    codes = data.codes
    trace = []
    converged = False
    for _ in range(max_iters):
        model = CpdModel(weights, factors)
        scores = log_marginal_scores(model, codes)
        row_ll = logsumexp(scores, axis=1, keepdims=True)
        ll = float(row_ll.sum())
        if trace and ll - trace[-1] <= tol * abs(trace[-1]):
            trace.append(ll)
            converged = True
            break
        trace.append(ll)
        q = np.exp(scores - row_ll)

        weights = q.mean(axis=0)
        new_factors = []
        for n, A in enumerate(factors):
            col = codes[:, n]
            obs = col != MISSING
            acc = np.zeros_like(A)
            np.add.at(acc, col[obs], q[obs])
            sums = acc.sum(axis=0)
            fresh = np.where(sums > 0, acc / np.where(sums > 0, sums, 1.0), A)
            new_factors.append(fresh)
        factors = new_factors
    report = FitReport("em", traces={"loglik": trace}, converged={"EM": converged})
    return CpdModel(weights, factors), report
