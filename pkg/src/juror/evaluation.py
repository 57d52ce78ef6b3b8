"""Synthetic ground truth, error metrics, MAP classification and experiments."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .factorization import DegenerateError, make_split
from .marginals import Dataset
from .model import (
    DEFAULT_TENSOR_CAP,
    MISSING,
    CpdModel,
    TensorTooLargeError,
    full_tensor,
    log_marginal_scores,
    sample,
)

log = logging.getLogger(__name__)

METHODS = ("juror-a", "juror-b", "juror-c", "spa", "ctf", "em")
MODEL_FORMAT_VERSION = 1


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------


def _normalized_uniform(rng, shape):
    U = rng.random(shape)
    return U / U.sum(axis=0)


def gen_pmf_model(F: int, I: int, N: int, seed=None) -> CpdModel:
    """Factors and prior with i.i.d. Uniform[0, 1] entries, columns l1-normalized."""
    if min(F, I, N) < 1:
        raise ValueError("F, I and N must be positive")
    rng = np.random.default_rng(seed)
    factors = [_normalized_uniform(rng, (I, F)) for _ in range(N)]
    weights = _normalized_uniform(rng, F)
    return CpdModel(weights, factors)


def gen_cim_model(F: int, I: int, N: int, seed=None) -> CpdModel:
    """Factor columns are offset sinusoids sampled on ``0..I-1``, then normalized.

    Column ``f``: ``c + a sin(w u + p)`` with ``a ~ U[0.5, 1]``,
    ``w ~ U[0.2, 1]``, ``p ~ U[0, 2 pi]`` and ``c = a + 0.1``.
    """
    if min(F, I, N) < 1:
        raise ValueError("F, I and N must be positive")
    rng = np.random.default_rng(seed)
    factors = []
    for _ in range(N):
        amp = rng.uniform(0.5, 1.0, F)
        freq = rng.uniform(0.2, 1.0, F)
        phase = rng.uniform(0.0, 2 * np.pi, F)
        factors.append(sinusoid_columns(I, amp, freq, phase))
    weights = _normalized_uniform(rng, F)
    return CpdModel(weights, factors)


def sinusoid_columns(I, amp, freq, phase) -> np.ndarray:
    """``I x F`` normalized columns ``a + 0.1 + a sin(w u + p)`` at ``u = 0..I-1``."""
    u = np.arange(I)[:, None]
    amp = np.asarray(amp, dtype=float)
    cols = amp + 0.1 + amp * np.sin(np.asarray(freq) * u + np.asarray(phase))
    return cols / cols.sum(axis=0)


def gen_separable_model(F: int, I: int, N: int, seed=None) -> CpdModel:
    """Uniform-random model whose row-side variables contain one pure row per state.

    Latent state ``f`` gets an anchor category on variable ``f % |S1|`` whose
    probability is zero under every other state, so the assembled pairwise
    matrix is separable and SPA is exact on population marginals.
    """
    model = gen_pmf_model(F, I, N, seed)
    plan = make_split(N, model.cardinalities, F)
    factors = [np.array(A) for A in model.factors]
    slots = {n: 0 for n in plan.S1}
    for f in range(F):
        n = plan.S1[f % len(plan.S1)]
        row = slots[n]
        slots[n] += 1
        if row >= I:
            raise ValueError("not enough categories to give every state an anchor")
        factors[n][row, :] = 0.0
        factors[n][row, f] = 1.0
    factors = [A / A.sum(axis=0) for A in factors]
    return CpdModel(model.weights, factors)


# ----------------------------------------------------------------------
# metrics
# ----------------------------------------------------------------------


def _check_comparable(truth, est):
    if truth.cardinalities != est.cardinalities or truth.rank != est.rank:
        raise ValueError(
            f"models differ in shape: {truth.cardinalities} rank {truth.rank} vs "
            f"{est.cardinalities} rank {est.rank}"
        )


def alignment_cost(truth: CpdModel, est: CpdModel) -> np.ndarray:
    """``cost[f, g]``: squared distance of true state f to estimated state g.

    Sums the squared factor-column gaps over all variables and adds the
    squared prior gap.
    """
    _check_comparable(truth, est)
    cost = (truth.weights[:, None] - est.weights[None, :]) ** 2
    for A, B in zip(truth.factors, est.factors):
        cost = cost + ((A[:, :, None] - B[:, None, :]) ** 2).sum(axis=0)
    return cost


def align(truth: CpdModel, est: CpdModel) -> np.ndarray:
    """Permutation ``perm`` such that ``est.permuted(perm)`` best matches ``truth``."""
    rows, cols = linear_sum_assignment(alignment_cost(truth, est))
    perm = np.empty(truth.rank, dtype=int)
    perm[rows] = cols
    return perm


def mse_raw(truth: CpdModel, est: CpdModel) -> float:
    """Factor MSE without any reordering of latent states."""
    _check_comparable(truth, est)
    err = sum(float(np.sum((B - A) ** 2)) for A, B in zip(truth.factors, est.factors))
    return err / truth.num_vars + float(np.sum((est.weights - truth.weights) ** 2))


def mse_aligned(truth: CpdModel, est: CpdModel) -> float:
    """Factor MSE after the optimal matching of latent states."""
    return mse_raw(truth, est.permuted(align(truth, est)))


def mae(truth_tensor, est_tensor) -> float:
    """Relative squared Frobenius error ``||est - truth||^2 / ||truth||^2``."""
    truth_tensor = np.asarray(truth_tensor, dtype=float)
    est_tensor = np.asarray(est_tensor, dtype=float)
    if truth_tensor.shape != est_tensor.shape:
        raise ValueError("tensors differ in shape")
    denom = float(np.sum(truth_tensor**2))
    if denom == 0:
        raise ValueError("reference tensor has zero norm")
    return float(np.sum((est_tensor - truth_tensor) ** 2)) / denom


# ----------------------------------------------------------------------
# classification
# ----------------------------------------------------------------------


def label_scores(model: CpdModel, features) -> np.ndarray:
    """Log joint ``log p(x, y)`` for every row of ``features`` and label ``y``.

    The label is the model's last variable; MISSING features are summed out.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.int64))
    if features.shape[1] != model.num_vars - 1:
        raise ValueError("feature width does not match the model")
    padded = np.column_stack([features, np.full(features.shape[0], MISSING)])
    scores = log_marginal_scores(model, padded)  # (T, F), label summed out
    with np.errstate(divide="ignore"):
        log_label = np.log(model.factors[-1])  # (C, F)
    return logsumexp(scores[:, None, :] + log_label[None, :, :], axis=2)


def predict(model: CpdModel, features) -> np.ndarray:
    """MAP labels; ties go to the lowest label index."""
    return np.argmax(label_scores(model, features), axis=1)


def classify_map(model: CpdModel, x) -> int:
    """MAP label of a single feature assignment."""
    return int(predict(model, [x])[0])


def accuracy(model: CpdModel, data: Dataset) -> float:
    """Fraction of rows whose last column is predicted correctly (labelled rows only)."""
    labels = data.codes[:, -1]
    keep = labels != MISSING
    if not np.any(keep):
        raise ValueError("no labelled rows")
    pred = predict(model, data.codes[keep, :-1])
    return float(np.mean(pred == labels[keep]))


def split_dataset(data: Dataset, fractions, seed=None):
    """Shuffle rows (seeded) and cut them into consecutive parts by ``fractions``."""
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1) > 1e-9:
        raise ValueError("fractions must be positive and sum to 1")
    order = np.random.default_rng(seed).permutation(data.num_samples)
    cuts = np.round(np.cumsum(fractions)[:-1] * data.num_samples).astype(int)
    return [data.take(part) for part in np.split(order, cuts)]


def fit_method(method: str, data: Dataset, F: int, cfg=None, seed=0):
    """Fit one of :data:`METHODS`; returns the estimated model."""
    from .solver import SolverConfig, fit_ctf_3way, fit_em, fit_spa_2way, juror

    if cfg is None:
        cfg = SolverConfig(rank=F, seed=seed)
    elif cfg.rank != F:
        cfg = SolverConfig(**{**asdict(cfg), "rank": F})
    if method.startswith("juror-"):
        return juror(data, cfg, method[-1].upper())[0]
    if method == "spa":
        return fit_spa_2way(data, F)
    if method == "ctf":
        return fit_ctf_3way(data, F, cfg)[0]
    if method == "em":
        return fit_em(data, F, seed=cfg.seed)[0]
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def cross_validate_rank(train: Dataset, val: Dataset, F_grid, method="juror-a", cfg=None):
    """Rank with the best validation accuracy (smallest rank on ties).

    Ranks whose fit is numerically degenerate are skipped.  Returns ``(best_F, {F: accuracy})``.
    """
    F_grid = sorted(F_grid)
    if not F_grid:
        raise ValueError("rank grid is empty")
    scores = {}
    failure = None
    for F in F_grid:
        try:
            model = fit_method(method, train, F, cfg)
        except DegenerateError as exc:
            log.warning("rank %d skipped: %s", F, exc)
            failure = exc
            continue
        scores[F] = accuracy(model, val)
        log.info("rank %d: validation accuracy %.4f", F, scores[F])
    if not scores:
        raise failure
    best = max(scores.values())
    return min(F for F, s in scores.items() if s == best), scores


# ----------------------------------------------------------------------
# model files
# ----------------------------------------------------------------------


def model_to_dict(model: CpdModel, provenance=None) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "cardinalities": list(model.cardinalities),
        "weights": model.weights.tolist(),
        "factors": [A.tolist() for A in model.factors],
        "provenance": provenance or {},
    }


def dumps_model(model: CpdModel, provenance=None) -> str:
    return json.dumps(model_to_dict(model, provenance), sort_keys=True, indent=1) + "\n"


def loads_model(text: str):
    """Parse a model file; returns ``(model, provenance)``."""
    doc = json.loads(text)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('format_version')!r}")
    model = CpdModel(np.array(doc["weights"]), [np.array(A) for A in doc["factors"]])
    if list(model.cardinalities) != doc["cardinalities"]:
        raise ValueError("model file cardinalities disagree with its factors")
    return model, doc.get("provenance", {})


def save_model(model: CpdModel, path, provenance=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model, provenance))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ----------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """Grid of synthetic-recovery runs.

    ``M`` may be a single projection count or a list (an M sweep).
    """

    generator: str = "pmf"
    F: int = 25
    I: int = 10
    N: int = 6
    sample_sizes: list = field(default_factory=lambda: [100, 1000])
    kappa: float = 1.0
    M: object = 200
    methods: list = field(default_factory=lambda: ["juror-a", "spa"])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output: str = None
    rho: float = 1.0
    max_outer: int = 50
    max_inner: int = 200

    def __post_init__(self):
        if self.generator not in ("pmf", "cim"):
            raise ValueError("generator must be 'pmf' or 'cim'")
        if min(self.F, self.I, self.N) < 1 or not 0 < self.kappa <= 1:
            raise ValueError("F, I, N must be positive and kappa in (0, 1]")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if not self.sample_sizes or not self.seeds or not self.methods:
            raise ValueError("sample_sizes, seeds and methods must be nonempty")

    @property
    def M_values(self) -> list:
        return list(self.M) if isinstance(self.M, (list, tuple)) else [self.M]

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list

    def row_labels(self) -> list:
        sweep = len(self.spec.M_values) > 1
        labels = []
        for method in self.spec.methods:
            uses_m = method.startswith("juror-")
            for M in self.spec.M_values if (sweep and uses_m) else [None]:
                labels.append((method, M))
        return labels

    def _select(self, method, M, Ns, metric):
        return [
            r[metric]
            for r in self.records
            if r["method"] == method and r["Ns"] == Ns and (M is None or r["M"] == M)
            and r[metric] is not None
        ]

    def mean(self, method, Ns, metric="mse", M=None) -> float:
        vals = self._select(method, M, Ns, metric)
        return float(np.mean(vals)) if vals else float("nan")

    def per_seed(self, method, Ns, metric="mse", M=None) -> dict:
        return {
            r["seed"]: r[metric]
            for r in self.records
            if r["method"] == method and r["Ns"] == Ns and (M is None or r["M"] == M)
        }

    def table(self, metric="mse") -> str:
        """CSV with one row per method (and M in a sweep), one column per sample size."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method"] + [str(n) for n in self.spec.sample_sizes])
        for method, M in self.row_labels():
            label = method if M is None else f"{method}@M={M}"
            cells = []
            for Ns in self.spec.sample_sizes:
                value = self.mean(method, Ns, metric, M)
                cells.append("" if np.isnan(value) else f"{value:.6f}")
            writer.writerow([label] + cells)
        return buf.getvalue()

    def records_csv(self) -> str:
        buf = io.StringIO()
        fields = ["method", "M", "Ns", "seed", "mse", "mae"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in sorted(self.records, key=lambda r: (r["method"], r["M"] or 0, r["Ns"], r["seed"])):
            row = dict(r)
            for key in ("mse", "mae"):
                row[key] = "" if row[key] is None else f"{row[key]:.10f}"
            row["M"] = "" if row["M"] is None else row["M"]
            writer.writerow(row)
        return buf.getvalue()


def _run_cell(spec, method, M, Ns, seed, truth, truth_tensor, data):
    from .solver import SolverConfig

    cfg = SolverConfig(
        rank=spec.F, num_projections=M or 200, rho=spec.rho, seed=seed,
        max_outer=spec.max_outer, max_inner=spec.max_inner,
    )
    est = fit_method(method, data, spec.F, cfg, seed)
    err_mae = None
    if truth_tensor is not None:
        err_mae = mae(truth_tensor, full_tensor(est))
    return {"method": method, "M": M, "Ns": Ns, "seed": seed,
            "mse": mse_aligned(truth, est), "mae": err_mae}


def run_experiment(spec: ExperimentSpec, progress=None) -> ExperimentResult:
    """Run every (seed, sample size, method[, M]) cell of ``spec``.

    The ground-truth model for seed ``s`` is drawn from ``s``; its samples for
    size ``Ns`` are drawn from ``(s, Ns)`` and shared by all methods, so
    methods are compared on identical data.  If ``spec.output`` is set, the
    mean table is written there and the per-seed records next to it
    (``*.records.csv``), flushed after every cell.
    """
    gen = gen_pmf_model if spec.generator == "pmf" else gen_cim_model
    result = ExperimentResult(spec, [])
    for seed in spec.seeds:
        truth = gen(spec.F, spec.I, spec.N, seed)
        try:
            truth_tensor = full_tensor(truth, DEFAULT_TENSOR_CAP)
        except TensorTooLargeError:
            truth_tensor = None
        for Ns in spec.sample_sizes:
            data = sample(truth, Ns, spec.kappa, seed=[seed, Ns])
            for method, M in result.row_labels():
                if M is None:
                    M = spec.M_values[0] if method.startswith("juror-") else None
                result.records.append(
                    _run_cell(spec, method, M, Ns, seed, truth, truth_tensor, data)
                )
                if progress:
                    progress(result.records[-1])
                if spec.output:
                    write_results(result, spec.output)
    return result


def write_results(result: ExperimentResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(result.table("mse"))
    stem = str(path)
    stem = stem[:-4] if stem.endswith(".csv") else stem
    with open(stem + ".records.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(result.records_csv())
