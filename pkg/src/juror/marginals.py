"""Categorical datasets and empirical marginals.

Missing entries use pairwise deletion: a sample contributes to a pair (or
triple) of variables only when every variable involved is observed.
"""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import MISSING
from .radon import build_operator, forward


class DataError(ValueError):
    """Malformed input data (unparseable cells, codes outside the schema)."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """``T`` samples of ``N`` integer-coded categorical features.

    ``codes`` is a (T, N) int array with :data:`MISSING` marking unobserved
    entries.
    """

    codes: np.ndarray
    cardinalities: tuple
    names: tuple = None

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64)
        if codes.ndim != 2 or codes.shape[0] < 1:
            raise DataError("dataset needs at least one sample")
        cards = tuple(int(c) for c in self.cardinalities)
        if len(cards) != codes.shape[1]:
            raise DataError(
                f"{len(cards)} cardinalities given for {codes.shape[1]} features"
            )
        for n, card in enumerate(cards):
            col = codes[:, n]
            obs = col[col != MISSING]
            if obs.size and (obs.min() < 0 or obs.max() >= card):
                raise DataError(f"feature {n} has codes outside [0, {card})")
        names = self.names
        if names is None:
            names = tuple(f"x{n}" for n in range(codes.shape[1]))
        elif len(names) != codes.shape[1]:
            raise DataError("number of names does not match number of features")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "names", tuple(names))

    @property
    def num_samples(self) -> int:
        return self.codes.shape[0]

    @property
    def num_vars(self) -> int:
        return self.codes.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.codes != MISSING

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.cardinalities == other.cardinalities
            and self.names == other.names
            and np.array_equal(self.codes, other.codes)
        )

    __hash__ = None

    def take(self, rows) -> "Dataset":
        return Dataset(self.codes[rows], self.cardinalities, self.names)

    def select(self, columns) -> "Dataset":
        columns = list(columns)
        return Dataset(
            self.codes[:, columns],
            [self.cardinalities[c] for c in columns],
            [self.names[c] for c in columns],
        )


@dataclass(eq=False)
class ProjectedStack:
    """Empirical projected PMFs, one ``M x B`` matrix per variable pair.

    Attributes
    ----------
    pairs : list of (int, int)
        Pairs with nonzero support, ``j < k``.
    Y : dict
        ``(j, k) -> ndarray (M, B)``; rows are PMFs.
    support : dict
        ``(j, k) -> int``, samples with both features observed.
    dropped : list of (int, int)
        Requested pairs with zero support; their ``Y`` is all-zero.
    """

    pairs: list
    Y: dict
    support: dict
    dropped: list = field(default_factory=list)


def all_pairs(num_vars):
    return list(itertools.combinations(range(num_vars), 2))


def pair_operators(directions, cardinalities, pairs=None, num_bins=None) -> dict:
    """One operator per pair, shared between pairs with the same grid shape."""
    if pairs is None:
        pairs = all_pairs(len(cardinalities))
    by_shape = {}
    ops = {}
    for j, k in pairs:
        shape = (cardinalities[j], cardinalities[k])
        if shape not in by_shape:
            by_shape[shape] = build_operator(directions, *shape, B=num_bins)
        ops[(j, k)] = by_shape[shape]
    return ops


def _joint_counts(data, variables):
    cols = data.codes[:, list(variables)]
    keep = np.all(cols != MISSING, axis=1)
    shape = tuple(data.cardinalities[v] for v in variables)
    flat = np.ravel_multi_index(tuple(cols[keep].T), shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return counts, int(keep.sum())


def pair_counts(data: Dataset, j: int, k: int):
    """Co-occurrence count matrix of ``(X_j, X_k)`` and its support."""
    if j == k:
        raise ValueError("pair needs two distinct variables")
    return _joint_counts(data, (j, k))


def estimate_pairwise(data: Dataset, j: int, k: int) -> np.ndarray:
    """Normalized co-occurrence matrix; all-zero when the pair has no support."""
    counts, support = pair_counts(data, j, k)
    if support == 0:
        return np.zeros(counts.shape)
    return counts / support


def estimate_threeway(data: Dataset, j: int, k: int, l: int) -> np.ndarray:
    """Normalized 3-way counts over samples observing all three features."""
    if len({j, k, l}) != 3:
        raise ValueError("triple needs three distinct variables")
    counts, support = _joint_counts(data, (j, k, l))
    if support == 0:
        return np.zeros(counts.shape)
    return counts / support


def estimate_projected(data: Dataset, ops: dict, pairs=None) -> ProjectedStack:
    """Histogram the projected samples of every pair in ``ops``.

    Each observed sample of a pair lands in the bin of ``phi_m . (x_j, x_k)``
    under the operator's own edges.  Since a sample's offset depends only on
    its cell, the histogram is accumulated cell-wise and pushed through the
    operator's cell-to-bin map, which is the same binning without a pass
    over ``T x M`` offsets.
    """
    if pairs is None:
        pairs = sorted(ops)
    kept, Y, support, dropped = [], {}, {}, []
    for j, k in pairs:
        op = ops[(j, k)]
        if op.shape != (data.cardinalities[j], data.cardinalities[k]):
            raise ValueError(f"operator for pair {(j, k)} has grid {op.shape}")
        counts, n_obs = pair_counts(data, j, k)
        support[(j, k)] = n_obs
        if n_obs == 0:
            Y[(j, k)] = np.zeros(op.out_shape)
            dropped.append((j, k))
            continue
        Y[(j, k)] = forward(op, counts) / n_obs
        kept.append((j, k))
    return ProjectedStack(kept, Y, support, dropped)


def exact_projected(model, ops: dict, pairs=None) -> ProjectedStack:
    """Population-limit stack ``forward(pairwise_marginal(model, j, k))``."""
    from .model import pairwise_marginal

    if pairs is None:
        pairs = sorted(ops)
    Y = {p: forward(ops[p], pairwise_marginal(model, *p)) for p in pairs}
    return ProjectedStack(list(pairs), Y, {p: np.inf for p in pairs})


def discretize(raw, bins_per_var: int, names=None) -> Dataset:
    """Uniformly bin each real-valued column of ``raw`` into ``bins_per_var`` codes.

    Bins are half-open except the last, which includes the column maximum.
    A constant column maps entirely to code 0 (with a warning).
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError("raw data must be a 2-D table")
    if bins_per_var < 2:
        raise ValueError("need at least two bins per variable")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw data has non-finite entries")
    codes = np.zeros(raw.shape, dtype=np.int64)
    for n in range(raw.shape[1]):
        col = raw[:, n]
        lo, hi = col.min(), col.max()
        if hi == lo:
            warnings.warn(f"column {n} is constant; all values map to bin 0")
            continue
        width = (hi - lo) / bins_per_var
        codes[:, n] = np.clip(np.floor((col - lo) / width), 0, bins_per_var - 1)
    return Dataset(codes, [bins_per_var] * raw.shape[1], names)


def load_schema(path) -> dict:
    """Read a JSON schema sidecar: ``{"cardinalities": {...}, "label": name}``."""
    with open(path, encoding="utf-8") as fh:
        schema = json.load(fh)
    if "cardinalities" not in schema:
        raise DataError("schema must contain a 'cardinalities' mapping")
    return schema


def load_csv(path, schema=None) -> Dataset:
    """Load an integer-coded CSV with a header row; empty cells are missing.

    ``schema`` may be a dict (see :func:`load_schema`), a path to one, or
    ``None`` to infer each cardinality as ``max code + 1``.
    """
    if isinstance(schema, (str, bytes)) or hasattr(schema, "__fspath__"):
        schema = load_schema(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
            vals = []
            for c, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    vals.append(MISSING)
                    continue
                try:
                    vals.append(int(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {cell!r} at row {r}, column {c + 1} ({header[c]})"
                    ) from None
                if vals[-1] < 0:
                    raise DataError(f"{path}: negative code at row {r}, column {c + 1}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    codes = np.array(rows, dtype=np.int64)
    names = [h.strip() for h in header]

    if schema is None:
        cards = []
        for n in range(codes.shape[1]):
            obs = codes[codes[:, n] != MISSING, n]
            cards.append(max(int(obs.max()) + 1 if obs.size else 2, 2))
    else:
        declared = schema["cardinalities"]
        cards = []
        for n, name in enumerate(names):
            if name not in declared:
                raise DataError(f"schema has no cardinality for column {name!r}")
            card = int(declared[name])
            obs = codes[codes[:, n] != MISSING, n]
            if obs.size and obs.max() >= card:
                raise DataError(
                    f"column {name!r} has code {int(obs.max())} >= declared cardinality {card}"
                )
            cards.append(card)
    return Dataset(codes, cards, names)


def save_csv(data: Dataset, path) -> None:
    """Write ``data`` in the format read by :func:`load_csv`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.names)
        for row in data.codes:
            writer.writerow(["" if v == MISSING else int(v) for v in row])


def save_schema(data: Dataset, path, label=None) -> None:
    schema = {"cardinalities": dict(zip(data.names, data.cardinalities))}
    if label is not None:
        schema["label"] = label
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)
        fh.write("\n")


def encode_categorical(rows, header=None):
    """Integer-code string categories, assigning codes in lexicographic order.

    Empty cells become MISSING.  Returns ``(dataset, categories)`` where
    ``categories[n]`` lists the values of column ``n`` by code.
    """
    rows = [[cell.strip() for cell in row] for row in rows]
    if not rows:
        raise DataError("no data rows")
    width = len(rows[0]) if header is None else len(header)
    if header is None:
        header = [f"x{n}" for n in range(width)]
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DataError(f"row {r} has {len(row)} fields, expected {width}")
    categories = [sorted({row[c] for row in rows} - {""}) for c in range(width)]
    lookup = [{v: i for i, v in enumerate(vals)} for vals in categories]
    codes = np.array(
        [[lookup[c].get(row[c], MISSING) for c in range(width)] for row in rows],
        dtype=np.int64,
    )
    cards = [max(len(v), 2) for v in categories]
    return Dataset(codes, cards, [h.strip() for h in header]), categories


def read_categorical_csv(path, has_header=True):
    """Read a CSV of string categories and encode it (see :func:`encode_categorical`)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows.pop(0) if has_header else None
    try:
        return encode_categorical(rows, header)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
