"""Shared data model: validated datasets, sample-split plans and seeded RNG streams.

Everything downstream treats these types as immutable; the arrays are
write-protected after construction so they can be shared across workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

#: Named substreams of the master seed. Each (master_seed, label, *indices)
#: triple maps to one deterministic, mutually independent generator.
STREAM_LABELS = {
    "splitting": 0,
    "cv-folds": 1,
    "simulation-noise": 2,
    "beta-sampling": 3,
    "design": 4,
    "screening-random": 5,
    "replication": 6,
}

MIN_SAMPLES = 4


class ValidationError(ValueError):
    """Raised when input data violates the model contract."""


@dataclass(frozen=True)
class RngSpec:
    """Deterministic randomness contract.

    A single 64-bit master seed plus a labelled-substream convention.
    ``stream`` derives an independent generator for any (label, indices)
    pair, so parallel execution order can never change results.
    """

    master_seed: int
    prefix: tuple = ()

    def stream(self, label: str, *indices: int) -> np.random.Generator:
        """Independent generator for a named substream."""
        key = self.prefix + (STREAM_LABELS[label],) + tuple(indices)
        return np.random.default_rng(np.random.SeedSequence(self.master_seed, spawn_key=key))

    def child(self, label: str, *indices: int) -> "RngSpec":
        """A derived spec whose streams are all disjoint from the parent's."""
        return RngSpec(self.master_seed, self.prefix + (STREAM_LABELS[label],) + tuple(indices))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Response vector plus fixed design matrix, the unit of ingestion."""

    y: np.ndarray
    x: np.ndarray
    variable_names: tuple

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def make_dataset(y, x, variable_names=None) -> Dataset:
    """Build a validated Dataset from raw arrays.

    Raises ValidationError on non-finite entries, n < 4, p < 1, shape
    mismatch, or duplicate variable names.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError("design matrix must be 2-dimensional")
    n, p = x.shape
    if y.shape[0] != n:
        raise ValidationError(f"response has {y.shape[0]} rows, design has {n}")
    if n < MIN_SAMPLES:
        raise ValidationError(f"n < {MIN_SAMPLES}: got n={n}")
    if p < 1:
        raise ValidationError("design matrix has no columns")
    bad = np.argwhere(~np.isfinite(x))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"non-finite design entry at row {i + 1}, column {j + 1}")
    bad = np.argwhere(~np.isfinite(y))
    if bad.size:
        raise ValidationError(f"non-finite response entry at row {bad[0, 0] + 1}")
    if variable_names is None:
        variable_names = tuple(f"x{j + 1}" for j in range(p))
    else:
        variable_names = tuple(str(v) for v in variable_names)
        if len(variable_names) != p:
            raise ValidationError(f"{len(variable_names)} variable names for {p} columns")
        if len(set(variable_names)) != p:
            seen, dup = set(), None
            for v in variable_names:
                if v in seen:
                    dup = v
                    break
                seen.add(v)
            raise ValidationError(f"duplicate variable name: {dup!r}")
    return Dataset(_frozen(y), _frozen(x), variable_names)


def validate_dataset(raw, response_column, column_names=None) -> Dataset:
    """Extract a Dataset from a rectangular table of reals.

    ``response_column`` selects the response by 1-based position, or by name
    when ``column_names`` is given. The remaining columns become the design
    matrix with their order preserved.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValidationError("input table must be 2-dimensional")
    ncol = raw.shape[1]
    if ncol < 2:
        raise ValidationError("table needs a response column and at least one predictor")
    bad = np.argwhere(~np.isfinite(raw))
    if bad.size:
        i, j = bad[0]
        name = f" ({column_names[j]!r})" if column_names is not None else ""
        raise ValidationError(f"non-finite entry at row {i + 1}, column {j + 1}{name}")

    if isinstance(response_column, str):
        if column_names is None:
            raise ValidationError("response selected by name but the table has no header")
        try:
            ridx = list(column_names).index(response_column)
        except ValueError:
            raise ValidationError(f"unknown response column {response_column!r}") from None
    else:
        ridx = int(response_column) - 1
        if not 0 <= ridx < ncol:
            raise ValidationError(f"response column index {response_column} out of range 1..{ncol}")

    keep = [j for j in range(ncol) if j != ridx]
    names = None if column_names is None else [column_names[j] for j in keep]
    return make_dataset(raw[:, ridx], raw[:, keep], names)


def load_csv(path, response_column, *, delimiter: str = ",", header: bool = True) -> Dataset:
    """Read a delimited file into a Dataset.

    With ``header`` the first row supplies column names and the response may
    be selected by name; otherwise only a 1-based column index is accepted.
    """
    rows = []
    names = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for rownum, row in enumerate(reader):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if header and names is None:
                names = [c.strip() for c in row]
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValidationError(f"non-numeric value in data row {len(rows) + 1}: {exc}") from None
    if not rows:
        raise ValidationError(f"no data rows in {path}")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValidationError(f"ragged table: data row {i + 1} has {len(r)} fields, expected {width}")
    if names is not None and len(names) != width:
        raise ValidationError(f"header has {len(names)} fields, data rows have {width}")
    return validate_dataset(np.asarray(rows, dtype=float), response_column, names)


@dataclass(frozen=True)
class SplitPlan:
    """One random split: screening half (in) and testing half (out)."""

    in_indices: np.ndarray
    out_indices: np.ndarray
    split_id: int

    def __post_init__(self):
        object.__setattr__(self, "in_indices", np.asarray(self.in_indices, dtype=np.intp))
        object.__setattr__(self, "out_indices", np.asarray(self.out_indices, dtype=np.intp))
        self.in_indices.setflags(write=False)
        self.out_indices.setflags(write=False)

    @property
    def n(self) -> int:
        return self.in_indices.size + self.out_indices.size


def screening_half_size(n: int) -> int:
    """Rows assigned to the screening half: floor((n - 1) / 2).

    Strictly less than half, so the testing half always has spare degrees
    of freedom for least squares.
    """
    return (n - 1) // 2


def make_split(n: int, split_id: int, rng: np.random.Generator) -> SplitPlan:
    """One uniformly random split plan over {1..n}."""
    k = screening_half_size(n)
    perm = rng.permutation(n)
    return SplitPlan(np.sort(perm[:k]), np.sort(perm[k:]), split_id)


def make_splits(n: int, B: int, rng: RngSpec) -> list:
    """B independent split plans, each drawn from its own substream.

    Splits are sampled independently; duplicate plans are possible for
    small n.
    """
    if n < MIN_SAMPLES:
        raise ValidationError(f"n < {MIN_SAMPLES}: got n={n}")
    if B < 1:
        raise ValidationError(f"need B >= 1 splits, got {B}")
    return [make_split(n, b, rng.stream("splitting", b)) for b in range(1, B + 1)]
