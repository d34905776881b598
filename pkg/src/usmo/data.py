"""Datasets, file loaders, PU split construction and the F-measure."""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InputError, ParseError


@dataclass(frozen=True)
class Dataset:
    """Training input of the solver: labeled positives and an unlabeled pool.

    No labels for the unlabeled pool live here; see :class:`PUSplit`.
    """

    positives: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.positives, dtype=float))
        U = np.atleast_2d(np.asarray(self.unlabeled, dtype=float))
        if P.shape[0] < 1 or P.size == 0:
            raise InputError("need at least one positive sample")
        if U.shape[0] < 1 or U.size == 0:
            raise InputError("need at least one unlabeled sample")
        if P.shape[1] != U.shape[1]:
            raise InputError(
                f"positives have dimension {P.shape[1]}, unlabeled {U.shape[1]}"
            )
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(U))):
            raise InputError("features must be finite")
        object.__setattr__(self, "positives", P)
        object.__setattr__(self, "unlabeled", U)

    @property
    def p(self):
        return self.positives.shape[0]

    @property
    def n(self):
        return self.unlabeled.shape[0]

    @property
    def dim(self):
        return self.positives.shape[1]

    @property
    def X(self):
        """All training samples, positives first (the order alpha is indexed in)."""
        return np.vstack([self.positives, self.unlabeled])


@dataclass(frozen=True)
class PUSplit:
    """A Dataset plus the hidden labels of its unlabeled pool (evaluation only)."""

    dataset: Dataset
    hidden_labels: np.ndarray = field(repr=False)
    prior: float

    @property
    def n_positive_total(self):
        return self.dataset.p + int(np.sum(self.hidden_labels == 1))


def _open_text(source):
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source
    # any iterable of lines
    return io.StringIO("\n".join(source))


def _close_if_owned(source, handle):
    if isinstance(source, (str, Path)):
        handle.close()


def _parse_float(token, line, column=None, what="value"):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric {what} {token!r}", line, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what} {token!r}", line, column)
    return value


def load_libsvm(source, n_features=None):
    """Parse LIBSVM/SVMlight text into a dense matrix and a label vector.

    Lines look like ``<label> <idx>:<val> ...`` with 1-based, strictly
    ascending indices. Blank lines and ``#`` comments are ignored. The
    dimension is the largest index seen, or ``n_features`` when given (an
    index beyond it is an error).
    """
    handle = _open_text(source)
    labels, rows = [], []
    max_index = 0
    try:
        for lineno, raw in enumerate(handle, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            tokens = text.split()
            labels.append(_parse_float(tokens[0], lineno, what="label"))
            entries = []
            last = 0
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise ParseError(f"expected <index>:<value>, got {tok!r}", lineno)
                try:
                    idx = int(idx_s)
                except ValueError:
                    raise ParseError(f"non-numeric index {idx_s!r}", lineno) from None
                if idx < 1:
                    raise ParseError(f"indices are 1-based, got {idx}", lineno)
                if idx <= last:
                    raise ParseError(f"indices must be strictly ascending ({idx} after {last})", lineno)
                last = idx
                entries.append((idx, _parse_float(val_s, lineno)))
            if n_features is not None and last > n_features:
                raise InputError(
                    f"line {lineno}: feature index {last} exceeds expected dimension {n_features}"
                )
            max_index = max(max_index, last)
            rows.append(entries)
    finally:
        _close_if_owned(source, handle)

    d = max_index if n_features is None else int(n_features)
    X = np.zeros((len(rows), d))
    for r, entries in enumerate(rows):
        for idx, val in entries:
            X[r, idx - 1] = val
    return X, np.asarray(labels, dtype=float)


def dump_libsvm(X, y, sink):
    """Write samples in LIBSVM format (zeros omitted, shortest round-trip floats)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    for row, label in zip(X, y):
        parts = [_fmt_label(label)]
        parts += [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0.0]
        sink.write(" ".join(parts) + "\n")


def _fmt_label(label):
    label = float(label)
    if label.is_integer():
        return f"{int(label):+d}"
    return repr(label)


def load_csv(source, label_column=0, header=False, n_features=None):
    """Parse a numeric CSV; ``label_column`` selects the label, the rest are features."""
    handle = _open_text(source)
    labels, rows = [], []
    try:
        reader = csv.reader(handle)
        for lineno, record in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not record or all(not c.strip() for c in record):
                continue
            if not -len(record) <= label_column < len(record):
                raise ParseError(f"label column {label_column} missing", lineno)
            values = [
                _parse_float(cell.strip(), lineno, col + 1, what="cell")
                for col, cell in enumerate(record)
            ]
            label = values.pop(label_column)
            if rows and len(values) != len(rows[0]):
                raise ParseError(f"expected {len(rows[0])} features, got {len(values)}", lineno)
            labels.append(label)
            rows.append(values)
    finally:
        _close_if_owned(source, handle)
    if not rows:
        d = 0 if n_features is None else int(n_features)
        return np.zeros((0, d)), np.zeros(0)
    X = np.asarray(rows, dtype=float)
    if n_features is not None and X.shape[1] != n_features:
        raise InputError(f"data has {X.shape[1]} features, expected {n_features}")
    return X, np.asarray(labels, dtype=float)


def binarize_labels(y, target_class=None):
    """Map labels to {+1, -1}; with ``target_class`` this is one-vs-all."""
    y = np.asarray(y, dtype=float)
    if target_class is not None:
        return np.where(y == float(target_class), 1, -1).astype(int)
    bad = ~np.isin(y, (1.0, -1.0))
    if np.any(bad):
        raise InputError(
            f"labels must be +1/-1 (found {y[bad][0]!r}); pass a target class for one-vs-all"
        )
    return y.astype(int)


def make_pu_split(X, y, labeled_fraction, seed=None):
    """Hide all negatives and a random ``1 - labeled_fraction`` share of positives.

    ``ceil(labeled_fraction * #positives)`` positives form the labeled set;
    everything else becomes the unlabeled pool, in original order, with its
    true labels kept aside. The prior is the positive class proportion.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = binarize_labels(y)
    if not 0.0 < labeled_fraction <= 1.0:
        raise InputError(f"labeled fraction must lie in (0, 1], got {labeled_fraction}")
    pos = np.flatnonzero(y == 1)
    if pos.size == 0:
        raise InputError("no positive samples to label")
    n_lab = min(pos.size, max(1, math.ceil(labeled_fraction * pos.size - 1e-9)))
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(pos, size=n_lab, replace=False))
    mask = np.zeros(len(y), dtype=bool)
    mask[chosen] = True
    if mask.all():
        raise InputError("split leaves the unlabeled pool empty")
    dataset = Dataset(X[mask], X[~mask])
    return PUSplit(dataset, y[~mask].copy(), prior=pos.size / len(y))


def f_measure(predicted, true) -> float:
    """2TP / (2TP + FP + FN), positive class +1; 0 when undefined."""
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    if predicted.shape != true.shape:
        raise InputError(f"length mismatch: {predicted.shape} vs {true.shape}")
    tp = int(np.sum((predicted == 1) & (true == 1)))
    fp = int(np.sum((predicted == 1) & (true != 1)))
    fn = int(np.sum((predicted != 1) & (true == 1)))
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom
