"""Dataset loading from CSV files.

Two layouts are supported: dense CSV with one sample per row, and sparse
triplet CSV with ``row,col,value`` lines (row = sample index, col = feature
index, both 0-based). Features come back in column-sample layout.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import IoError, MissingLabelColumn, ParseError, RaggedRows


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1)
                    if row and any(cell.strip() for cell in row)]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path} is empty", line=1)
    return rows


def _to_float(cell, line):
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", line=line) from None


def encode_labels(raw):
    """Integer labels as-is, anything else mapped to codes in order of first sort."""
    try:
        return np.array([int(x) for x in raw])
    except ValueError:
        _, codes = np.unique(np.asarray(raw, dtype=str), return_inverse=True)
        return codes.ravel()


def _label_index(label_col, names, width):
    if isinstance(label_col, str) and not label_col.lstrip("-").isdigit():
        if names is None or label_col not in names:
            raise MissingLabelColumn(f"no column named {label_col!r}")
        return names.index(label_col)
    idx = int(label_col)
    if not -width <= idx < width:
        raise MissingLabelColumn(f"label column {idx} out of range for {width} columns")
    return idx % width


def load_dense(path, label_col=None, header=False):
    rows = _read_rows(path)
    names = None
    if header:
        names = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path} has a header but no data", line=2)
    width = len(rows[0][1])
    if names is not None and len(names) != width:
        raise RaggedRows(f"header has {len(names)} columns, data has {width}", line=rows[0][0])
    li = None if label_col is None else _label_index(label_col, names, width)
    feats, raw_labels = [], []
    for line, row in rows:
        if len(row) != width:
            raise RaggedRows(f"expected {width} columns, got {len(row)}", line=line)
        if li is not None:
            raw_labels.append(row[li].strip())
        feats.append([_to_float(c, line) for j, c in enumerate(row) if j != li])
    X = np.asarray(feats, dtype=float).T
    if X.shape[0] == 0:
        raise ParseError(f"{path} has no feature columns")
    labels = encode_labels(raw_labels) if li is not None else None
    return X, labels


def load_triplets(path, header=False):
    rows = _read_rows(path)
    if header:
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path} has no triplets")
    r_idx, c_idx, vals = [], [], []
    for line, row in rows:
        if len(row) != 3:
            raise RaggedRows(f"triplet line needs 3 fields, got {len(row)}", line=line)
        i, j, v = (_to_float(c, line) for c in row)
        if i != int(i) or j != int(j) or i < 0 or j < 0:
            raise ParseError(f"indices must be nonnegative integers, got ({row[0]}, {row[1]})", line=line)
        r_idx.append(int(i))
        c_idx.append(int(j))
        vals.append(v)
    n, m = max(r_idx) + 1, max(c_idx) + 1
    X = np.zeros((m, n))
    np.add.at(X, (c_idx, r_idx), vals)
    return X


def load_labels(path):
    rows = _read_rows(path)
    return encode_labels([row[0].strip() for _, row in rows])


def load_dataset(path, fmt="dense", label_col=None, header=False, labels_path=None):
    """Read features (``m x n``) and optional labels from ``path``."""
    path = Path(path)
    if fmt == "dense":
        X, labels = load_dense(path, label_col=label_col, header=header)
    elif fmt == "triplet":
        if label_col is not None:
            raise MissingLabelColumn("triplet files carry no label column; pass labels_path")
        X, labels = load_triplets(path, header=header), None
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if labels_path is not None:
        labels = load_labels(labels_path)
    if labels is not None and labels.size != X.shape[1]:
        raise ParseError(f"{labels.size} labels for {X.shape[1]} samples")
    return X, labels


def standardize(X):
    """Zero-mean, unit-variance features; constant features are only centered."""
    mean = X.mean(axis=1, keepdims=True)
    std = X.std(axis=1, keepdims=True)
    return (X - mean) / np.where(std > 0, std, 1.0)
