"""Base kernel construction, [0, 1] normalization and the binary kernel cache.

Feature matrices follow the column-sample layout: ``X`` has shape
``(m_features, n_samples)`` and column ``i`` is sample ``x_i``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateData, DimensionMismatch, IoError, NonFinite, NonPositiveKernel

logger = logging.getLogger(__name__)

GAUSSIAN_WIDTHS = (0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0)
POLYNOMIAL_PARAMS = ((0, 2), (0, 4), (1, 2), (1, 4))


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    t: float | None = None
    a: float | None = None
    b: int | None = None

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.t is None or not self.t > 0:
                raise ValueError(f"gaussian kernel needs t > 0, got {self.t}")
        elif self.kind == "polynomial":
            if self.a is None or self.b is None or int(self.b) != self.b or self.b < 1:
                raise ValueError(f"polynomial kernel needs a and integer b >= 1, got a={self.a}, b={self.b}")
        elif self.kind not in ("linear", "graph"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian(cls, t):
        return cls("gaussian", t=float(t))

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def polynomial(cls, a, b):
        return cls("polynomial", a=float(a), b=int(b))

    def to_dict(self):
        out = {"kind": self.kind}
        for key in ("t", "a", "b"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], t=d.get("t"), a=d.get("a"), b=d.get("b"))

    def __str__(self):
        if self.kind == "gaussian":
            return f"gaussian(t={self.t:g})"
        if self.kind == "polynomial":
            return f"polynomial(a={self.a:g},b={self.b})"
        return self.kind


def standard_specs():
    """The 12-kernel recipe: 7 gaussian widths, 1 linear, 4 polynomial."""
    specs = [KernelSpec.gaussian(t) for t in GAUSSIAN_WIDTHS]
    specs.append(KernelSpec.linear())
    specs.extend(KernelSpec.polynomial(a, b) for a, b in POLYNOMIAL_PARAMS)
    return specs


@dataclass
class KernelMatrix:
    values: np.ndarray
    spec: KernelSpec
    normalized: bool = False

    @property
    def n(self):
        return self.values.shape[0]


@dataclass
class KernelBank:
    kernels: list
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if not self.kernels:
            raise ValueError("kernel bank needs at least one kernel")
        n = self.kernels[0].n
        for k in self.kernels:
            if k.values.shape != (n, n):
                raise DimensionMismatch(f"kernel {k.spec} has shape {k.values.shape}, expected {(n, n)}")
            if not k.normalized:
                raise ValueError(f"kernel {k.spec} is not normalized")

    @property
    def r(self):
        return len(self.kernels)

    @property
    def n(self):
        return self.kernels[0].n

    @property
    def specs(self):
        return [k.spec for k in self.kernels]

    def stack(self):
        """Kernels as one ``(r, n, n)`` array."""
        return np.stack([k.values for k in self.kernels])

    def combine(self, g):
        """Weighted sum ``sum_i g_i H^i``."""
        return np.tensordot(np.asarray(g, dtype=float), self.stack(), axes=1)


def _as_features(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"feature matrix must be 2-D, got shape {X.shape}")
    m, n = X.shape
    if m < 1 or n < 2:
        raise DimensionMismatch(f"need m >= 1 features and n >= 2 samples, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFinite("feature matrix contains NaN or Inf")
    return X


def max_distance(X):
    """Largest pairwise Euclidean distance between the columns of ``X``."""
    X = _as_features(X)
    return float(pdist(X.T).max())


def build_kernel(X, spec, d_max=None):
    """Unnormalized kernel matrix of ``spec`` over the samples in ``X``.

    ``d_max`` is only used by gaussian kernels; pass it to share one value
    across several widths.
    """
    X = _as_features(X)
    if spec.kind == "gaussian":
        sq = squareform(pdist(X.T, "sqeuclidean"))
        if d_max is None:
            d_max = np.sqrt(sq.max())
        if d_max <= 0:
            raise DegenerateData("all samples are identical; gaussian kernel width is undefined")
        H = np.exp(-sq / (spec.t * d_max**2))
    elif spec.kind == "linear":
        H = X.T @ X
    elif spec.kind == "polynomial":
        with np.errstate(over="ignore", invalid="ignore"):
            H = (spec.a + X.T @ X) ** spec.b
    else:
        raise ValueError(f"cannot build a {spec.kind!r} kernel from features")
    if not np.all(np.isfinite(H)):
        raise NonFinite(f"kernel {spec} overflowed")
    H = 0.5 * (H + H.T)
    return KernelMatrix(H, spec, normalized=False)


def normalize_kernel(H, log=None):
    """Scale ``H`` by its largest entry so that entries lie in [0, 1].

    Entries that remain negative after scaling are clipped to 0; the event is
    appended to ``log`` when one is given.
    """
    values = H.values if isinstance(H, KernelMatrix) else np.asarray(H, dtype=float)
    spec = H.spec if isinstance(H, KernelMatrix) else None
    top = values.max()
    if not top > 0:
        raise NonPositiveKernel(f"kernel {spec} has max entry {top}; cannot scale to [0, 1]")
    out = values / top
    n_neg = int(np.count_nonzero(out < 0))
    if n_neg:
        msg = f"kernel {spec}: clipped {n_neg} negative entries (min {out.min():.3g}) to 0"
        logger.warning(msg)
        if log is not None:
            log.append(msg)
        out = np.maximum(out, 0.0)
    return KernelMatrix(out, spec, normalized=True)


def build_bank(X, specs):
    X = _as_features(X)
    d_max = None
    if any(s.kind == "gaussian" for s in specs):
        d_max = max_distance(X)
        if d_max <= 0:
            raise DegenerateData("all samples are identical; gaussian kernel width is undefined")
    log = []
    kernels = [normalize_kernel(build_kernel(X, s, d_max=d_max), log=log) for s in specs]
    return KernelBank(kernels, provenance=log)


def build_standard_bank(X):
    return build_bank(X, standard_specs())


def dataset_hash(X):
    X = np.ascontiguousarray(np.asarray(X, dtype="<f8"))
    h = hashlib.sha256()
    h.update(str(X.shape).encode())
    h.update(X.tobytes())
    return h.hexdigest()


def write_matrices(path, matrices, specs, dataset_hash=None):
    """Write square matrices as a JSON header line followed by raw ``<f8`` rows."""
    matrices = [np.asarray(M, dtype="<f8") for M in matrices]
    n = matrices[0].shape[0]
    for M in matrices:
        if M.shape != (n, n):
            raise DimensionMismatch(f"expected {(n, n)} matrices, got {M.shape}")
    header = {
        "n": n,
        "r": len(matrices),
        "specs": [s.to_dict() if isinstance(s, KernelSpec) else s for s in specs],
        "dataset_hash": dataset_hash,
    }
    try:
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            for M in matrices:
                fh.write(np.ascontiguousarray(M).tobytes(order="C"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return Path(path)


def read_matrices(path):
    """Inverse of :func:`write_matrices`; returns ``(header, [matrices])``."""
    try:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            payload = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    n, r = header["n"], header["r"]
    if len(payload) != 8 * n * n * r:
        raise IoError(f"{path}: payload has {len(payload)} bytes, expected {8 * n * n * r}")
    data = np.frombuffer(payload, dtype="<f8").reshape(r, n, n).astype(float)
    return header, list(data)


def save_bank(path, bank, X=None):
    return write_matrices(
        path,
        [k.values for k in bank.kernels],
        bank.specs,
        dataset_hash=None if X is None else dataset_hash(X),
    )


def load_bank(path, X=None):
    """Load a cached bank; with ``X`` given, refuse a cache built from other data."""
    header, mats = read_matrices(path)
    if X is not None and header.get("dataset_hash") != dataset_hash(X):
        raise IoError(f"{path}: kernel cache was built from a different dataset")
    specs = [KernelSpec.from_dict(d) for d in header["specs"]]
    return KernelBank([KernelMatrix(M, s, normalized=True) for M, s in zip(mats, specs)])
