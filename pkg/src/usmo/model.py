"""Trained kernel expansion f(x) = sum_i alpha_i k(x, x_i) + bias, and its text format.

File layout (UTF-8, LF)::

    usmo-model v1
    kernel linear            | kernel gaussian <scale>
    bias <float>
    dim <d>
    nsv <count>
    <alpha> <idx>:<val> ...  (one line per support vector, 1-based ascending)
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InputError, ParseError
from .kernel import GAUSSIAN, LINEAR, KernelSpec, kernel_matrix

FORMAT_VERSION = "v1"
MAGIC = "usmo-model"


def _fmt(x):
    return f"{float(x):.17g}"


@dataclass(frozen=True, eq=False)
class Model:
    kernel: KernelSpec
    bias: float
    alphas: np.ndarray
    support_vectors: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float).ravel()
        sv = np.asarray(self.support_vectors, dtype=float)
        if sv.ndim != 2:
            raise InputError("support vectors must form a 2-D array")
        if a.shape[0] != sv.shape[0]:
            raise InputError(f"{a.shape[0]} coefficients for {sv.shape[0]} support vectors")
        if not math.isfinite(self.bias):
            raise InputError("bias must be finite")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self):
        return self.support_vectors.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return (
            self.kernel == other.kernel
            and _same_bits(self.bias, other.bias)
            and self.alphas.shape == other.alphas.shape
            and self.support_vectors.shape == other.support_vectors.shape
            and self.alphas.tobytes() == other.alphas.tobytes()
            and self.support_vectors.tobytes() == other.support_vectors.tobytes()
        )

    __hash__ = None

    def decision_function(self, X, block=1024) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise InputError(f"model expects dimension {self.dim}, got {X.shape[1]}")
        out = np.empty(X.shape[0])
        if self.alphas.size == 0:
            out.fill(self.bias)
            return out
        for start in range(0, X.shape[0], block):
            K = kernel_matrix(self.kernel, X[start:start + block], self.support_vectors)
            out[start:start + block] = K @ self.alphas + self.bias
        return out

    def predict(self, X) -> np.ndarray:
        """Labels in {+1, -1}; a score of exactly zero maps to +1."""
        return np.where(self.decision_function(X) >= 0.0, 1, -1)


def _same_bits(a, b):
    return np.float64(a).tobytes() == np.float64(b).tobytes()


def predict_score(m: Model, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != m.dim:
        raise InputError(f"model expects dimension {m.dim}, got {x.shape[0]}")
    return float(m.decision_function(x[None, :])[0])


def predict_label(m: Model, x) -> int:
    return 1 if predict_score(m, x) >= 0.0 else -1


def dumps(m: Model) -> str:
    lines = [f"{MAGIC} {FORMAT_VERSION}"]
    if m.kernel.kind == LINEAR:
        lines.append("kernel linear")
    else:
        lines.append(f"kernel gaussian {_fmt(m.kernel.scale)}")
    lines.append(f"bias {_fmt(m.bias)}")
    lines.append(f"dim {m.dim}")
    lines.append(f"nsv {m.alphas.size}")
    for a, sv in zip(m.alphas, m.support_vectors):
        keep = np.flatnonzero((sv != 0.0) | np.signbit(sv))
        feats = " ".join(f"{k + 1}:{_fmt(sv[k])}" for k in keep)
        lines.append(f"{_fmt(a)} {feats}".rstrip())
    return "\n".join(lines) + "\n"


def save(m: Model, sink):
    text = dumps(m)
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sink.write(text)


def _float(tok, lineno, what):
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"bad {what} {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite {what} {tok!r}", lineno)
    return v


def _header(lines, lineno, key, nargs):
    if lineno > len(lines):
        raise ParseError(f"missing '{key}' line", lineno)
    toks = lines[lineno - 1].split()
    if not toks or toks[0] != key or len(toks) != nargs + 1:
        raise ParseError(f"expected '{key}' with {nargs} value(s), got {lines[lineno - 1]!r}", lineno)
    return toks[1:]


def loads(text: str) -> Model:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty model file", 1)
    first = lines[0].split()
    if len(first) != 2 or first[0] != MAGIC:
        raise ParseError(f"not a model file (header {lines[0]!r})", 1)
    if first[1] != FORMAT_VERSION:
        raise ParseError(f"unsupported model version {first[1]!r} (expected {FORMAT_VERSION})", 1)

    toks = lines[1].split() if len(lines) >= 2 else []
    if toks[:2] == ["kernel", LINEAR] and len(toks) == 2:
        kernel = KernelSpec.linear()
    elif toks[:2] == ["kernel", GAUSSIAN] and len(toks) == 3:
        scale = _float(toks[2], 2, "gaussian scale")
        if scale <= 0:
            raise ParseError("gaussian scale must be > 0", 2)
        kernel = KernelSpec.gaussian(scale)
    else:
        raise ParseError(f"bad kernel line {' '.join(toks)!r}", 2)

    bias = _float(_header(lines, 3, "bias", 1)[0], 3, "bias")
    try:
        dim = int(_header(lines, 4, "dim", 1)[0])
        nsv = int(_header(lines, 5, "nsv", 1)[0])
    except ValueError as exc:
        raise ParseError(f"bad integer: {exc}", 4) from None
    if dim < 1 or nsv < 0:
        raise ParseError("dim must be >= 1 and nsv >= 0", 4)
    if len(lines) - 5 != nsv:
        raise ParseError(f"expected {nsv} support vector lines, found {len(lines) - 5}", len(lines) + 1)

    alphas = np.empty(nsv)
    svs = np.zeros((nsv, dim))
    for r in range(nsv):
        lineno = 6 + r
        toks = lines[lineno - 1].split()
        if not toks:
            raise ParseError("empty coefficient line", lineno)
        alphas[r] = _float(toks[0], lineno, "alpha")
        last = 0
        for tok in toks[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep or not val_s:
                raise ParseError(f"truncated feature {tok!r}", lineno)
            try:
                idx = int(idx_s)
            except ValueError:
                raise ParseError(f"bad feature index {idx_s!r}", lineno) from None
            if idx <= last or idx > dim:
                raise ParseError(f"feature index {idx} out of order or beyond dim {dim}", lineno)
            last = idx
            svs[r, idx - 1] = _float(val_s, lineno, "feature value")
    return Model(kernel, bias, alphas, svs)


def load(source) -> Model:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return loads(fh.read())
    return loads(source.read())
