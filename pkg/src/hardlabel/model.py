"""Fully connected ReLU networks with a scalar output.

Evaluation is plain float64 numpy. The only surface an attack is allowed to
touch is :class:`HardLabelOracle`, which meters every query.
"""
from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: Coefficients at or below this magnitude are treated as zero when
#: normalizing an affine tuple.
ZERO_THRESHOLD = 1e-10


class ShapeError(ValueError):
    """Input or parameter dimensions do not match the architecture."""


class UnsupportedArchitectureError(ValueError):
    """Architecture violates the scalar-output assumption."""


@dataclass(frozen=True)
class Architecture:
    """Layer widths ``(d_0, d_1, ..., d_k, d_{k+1})``."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 2:
            raise ShapeError(f"need at least input and output widths, got {dims}")
        if any(d < 1 for d in dims):
            raise ShapeError(f"layer widths must be positive, got {dims}")
        if dims[-1] != 1:
            raise UnsupportedArchitectureError(
                f"only scalar outputs are supported, got output width {dims[-1]}"
            )

    @classmethod
    def parse(cls, spec: str) -> "Architecture":
        """Parse ``"512-2-1"`` style strings."""
        try:
            dims = tuple(int(tok) for tok in spec.strip().split("-"))
        except ValueError as exc:
            raise ShapeError(f"malformed architecture spec {spec!r}") from exc
        return cls(dims)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def depth(self) -> int:
        """Number of hidden layers ``k``."""
        return len(self.dims) - 2

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.dims[1:-1]

    @property
    def neuron_count(self) -> int:
        return sum(self.hidden)

    @property
    def parameter_count(self) -> int:
        return sum(self.dims[i] * self.dims[i - 1] + self.dims[i] for i in range(1, len(self.dims)))

    def __str__(self):
        return "-".join(str(d) for d in self.dims)


class ModelParameters:
    """Immutable weights and biases of a ``k``-deep network.

    ``weights[i]`` has shape ``(d_{i+1}, d_i)`` and ``biases[i]`` shape
    ``(d_{i+1},)``, i.e. list index 0 is the first affine layer.
    """

    __slots__ = ("arch", "weights", "biases")

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ShapeError("weights and biases must be non-empty and of equal length")
        ws, bs = [], []
        for w, b in zip(weights, biases):
            w = np.array(w, dtype=np.float64, copy=True)
            b = np.array(b, dtype=np.float64, copy=True).reshape(-1)
            if w.ndim == 1:
                w = w.reshape(1, -1)
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"weight {w.shape} incompatible with bias {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters must be finite")
            w.flags.writeable = False
            b.flags.writeable = False
            ws.append(w)
            bs.append(b)
        dims = [ws[0].shape[1]]
        for w in ws:
            if w.shape[1] != dims[-1]:
                raise ShapeError(f"layer expects {w.shape[1]} inputs but previous width is {dims[-1]}")
            dims.append(w.shape[0])
        object.__setattr__(self, "arch", Architecture(tuple(dims)))
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    def __setattr__(self, name, value):
        raise AttributeError("ModelParameters is immutable")

    def __repr__(self):
        return f"ModelParameters(arch={self.arch})"

    @property
    def depth(self) -> int:
        return self.arch.depth

    def flat(self) -> np.ndarray:
        """All parameters concatenated layer by layer (weights then bias)."""
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def scaled_output(self, factor: float) -> "ModelParameters":
        """Copy with the last affine layer multiplied by ``factor``."""
        ws = list(self.weights)
        bs = list(self.biases)
        ws[-1] = ws[-1] * factor
        bs[-1] = bs[-1] * factor
        return ModelParameters(ws, bs)

    @classmethod
    def random(cls, arch: Architecture | str, rng: np.random.Generator | int | None = None,
               low: float = -1.0, high: float = 1.0) -> "ModelParameters":
        """Untrained victim with every parameter i.i.d. uniform in ``[low, high]``."""
        if isinstance(arch, str):
            arch = Architecture.parse(arch)
        rng = np.random.default_rng(rng)
        ws, bs = [], []
        for d_in, d_out in zip(arch.dims[:-1], arch.dims[1:]):
            ws.append(rng.uniform(low, high, size=(d_out, d_in)))
            bs.append(rng.uniform(low, high, size=d_out))
        return cls(ws, bs)


def from_two_logits(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                    positive: int = 1) -> ModelParameters:
    """Scalar-output model from a classifier whose last layer emits two logits.

    The output row becomes ``logit[positive] - logit[1 - positive]``, so the
    hard label is 1 exactly where class ``positive`` wins the argmax (ties
    go to the other class).  Weight matrices are ``(out, in)``; a framework
    storing ``(in, out)`` needs a transpose first.
    """
    if positive not in (0, 1):
        raise ValueError("positive must be 0 or 1")
    ws = [np.asarray(w, dtype=np.float64) for w in weights]
    bs = [np.asarray(b, dtype=np.float64) for b in biases]
    if ws[-1].shape[0] != 2 or bs[-1].shape != (2,):
        raise ShapeError(f"last layer must have 2 outputs, got {ws[-1].shape[0]}")
    sign = np.array([-1.0, 1.0]) if positive == 1 else np.array([1.0, -1.0])
    ws[-1] = (sign @ ws[-1])[None, :]
    bs[-1] = np.array([sign @ bs[-1]])
    return ModelParameters(ws, bs)


def _check_input(params: ModelParameters, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (params.arch.input_dim,):
        raise ShapeError(f"expected input of dimension {params.arch.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    return x


def forward(params: ModelParameters, x) -> tuple[float, tuple[np.ndarray, ...]]:
    """Evaluate ``f(x)`` and the activation pattern of every hidden layer.

    A neuron is active iff its pre-activation is strictly positive.
    """
    h = _check_input(params, x)
    if h.ndim != 1:
        raise ShapeError("forward takes a single input vector; use forward_batch")
    pattern = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = w @ h + b
        active = z > 0
        pattern.append(active)
        h = np.where(active, z, 0.0)
    value = params.weights[-1] @ h + params.biases[-1]
    return float(value[0]), tuple(pattern)


def forward_batch(params: ModelParameters, xs, return_pattern: bool = False):
    """Vectorized forward pass over the rows of ``xs``.

    Returns the output values, and with ``return_pattern`` a tuple of boolean
    ``(batch, d_i)`` arrays.
    """
    h = _check_input(params, xs)
    if h.ndim == 1:
        h = h[None, :]
    pattern = []
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = h @ w.T + b
        active = z > 0
        if return_pattern:
            pattern.append(active)
        h = np.where(active, z, 0.0)
    out = (h @ params.weights[-1].T + params.biases[-1])[:, 0]
    if return_pattern:
        return out, tuple(pattern)
    return out


def hard_label_of(value):
    """Hard label of a raw output: 1 iff strictly positive."""
    return (np.asarray(value) > 0).astype(np.int8)


class OracleStats:
    """Thread-safe query counter."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    @property
    def query_count(self) -> int:
        return self._count

    def add(self, n: int = 1) -> None:
        with self._lock:
            self._count += n

    def reset(self) -> None:
        with self._lock:
            self._count = 0


def hard_label(params: ModelParameters, x, stats: OracleStats | None = None) -> int:
    """Query one hard label, counting it in ``stats``."""
    value, _ = forward(params, x)
    if stats is not None:
        stats.add(1)
    return int(value > 0)


class HardLabelOracle:
    """Black-box access to a victim: hard labels only, every query counted."""

    def __init__(self, params: ModelParameters, stats: OracleStats | None = None):
        self._params = params
        self.stats = stats if stats is not None else OracleStats()
        self.input_dim = params.arch.input_dim

    @property
    def query_count(self) -> int:
        return self.stats.query_count

    def __call__(self, x) -> int:
        return hard_label(self._params, x, self.stats)

    def query_batch(self, xs) -> np.ndarray:
        """One query per row of ``xs``."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if xs.shape[0] == 0:
            return np.zeros(0, dtype=np.int8)
        labels = hard_label_of(forward_batch(self._params, xs))
        self.stats.add(xs.shape[0])
        return labels


# -- activation patterns and affine tuples ---------------------------------

def pattern_to_ints(pattern: Iterable[np.ndarray]) -> tuple[int, ...]:
    """Encode each layer's bit vector as an integer, neuron ``j`` at bit ``j``."""
    return tuple(int(sum(1 << j for j, bit in enumerate(np.asarray(p)) if bit)) for p in pattern)


def pattern_from_ints(arch: Architecture, codes: Sequence[int]) -> tuple[np.ndarray, ...]:
    if len(codes) != arch.depth:
        raise ShapeError(f"expected {arch.depth} layer codes, got {len(codes)}")
    return tuple(
        np.array([(c >> j) & 1 for j in range(d)], dtype=bool) for c, d in zip(codes, arch.hidden)
    )


def affine_for_pattern(params: ModelParameters, pattern: Sequence[np.ndarray]) -> tuple[np.ndarray, float]:
    """The affine map ``x -> gamma @ x + beta`` the network computes on a pattern's region."""
    if len(pattern) != params.depth:
        raise ShapeError(f"pattern has {len(pattern)} layers, model has {params.depth}")
    gamma = np.eye(params.arch.input_dim)
    beta = np.zeros(params.arch.input_dim)
    for w, b, p in zip(params.weights[:-1], params.biases[:-1], pattern):
        p = np.asarray(p, dtype=bool)
        if p.shape != (w.shape[0],):
            raise ShapeError(f"layer pattern of shape {p.shape}, expected ({w.shape[0]},)")
        mask = p.astype(np.float64)[:, None]
        gamma = mask * (w @ gamma)
        beta = mask[:, 0] * (w @ beta + b)
    gamma = params.weights[-1] @ gamma
    beta = params.weights[-1] @ beta + params.biases[-1]
    return gamma[0].copy(), float(beta[0])


def first_significant(gamma: np.ndarray, zero_threshold: float = ZERO_THRESHOLD) -> int | None:
    idx = np.flatnonzero(np.abs(gamma) > zero_threshold)
    return int(idx[0]) if idx.size else None


def normalize_tuple(gamma, beta, zero_threshold: float = ZERO_THRESHOLD) -> tuple[np.ndarray, float]:
    """Divide by the magnitude of the first significant coefficient.

    All-zero ``gamma`` tuples are returned unchanged.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    a = first_significant(gamma, zero_threshold)
    if a is None:
        return gamma.copy(), float(beta)
    scale = abs(gamma[a])
    return gamma / scale, float(beta) / scale


def model_signature(params: ModelParameters, patterns: Iterable[Sequence[np.ndarray]],
                    zero_threshold: float = ZERO_THRESHOLD) -> list[tuple[np.ndarray, float]]:
    """Normalized affine tuples of the given patterns, without duplicates."""
    out: list[tuple[np.ndarray, float]] = []
    for p in patterns:
        g, b = normalize_tuple(*affine_for_pattern(params, p), zero_threshold=zero_threshold)
        if not any(np.array_equal(g, g2) and b == b2 for g2, b2 in out):
            out.append((g, b))
    return out


# -- file format ------------------------------------------------------------

def _num(x: float) -> str:
    return format(float(x), ".16e")


def dumps_model(params: ModelParameters) -> str:
    """Serialize to the JSON model format with 17 significant digits per number."""
    lines = ["{", f'  "dims": [{", ".join(str(d) for d in params.arch.dims)}],', '  "layers": [']
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        rows = ",\n".join("        [" + ", ".join(_num(v) for v in row) + "]" for row in w)
        bias = ", ".join(_num(v) for v in b)
        tail = "," if li < len(params.weights) - 1 else ""
        lines.append("    {")
        lines.append('      "weights": [\n' + rows + "\n      ],")
        lines.append(f'      "bias": [{bias}]')
        lines.append("    }" + tail)
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_model(text: str) -> ModelParameters:
    record = json.loads(text)
    dims = tuple(record["dims"])
    Architecture(dims)
    layers = record["layers"]
    if len(layers) != len(dims) - 1:
        raise ShapeError(f"{len(layers)} layers for dims {dims}")
    params = ModelParameters([np.array(L["weights"], dtype=np.float64) for L in layers],
                             [np.array(L["bias"], dtype=np.float64) for L in layers])
    if params.arch.dims != dims:
        raise ShapeError(f"layer shapes imply {params.arch.dims}, header says {dims}")
    return params


def save_model(params: ModelParameters, path) -> None:
    Path(path).write_text(dumps_model(params))


def load_model(path) -> ModelParameters:
    return loads_model(Path(path).read_text())


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
