"""Measuring how close an extracted model is to the victim (simulator mode only).

An extraction can only be correct up to a per-neuron positive scaling and a
permutation of the neurons inside each hidden layer.  Comparisons are made
against the victim rewritten in the attack's normal form: every hidden
neuron ``j`` of layer ``i`` and the output are divided by
``|C^(i)[j, anchor]|``, where ``C^(i) = A^(i) ... A^(1)`` is the product of
the weight matrices and ``anchor`` is the input coordinate used for
normalization.  The output of the normal form is ``c * f`` with
``c = 1 / |A^(k+1) C^(k)[:, anchor]|``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryPoint, SearchConfig, collect_boundary_points
from .extraction import plan_sets, pmr
from .model import Architecture, HardLabelOracle, ModelParameters, forward, forward_batch, pattern_to_ints

AMBIGUITY_TOLERANCE = 1e-6
CANONICAL_TOLERANCE = 1e-3


class IndeterminateScaleError(ValueError):
    """No sample had a victim output large enough to estimate the scale."""


class AmbiguousAlignmentWarning(UserWarning):
    pass


def products(params: ModelParameters) -> list[np.ndarray]:
    """``[C^(1), ..., C^(k+1)]`` with ``C^(i) = A^(i) ... A^(1)``."""
    out = []
    c = None
    for w in params.weights:
        c = w if c is None else w @ c
        out.append(c)
    return out


def theoretical_parameters(victim: ModelParameters, anchor: int = 0) -> ModelParameters:
    """The victim in normal form for the given anchor coordinate.

    ``A~[j, u] = A[j, u] * lam_prev[u] / lam[j]`` and ``b~[j] = b[j] / lam[j]``
    with ``lam = |C^(i)[:, anchor]|`` (``lam_prev = 1`` for the first layer).
    Raises ``ZeroDivisionError`` if some neuron has no weight on the anchor.
    """
    weights, biases = [], []
    prev = np.ones(victim.arch.input_dim)
    for w, b, c in zip(victim.weights, victim.biases, products(victim)):
        lam = np.abs(c[:, anchor])
        if np.any(lam == 0):
            raise ZeroDivisionError(f"a neuron has no dependence on input {anchor}")
        weights.append(w * prev[None, :] / lam[:, None])
        biases.append(b / lam)
        prev = lam
    return ModelParameters(weights, biases)


def expected_scale(victim: ModelParameters, anchor: int = 0) -> float:
    """``1 / |A^(k+1) C^(k)[:, anchor]|``, the factor between the normal form and the victim."""
    return 1.0 / abs(float(products(victim)[-1][0, anchor]))


def infer_anchor(extracted: ModelParameters, tol: float = CANONICAL_TOLERANCE) -> int | None:
    """Input coordinate on which every induced row of the model has magnitude one.

    ``None`` when the model is not in normal form for any coordinate.
    """
    cs = products(extracted)
    ok = np.ones(extracted.arch.input_dim, dtype=bool)
    for c in cs:
        ok &= np.all(np.abs(np.abs(c) - 1.0) < tol, axis=0)
    hits = np.flatnonzero(ok)
    return int(hits[0]) if hits.size else None


def permute_hidden(params: ModelParameters, perms: list[np.ndarray]) -> ModelParameters:
    """Reorder hidden neurons: new neuron ``j`` of layer ``i`` is old neuron ``perms[i][j]``."""
    ws = [w.copy() for w in params.weights]
    bs = [b.copy() for b in params.biases]
    for i, p in enumerate(perms):
        ws[i] = ws[i][p]
        bs[i] = bs[i][p]
        ws[i + 1] = ws[i + 1][:, p]
    return ModelParameters(ws, bs)


def _abs_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    return np.abs(an @ bn.T)


def greedy_match(sim: np.ndarray, layer: int = 0) -> np.ndarray:
    """Repeatedly pair the most similar remaining (extracted, victim) rows.

    Ties go to the lexicographically smallest pair; a competing pair sharing
    a row with the chosen one and within :data:`AMBIGUITY_TOLERANCE` triggers
    an :class:`AmbiguousAlignmentWarning`.
    Returns ``perm`` with ``perm[extracted_row] = victim_row``.
    """
    n = sim.shape[0]
    perm = np.full(n, -1)
    free_e = set(range(n))
    free_v = set(range(n))
    while free_e:
        pairs = sorted(((-sim[e, v], e, v) for e in free_e for v in free_v))
        best, e, v = pairs[0]
        rivals = [s for s, e2, v2 in pairs[1:] if e2 == e or v2 == v]
        if rivals and abs(rivals[0] - best) < AMBIGUITY_TOLERANCE:
            warnings.warn(f"ambiguous neuron match in layer {layer + 1}", AmbiguousAlignmentWarning,
                          stacklevel=3)
        perm[e] = v
        free_e.discard(e)
        free_v.discard(v)
    return perm


@dataclass
class Alignment:
    permutations: list[np.ndarray]
    anchor: int
    theoretical: ModelParameters  # victim permuted into the extracted order, in normal form
    extracted: ModelParameters  # extracted model, put in normal form if it was not already
    canonicalized: bool = False


def align(victim: ModelParameters, extracted: ModelParameters) -> Alignment:
    """Match extracted neurons to victim neurons and build the theoretical parameters.

    Layer ``i`` rows are matched on the absolute cosine between the induced
    rows of ``C^(i)``, which do not depend on how earlier layers are ordered.
    The anchor is inferred from the extracted model; a model not in normal
    form (for instance a rescaled copy of the victim) is normalized on
    coordinate 0 first.
    """
    if victim.arch != extracted.arch:
        raise ValueError(f"architectures differ: {victim.arch} vs {extracted.arch}")
    anchor = infer_anchor(extracted)
    canonicalized = anchor is None
    if canonicalized:
        anchor = 0
        extracted = theoretical_parameters(extracted, anchor)
    cv, ce = products(victim), products(extracted)
    perms = [greedy_match(_abs_cosine(ce[i], cv[i]), i) for i in range(victim.depth)]
    theo = theoretical_parameters(permute_hidden(victim, perms), anchor)
    return Alignment(perms, anchor, theo, extracted, canonicalized)


def max_param_error(alignment: Alignment) -> float:
    """``max |theta~ - theta^|`` over every weight and bias."""
    return float(np.max(np.abs(alignment.theoretical.flat() - alignment.extracted.flat())))


def error_bound(alignment: Alignment, domain_radius: float = 1.0) -> float:
    """Worst-case ``|f^(x) - c f(x)|`` over ``||x||_inf <= domain_radius`` by interval propagation.

    ``mag`` bounds the magnitude of the theoretical layer input and ``err``
    bounds the deviation of the extracted one from it.  Per layer::

        err' = |A~| err + |A^ - A~| (mag + err) + |b^ - b~|

    and ReLU, being 1-Lipschitz, passes ``err`` through.
    """
    theo, ext = alignment.theoretical, alignment.extracted
    dim = theo.arch.input_dim
    lo = np.full(dim, -float(domain_radius))
    hi = np.full(dim, float(domain_radius))
    err = np.zeros(dim)
    last = theo.depth
    for i, (wt, bt, we, be) in enumerate(zip(theo.weights, theo.biases, ext.weights, ext.biases)):
        mag = np.maximum(np.abs(lo), np.abs(hi))
        err = np.abs(wt) @ err + np.abs(we - wt) @ (mag + err) + np.abs(be - bt)
        pos, neg = np.maximum(wt, 0), np.minimum(wt, 0)
        lo, hi = pos @ lo + neg @ hi + bt, pos @ hi + neg @ lo + bt
        if i < last:
            lo, hi = np.maximum(lo, 0), np.maximum(hi, 0)
    return float(err[0])


@dataclass(frozen=True)
class ScaleEstimate:
    median: float
    spread: float  # interquartile range over |median|
    max_spread: float  # (max - min) over |median|
    used: int


def estimate_scale(victim: ModelParameters, extracted: ModelParameters, sample_count: int = 10_000,
                   rng_seed: int = 0, domain_radius: float = 1.0, min_abs: float = 1e-6) -> ScaleEstimate:
    """Median of ``f^(x) / f(x)`` over uniform samples with ``|f(x)| > min_abs``."""
    if victim.arch.input_dim != extracted.arch.input_dim:
        raise ValueError("models take inputs of different dimension")
    rng = np.random.default_rng(rng_seed)
    xs = rng.uniform(-domain_radius, domain_radius, size=(sample_count, victim.arch.input_dim))
    fv = forward_batch(victim, xs)
    keep = np.abs(fv) > min_abs
    if not np.any(keep):
        raise IndeterminateScaleError(f"no sample has |f| > {min_abs}")
    ratio = forward_batch(extracted, xs[keep]) / fv[keep]
    med = float(np.median(ratio))
    q1, q3 = np.percentile(ratio, [25, 75])
    denom = abs(med) if med != 0 else 1.0
    return ScaleEstimate(med, float(q3 - q1) / denom, float(ratio.max() - ratio.min()) / denom,
                         int(keep.sum()))


@dataclass
class EquivalenceReport:
    epsilon_bound: float
    max_param_error: float
    scale_c: float
    scale_spread: float
    expected_scale: float
    pmr: float
    query_count: int | None = None
    anchor: int = 0
    permutations: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if self.epsilon_bound < 0:
            raise ValueError("epsilon_bound must be non-negative")
        if not 0 <= self.pmr <= 1:
            raise ValueError("pmr must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "epsilon_bound": self.epsilon_bound,
            "log2_epsilon_bound": float(np.log2(self.epsilon_bound)) if self.epsilon_bound > 0 else None,
            "max_param_error": self.max_param_error,
            "log2_max_param_error": float(np.log2(self.max_param_error)) if self.max_param_error > 0 else None,
            "scale_c": self.scale_c,
            "scale_spread": self.scale_spread,
            "expected_scale": self.expected_scale,
            "pmr": self.pmr,
            "query_count": self.query_count,
            "anchor": self.anchor,
            "permutations": self.permutations,
        }


def verify(victim: ModelParameters, extracted: ModelParameters, *, pmr_samples: int = 1_000_000,
           scale_samples: int = 10_000, domain_radius: float = 1.0, rng_seed: int = 0,
           query_count: int | None = None) -> EquivalenceReport:
    """Align, bound the error, estimate the scale and measure PMR.

    The scale is measured on ``extracted`` as given.  The error bound and the
    parameter error compare normal forms, so for an extracted model that is
    not in normal form they describe its normalized copy.
    """
    al = align(victim, extracted)
    scale = estimate_scale(victim, extracted, scale_samples, rng_seed, domain_radius)
    return EquivalenceReport(
        epsilon_bound=error_bound(al, domain_radius),
        max_param_error=max_param_error(al),
        scale_c=scale.median,
        scale_spread=scale.spread,
        expected_scale=expected_scale(victim, al.anchor),
        pmr=pmr(victim, extracted, pmr_samples, rng_seed + 1, domain_radius),
        query_count=query_count,
        anchor=al.anchor,
        permutations=[p.tolist() for p in al.permutations],
    )


# -- victim screening (white-box) ---------------------------------------------

def boundary_patterns(victim: ModelParameters, points: list[BoundaryPoint]) -> set[tuple[int, ...]]:
    """Ground-truth activation patterns (as integer codes) at the given boundary points."""
    return {pattern_to_ints(forward(victim, bp.point)[1]) for bp in points}


def plans_covered(victim: ModelParameters, points: list[BoundaryPoint], relaxed: bool = False) -> bool:
    """Whether some full set of slot plans occurs among the points' true patterns.

    The attack cannot succeed otherwise: a neuron whose plan pattern never
    reaches the decision boundary leaves no tuple to recover it from.
    """
    seen = boundary_patterns(victim, points)
    return any({p.codes() for p in plans} <= seen for plans in plan_sets(victim.arch, relaxed))


def find_extractable_seed(arch: Architecture | str, start: int = 0, *, relaxed: bool = False,
                          search: SearchConfig | None = None, points_multiplier: int = 8,
                          limit: int = 100_000, low: float = -1.0, high: float = 1.0) -> int:
    """First seed ``>= start`` whose random victim exposes every plan pattern to the attack's own search.

    Uses the same boundary points the attack will collect, so a returned
    seed is one the attack can in principle extract.  Raises
    ``LookupError`` when none is found within ``limit`` seeds.
    """
    if isinstance(arch, str):
        arch = Architecture.parse(arch)
    search = search or SearchConfig()
    m = points_multiplier * (1 << arch.neuron_count)
    for seed in range(start, start + limit):
        victim = ModelParameters.random(arch, seed, low, high)
        points = collect_boundary_points(HardLabelOracle(victim), m, search)
        if points and plans_covered(victim, points, relaxed):
            return seed
    raise LookupError(f"no extractable {arch} victim among seeds {start}..{start + limit - 1}")
