"""Layer-by-layer extraction of a ``k``-deep network from recovered affine tuples.

Each hidden neuron ``j`` of layer ``i`` is recovered from a boundary point
whose activation pattern has only neuron ``j`` active in layer ``i`` and
every neuron of the other layers active; the output layer is recovered from
the all-active pattern.  Which recovered tuple carries which pattern is
unknown, so assignments are enumerated together with one sign guess per
hidden layer, and the resulting candidates are filtered by the normalized
model signature, the consistency of the guessed signs and finally the
prediction matching ratio (PMR).
"""
from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .boundary import BoundaryPoint, SearchConfig, collect_boundary_points
from .linalg import CompareConfig, DegenerateSystemError, mismatch_matrix, solve
from .model import (ZERO_THRESHOLD, Architecture, HardLabelOracle, ModelParameters, forward_batch,
                    hard_label_of)
from .recovery import (RecoveredTuple, RecoveryConfig, dedup_tuples, default_compare_config,
                       recover_all)

logger = logging.getLogger(__name__)


class InsufficientDataError(RuntimeError):
    """Fewer usable tuples than the ``n + 1`` the extraction needs."""


# -- activation pattern bookkeeping -----------------------------------------

def count_max_patterns(arch: Architecture | Sequence[int]) -> int:
    """Upper bound on the number of activation patterns of a network.

    ``prod_i (2^{d_i} - 1) + sum_{i>=2} prod_{j<i} (2^{d_j} - 1)`` over the
    hidden widths.  Accepts an :class:`Architecture` or the hidden widths.
    Python integers are unbounded, so no overflow handling is needed.
    """
    hidden = arch.hidden if isinstance(arch, Architecture) else tuple(arch)
    full = [(1 << d) - 1 for d in hidden]
    total = 1
    for f in full:
        total *= f
    for i in range(1, len(hidden)):
        prefix = 1
        for f in full[:i]:
            prefix *= f
        total += prefix
    return total


def count_reachable_patterns(arch: Architecture | Sequence[int]) -> int:
    """:func:`count_max_patterns` plus the one pattern with the first layer entirely inactive.

    That pattern (all later layers forced) can occur in any network, so this
    is the tight bound on distinct patterns.
    """
    hidden = arch.hidden if isinstance(arch, Architecture) else tuple(arch)
    return count_max_patterns(hidden) + (1 if hidden else 0)


def _bits(code: int, width: int) -> np.ndarray:
    return np.array([(code >> j) & 1 for j in range(width)], dtype=bool)


def enumerate_patterns(arch: Architecture, budget: int | None = None) -> list[tuple[np.ndarray, ...]] | None:
    """All patterns counted by :func:`count_max_patterns`.

    Every layer has at least one active neuron, plus, for each layer ``i >= 2``
    left entirely inactive, every choice of the earlier layers (the later
    layers are then forced and are encoded as inactive here; their exact
    states do not change the affine map, which is constant).  Returns
    ``None`` when the count exceeds ``budget``.
    """
    hidden = arch.hidden
    if budget is not None and count_max_patterns(arch) > budget:
        return None
    out = []
    ranges = [range(1, 1 << d) for d in hidden]
    for codes in itertools.product(*ranges):
        out.append(tuple(_bits(c, d) for c, d in zip(codes, hidden)))
    for i in range(1, len(hidden)):
        for codes in itertools.product(*ranges[:i]):
            pat = [_bits(c, d) for c, d in zip(codes, hidden[:i])]
            pat += [np.zeros(d, dtype=bool) for d in hidden[i:]]
            out.append(tuple(pat))
    return out


@dataclass(frozen=True)
class PatternPlan:
    """Pattern a slot's boundary point must have.

    ``layer`` is 1-based; ``layer == k + 1`` is the output slot, whose plan is
    the all-active pattern.
    """

    layer: int
    neuron: int
    pattern: tuple[np.ndarray, ...]

    def codes(self) -> tuple[int, ...]:
        return tuple(int(sum(1 << j for j, b in enumerate(p) if b)) for p in self.pattern)


def plan_for(arch: Architecture, layer: int, neuron: int,
             downstream: Sequence[int] | None = None) -> PatternPlan:
    """Plan for neuron ``neuron`` (0-based) of ``layer``.

    ``downstream`` optionally fixes the states (as integer codes) of layers
    after ``layer``; by default they are all active.
    """
    hidden = arch.hidden
    pat = [np.ones(d, dtype=bool) for d in hidden]
    if layer <= arch.depth:
        pat[layer - 1] = np.zeros(hidden[layer - 1], dtype=bool)
        pat[layer - 1][neuron] = True
        if downstream is not None:
            for q, code in zip(range(layer, arch.depth), downstream):
                pat[q] = _bits(code, hidden[q])
    return PatternPlan(layer, neuron, tuple(pat))


def downstream_variants(arch: Architecture, layer: int, relaxed: bool) -> list[tuple[int, ...] | None]:
    """Choices for the states of the layers after ``layer``.

    Strict plans keep them all active; the relaxed variant allows any state
    with at least one active neuron per layer.
    """
    later = arch.hidden[layer:]
    if not relaxed or not later:
        return [None]
    full = tuple((1 << d) - 1 for d in later)
    options = [full] + [c for c in itertools.product(*[range(1, 1 << d) for d in later]) if c != full]
    return options


def plan_sets(arch: Architecture, relaxed: bool = False) -> list[tuple[PatternPlan, ...]]:
    """Every full set of slot plans (hidden slots layer by layer, then the output slot)."""
    per_layer = [downstream_variants(arch, i, relaxed) for i in range(1, arch.depth + 1)]
    out = []
    for choice in itertools.product(*per_layer):
        plans = [plan_for(arch, i, j, choice[i - 1])
                 for i in range(1, arch.depth + 1) for j in range(arch.hidden[i - 1])]
        plans.append(plan_for(arch, arch.depth + 1, 0))
        out.append(tuple(plans))
    return out


# -- weight and bias recovery -------------------------------------------------

@dataclass
class ExtractionState:
    """Weights recovered so far and the product of their matrices."""

    weights: list[np.ndarray] = field(default_factory=list)
    product: np.ndarray | None = None  # C^(i-1) = A^(i-1) ... A^(1)

    @classmethod
    def initial(cls, input_dim: int) -> "ExtractionState":
        return cls([], np.eye(input_dim))

    def push(self, w: np.ndarray) -> "ExtractionState":
        return ExtractionState(self.weights + [w], w @ self.product)


def reanchor(t: RecoveredTuple, anchor: int) -> tuple[np.ndarray, float]:
    g, b = t.reanchored(anchor)
    if not np.all(np.isfinite(g)):
        raise DegenerateSystemError("tuple has unrecovered coordinates")
    return g, b


def recover_layer1(tuples: Sequence[RecoveredTuple], sign_guess: int, anchor: int = 0) -> np.ndarray:
    """First-layer weights: one re-anchored tuple per neuron, times the shared sign."""
    rows = []
    for t in tuples:
        if abs(t.gamma[anchor]) <= ZERO_THRESHOLD:
            raise DegenerateSystemError(f"tuple has no weight on anchor coordinate {anchor}")
        rows.append(sign_guess * reanchor(t, anchor)[0])
    return np.array(rows)


def recover_layer_weights(tuples: Sequence[RecoveredTuple], state: ExtractionState, sign_guess: int,
                          anchor: int = 0, max_residual: float | None = None) -> np.ndarray:
    """Weights of the next layer from the least-squares systems ``C^T w = sign * gamma``.

    ``state.product`` is the ``d_{i-1} x d_0`` product of the recovered
    layers.  Raises :class:`DegenerateSystemError` when a system is rank
    deficient, or when ``max_residual`` is given and exceeded.
    """
    coeffs = state.product.T
    rows = []
    for t in tuples:
        if abs(t.gamma[anchor]) <= ZERO_THRESHOLD:
            raise DegenerateSystemError(f"tuple has no weight on anchor coordinate {anchor}")
        rhs = sign_guess * reanchor(t, anchor)[0]
        w, res = solve(coeffs, rhs)
        if max_residual is not None and res > max_residual:
            raise DegenerateSystemError(f"residual {res:.3g} exceeds {max_residual:.3g}")
        rows.append(w)
    return np.array(rows)


def _bias_row(weights: Sequence[np.ndarray], pattern: Sequence[np.ndarray]):
    """Coefficients of every bias in ``f(x)`` under ``pattern``, plus ``Gamma_P``.

    Returns ``(per_layer_coeffs, gamma)`` where ``per_layer_coeffs[q]`` is
    the row vector multiplying ``b^(q+1)`` (i.e. ``G^(q+1)`` of the pattern).
    """
    k = len(weights) - 1
    v = weights[-1][0].copy()
    coeffs = [None] * k
    for q in range(k - 1, -1, -1):
        g = v * pattern[q]
        coeffs[q] = g
        v = g @ weights[q]
    return coeffs, v


def recover_biases(points: Sequence[np.ndarray], patterns: Sequence[Sequence[np.ndarray]],
                   weights: Sequence[np.ndarray]) -> list[np.ndarray]:
    """All biases from ``f(x_t) = 0`` at ``n + 1`` points with known patterns.

    With the patterns fixed the output is affine in the biases, giving an
    ``(n + 1) x (n + 1)`` linear system.
    """
    rows, rhs = [], []
    for x, pat in zip(points, patterns):
        coeffs, gamma = _bias_row(weights, pat)
        rows.append(np.concatenate(coeffs + [np.ones(1)]))
        rhs.append(-float(gamma @ x))
    sol, _ = solve(np.array(rows), np.array(rhs))
    out, pos = [], 0
    for w in weights:
        out.append(sol[pos:pos + w.shape[0]])
        pos += w.shape[0]
    return out


# -- filters -------------------------------------------------------------------

@dataclass(frozen=True)
class FilterConfig:
    compare: CompareConfig | None = None  # None: derived from the recovered tuples
    adaptive_fraction: float = 0.95
    pmr_samples: int | None = None  # None: max(1000, points requested * d_0)
    pattern_budget: int = 1 << 16

    def __post_init__(self):
        if not 0 < self.adaptive_fraction <= 1:
            raise ValueError("adaptive_fraction must be in (0, 1]")


def signature_matrix(params: ModelParameters, patterns: Sequence[Sequence[np.ndarray]],
                     zero_threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """Normalized ``(Gamma_P, B_P)`` rows for many patterns at once."""
    ws, bs = params.weights, params.biases
    h = len(patterns)
    masks = [np.array([p[q] for p in patterns], dtype=np.float64) for q in range(params.depth)]
    v = np.repeat(ws[-1], h, axis=0)
    beta = np.full(h, bs[-1][0])
    for q in range(params.depth - 1, -1, -1):
        g = v * masks[q]
        beta += g @ bs[q]
        v = g @ ws[q]
    sig = np.concatenate([v, beta[:, None]], axis=1)
    mag = np.abs(v)
    has = mag > zero_threshold
    first = np.argmax(has, axis=1)
    scale = np.where(has.any(axis=1), mag[np.arange(h), first], 1.0)
    return sig / scale[:, None]


def signature_filter(candidate: "ExtractionCandidate | ModelParameters", recovered: Sequence[RecoveredTuple],
                     cfg: FilterConfig, compare: CompareConfig | None = None, patterns=None) -> bool | None:
    """Check the recovered tuples against the candidate's normalized signature.

    Only tuples seen more than once (``N_valid`` of them) are checked; the
    candidate passes when at least ``adaptive_fraction * N_valid`` of them
    match some signature element.  Returns ``None`` (unfiltered) when the
    pattern count exceeds ``cfg.pattern_budget``.
    """
    params = candidate.params if isinstance(candidate, ExtractionCandidate) else candidate
    compare = compare or cfg.compare or default_compare_config(list(recovered))
    if patterns is None:
        patterns = enumerate_patterns(params.arch, cfg.pattern_budget)
    if patterns is None:
        return None
    valid = [t for t in recovered if t.occurrence_count > 1]
    if not valid:
        return True
    sig = signature_matrix(params, patterns)
    rec = np.stack([t.vector() for t in valid])
    matched = (mismatch_matrix(rec, sig, compare.phi) <= compare.d_phi).any(axis=1)
    return int(matched.sum()) >= cfg.adaptive_fraction * len(valid)


def signs_consistent(params: ModelParameters, sign_guesses: Sequence[int], plans: Sequence[PatternPlan],
                     zero_threshold: float = ZERO_THRESHOLD) -> bool:
    """Recompute ``G_j^(i)`` under each hidden slot's plan and compare with the guesses."""
    for plan in plans:
        if plan.layer > params.depth:
            continue
        coeffs, _ = _bias_row(params.weights, plan.pattern)
        g = coeffs[plan.layer - 1][plan.neuron]
        if abs(g) <= zero_threshold or np.sign(g) != sign_guesses[plan.layer - 1]:
            return False
    return True


def sign_filter(candidate: "ExtractionCandidate") -> bool:
    """:func:`signs_consistent` on a candidate's own parameters, guesses and plans."""
    return signs_consistent(candidate.params, candidate.sign_guesses, candidate.plans)


def _uniform_inputs(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    return rng.uniform(-radius, radius, size=(n, dim))


def pmr(model_a: ModelParameters, model_b: ModelParameters, sample_count: int, rng_seed: int = 0,
        domain_radius: float = 1.0, chunk: int = 20_000) -> float:
    """Fraction of uniform random inputs on which the two models agree on the hard label."""
    if model_a.arch.input_dim != model_b.arch.input_dim:
        raise ValueError("models take inputs of different dimension")
    rng = np.random.default_rng(rng_seed)
    agree = 0
    done = 0
    while done < sample_count:
        n = min(chunk, sample_count - done)
        xs = _uniform_inputs(rng, n, model_a.arch.input_dim, domain_radius)
        agree += int(np.count_nonzero(hard_label_of(forward_batch(model_a, xs))
                                      == hard_label_of(forward_batch(model_b, xs))))
        done += n
    return agree / sample_count


def pmr_on_labels(model: ModelParameters, xs: np.ndarray, labels: np.ndarray) -> float:
    if len(xs) == 0:
        return 1.0
    return float(np.mean(hard_label_of(forward_batch(model, xs)) == labels))


# -- the attack --------------------------------------------------------------

@dataclass
class ExtractionCandidate:
    index: int
    slots: tuple[int, ...]
    sign_guesses: tuple[int, ...]
    plans: tuple[PatternPlan, ...]
    params: ModelParameters | None = None
    signature_pass: bool | None = None
    sign_pass: bool | None = None
    pmr: float | None = None
    verdict: str = "pending"


@dataclass(frozen=True)
class AttackConfig:
    search: SearchConfig = field(default_factory=SearchConfig)
    recovery: RecoveryConfig | None = None  # None: derived from search and depth
    filters: FilterConfig = field(default_factory=FilterConfig)
    points_multiplier: int = 8
    relaxed: bool = False
    max_candidates: int | None = None
    early_exit: bool = False
    threads: int = 1
    max_residual: float | None = None

    def recovery_config(self, depth: int) -> RecoveryConfig:
        if self.recovery is not None:
            return self.recovery
        if depth == 0:
            # globally affine: wide strides cost nothing and buy precision
            r = self.search.domain_radius
            return RecoveryConfig(probe_stride=2.0**10 * r, epsilon=self.search.epsilon,
                                  zero_threshold=2.0**40 * r)
        return RecoveryConfig(probe_stride=2.0**-10 * self.search.domain_radius,
                              epsilon=self.search.epsilon)


@dataclass
class AttackResult:
    status: str  # "success" | "no-survivor"
    best: ExtractionCandidate | None
    report: dict
    tuples: list[RecoveredTuple]
    points: list[BoundaryPoint]
    survivors: list[ExtractionCandidate] = field(default_factory=list)


def choose_anchor(tuples: Sequence[RecoveredTuple], zero_threshold: float = ZERO_THRESHOLD) -> int:
    """First input coordinate on which every tuple has a significant coefficient.

    Falls back to the coordinate supported by the most tuples.
    """
    g = np.stack([np.where(np.isfinite(t.gamma), t.gamma, 0.0) for t in tuples])
    support = (np.abs(g) > zero_threshold).sum(axis=0)
    full = np.flatnonzero(support == len(tuples))
    return int(full[0]) if full.size else int(np.argmax(support))


class CandidateEnumerator:
    """Enumerate and evaluate candidates for a fixed list of deduplicated tuples.

    Tuples are taken in the given order (callers sort by occurrence count),
    layer slots are filled with combinations in lexicographic order, then
    sign guesses ``+1`` before ``-1`` per layer, then downstream variants.
    """

    def __init__(self, arch: Architecture, tuples: Sequence[RecoveredTuple], anchor: int,
                 filters: FilterConfig, compare: CompareConfig, relaxed: bool = False,
                 max_residual: float | None = None):
        self.arch = arch
        self.tuples = list(tuples)
        self.anchor = anchor
        self.filters = filters
        self.compare = compare
        self.relaxed = relaxed
        self.max_residual = max_residual
        self.patterns = enumerate_patterns(arch, filters.pattern_budget)
        self.counts = {"enumerated": 0, "degenerate_weights": 0, "degenerate_biases": 0,
                       "signature_pass": 0, "signature_unfiltered": 0, "sign_pass": 0}
        self._cache: dict = {}

    def _layer(self, layer: int, combo: tuple[int, ...], prefix_key, state: ExtractionState, sign: int):
        key = (layer, combo, sign, prefix_key)
        if key not in self._cache:
            ts = [self.tuples[i] for i in combo]
            try:
                if layer == 1:
                    w = recover_layer1(ts, sign, self.anchor)
                else:
                    w = recover_layer_weights(ts, state, sign, self.anchor, self.max_residual)
                self._cache[key] = state.push(w)
            except DegenerateSystemError:
                self._cache[key] = None
        return self._cache[key], key

    def weight_sets(self) -> Iterator[tuple[tuple[int, ...], tuple[int, ...], list[np.ndarray]]]:
        """Yield ``(slots, signs, weights)`` for every non-degenerate weight assignment."""
        arch = self.arch
        n_t = len(self.tuples)
        widths = list(arch.hidden) + [1]

        def rec(layer, used, slots, signs, state, key):
            if layer > arch.depth + 1:
                yield tuple(slots), tuple(signs), state.weights
                return
            avail = [i for i in range(n_t) if i not in used]
            width = widths[layer - 1]
            sign_opts = (1, -1) if layer <= arch.depth else (1,)
            for combo in itertools.combinations(avail, width):
                for s in sign_opts:
                    nxt, nkey = self._layer(layer, combo, key, state, s)
                    if nxt is None:
                        self.counts["degenerate_weights"] += 1
                        continue
                    yield from rec(layer + 1, used | set(combo), slots + list(combo),
                                   signs + ([s] if layer <= arch.depth else []), nxt, nkey)

        yield from rec(1, set(), [], [], ExtractionState.initial(arch.input_dim), None)

    def plan_sets(self) -> list[tuple[PatternPlan, ...]]:
        return plan_sets(self.arch, self.relaxed)

    def candidates(self) -> Iterator[tuple[tuple[int, ...], tuple[int, ...], list[np.ndarray], tuple]]:
        options = self.plan_sets()
        for slots, signs, weights in self.weight_sets():
            for plans in options:
                yield slots, signs, weights, plans

    def evaluate(self, index: int, slots, signs, weights, plans) -> ExtractionCandidate:
        cand = ExtractionCandidate(index=index, slots=slots, sign_guesses=signs, plans=plans)
        points = [self.tuples[i].point for i in slots]
        try:
            biases = recover_biases(points, [p.pattern for p in plans], weights)
        except DegenerateSystemError:
            cand.verdict = "degenerate"
            return cand
        params = ModelParameters(weights, biases)
        cand.params = params
        sig = signature_filter(params, self.tuples, self.filters, self.compare, self.patterns)
        cand.signature_pass = sig
        if sig is False:
            cand.verdict = "signature"
            return cand
        cand.sign_pass = sign_filter(cand)
        cand.verdict = "survivor" if cand.sign_pass else "sign"
        return cand


def config_record(config: AttackConfig, rcfg: RecoveryConfig) -> dict:
    """Plain-data copy of the settings a run used, for reports and manifests."""
    f = config.filters
    return {
        "search": asdict(config.search),
        "recovery": asdict(rcfg),
        "filters": {"phi": None if f.compare is None else f.compare.phi,
                    "d_phi": None if f.compare is None else f.compare.d_phi,
                    "adaptive_fraction": f.adaptive_fraction, "pmr_samples": f.pmr_samples,
                    "pattern_budget": f.pattern_budget},
        "points_multiplier": config.points_multiplier,
        "relaxed": config.relaxed,
        "max_candidates": config.max_candidates,
        "early_exit": config.early_exit,
        "threads": config.threads,
        "max_residual": config.max_residual,
    }


def run_attack(oracle: HardLabelOracle, arch: Architecture | str, config: AttackConfig | None = None,
               progress=None) -> AttackResult:
    """Collect boundary points, recover tuples, enumerate candidates and pick the best by PMR.

    Raises :class:`InsufficientDataError` when fewer than ``n + 1`` usable
    tuples are recovered.
    """
    if isinstance(arch, str):
        arch = Architecture.parse(arch)
    config = config or AttackConfig()
    t0 = time.perf_counter()
    n = arch.neuron_count
    q0 = oracle.query_count

    # boundary points, then one deduplicated tuple per activation region
    m = config.points_multiplier * (1 << n)
    points = collect_boundary_points(oracle, m, config.search)
    q_collect = oracle.query_count - q0
    rcfg = config.recovery_config(arch.depth)
    raw, failures = recover_all(oracle, points, rcfg)
    compare = config.filters.compare or default_compare_config(raw)
    tuples = dedup_tuples(raw, compare)
    tuples = [t for t in tuples if np.any(np.abs(np.nan_to_num(t.gamma)) > ZERO_THRESHOLD)]
    tuples.sort(key=lambda t: -t.occurrence_count)
    q_recover = oracle.query_count - q0 - q_collect
    t_queries = time.perf_counter()

    report = {
        "architecture": str(arch),
        "epsilon": config.search.epsilon,
        "config": config_record(config, rcfg),
        "points_requested": m,
        "points_collected": len(points),
        "recovery_failures": len(failures),
        "tuples_recovered": len(raw),
        "tuples_after_dedup": len(tuples),
        "n_valid": sum(1 for t in tuples if t.occurrence_count > 1),
        "compare_phi": compare.phi,
        "compare_d_phi": compare.d_phi,
        "queries_collect": q_collect,
        "queries_recover": q_recover,
    }
    if len(tuples) < n + 1:
        raise InsufficientDataError(f"need {n + 1} distinct tuples, recovered {len(tuples)} "
                                    f"(short by {n + 1 - len(tuples)})")
    anchor = choose_anchor(tuples)
    usable = [t for t in tuples if abs(np.nan_to_num(t.gamma[anchor])) > ZERO_THRESHOLD
              and not t.partial]
    report["anchor"] = anchor
    report["tuples_usable"] = len(usable)
    if len(usable) < n + 1:
        raise InsufficientDataError(f"need {n + 1} usable tuples, have {len(usable)} "
                                    f"(short by {n + 1 - len(usable)})")

    # labelled inputs for PMR ranking: search starts plus fresh samples; the
    # bracketing points sit within epsilon of the boundary and carry no signal
    xs = [np.stack([bp.start for bp in points])] if points else []
    ys = [np.array([bp.label_inside for bp in points], dtype=np.int8)] if points else []
    rng = np.random.default_rng(config.search.rng_seed + 1)
    n_fresh = config.filters.pmr_samples
    if n_fresh is None:
        # grows with the collection cost instead of dominating it on small inputs
        n_fresh = max(1000, m * arch.input_dim)
    fresh = _uniform_inputs(rng, n_fresh, arch.input_dim, config.search.domain_radius)
    ys.append(oracle.query_batch(fresh))
    xs.append(fresh)
    pmr_x = np.concatenate(xs) if xs else np.zeros((0, arch.input_dim))
    pmr_y = np.concatenate(ys) if ys else np.zeros(0, dtype=np.int8)
    report["queries_pmr"] = len(fresh)

    enum = CandidateEnumerator(arch, usable, anchor, config.filters, compare, config.relaxed,
                               config.max_residual)
    survivors: list[ExtractionCandidate] = []
    best = None
    cap = config.max_candidates
    gen = enum.candidates()
    index = 0
    stop = False
    batch = max(1, config.threads) * 64
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        while not stop:
            specs = []
            for spec in gen:
                if cap is not None and index >= cap:
                    break
                specs.append((index, *spec))
                index += 1
                if len(specs) >= batch:
                    break
            if not specs:
                break
            if pool is not None:
                results = list(pool.map(lambda s: enum.evaluate(*s), specs))
            else:
                results = [enum.evaluate(*s) for s in specs]
            for cand in results:
                enum.counts["enumerated"] += 1
                if cand.verdict == "degenerate":
                    enum.counts["degenerate_biases"] += 1
                    continue
                if cand.signature_pass is None:
                    enum.counts["signature_unfiltered"] += 1
                if cand.signature_pass is not False:
                    enum.counts["signature_pass"] += 1
                if cand.verdict != "survivor":
                    continue
                enum.counts["sign_pass"] += 1
                cand.pmr = pmr_on_labels(cand.params, pmr_x, pmr_y)
                survivors.append(cand)
                if best is None or cand.pmr > best.pmr:
                    best = cand
                if config.early_exit and cand.pmr == 1.0:
                    stop = True
                    break
            if progress is not None:
                progress(index, len(survivors))
    finally:
        if pool is not None:
            pool.shutdown()

    report.update({
        "candidates": dict(enum.counts),
        "survivors": len(survivors),
        "best_pmr": None if best is None else best.pmr,
        "best_index": None if best is None else best.index,
        "query_count": oracle.query_count - q0,
        "time_queries_s": t_queries - t0,
        "time_total_s": time.perf_counter() - t0,
    })
    status = "success" if best is not None else "no-survivor"
    report["status"] = status
    return AttackResult(status=status, best=best, report=report, tuples=usable, points=points,
                        survivors=survivors)
