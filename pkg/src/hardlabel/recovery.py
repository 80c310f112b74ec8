"""Recovering the local affine map at a decision boundary point.

Around a boundary point the network is a single affine function
``gamma @ x + beta`` (as long as no neuron changes state), so it can be read
off with hard labels exactly as one would extract a linear classifier:

* probe ``x0 +/- s e_i`` to learn the sign of every coefficient,
* step off the boundary along the anchor axis, then walk back to the
  boundary along each axis ``e_i``; the return distances are inversely
  proportional to ``|gamma_i|``,
* the bias follows from ``beta = -gamma @ x`` for a point on the boundary.

``x0`` is always the label-0 side of the bracket, so a zero coefficient shows
up as label 0 on both sign probes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import textio
from .boundary import BoundaryPoint, SearchConfig, search_boundaries
from .linalg import CompareConfig, mismatch_matrix


class InvalidPointError(ValueError):
    """The point does not behave like a boundary point (or the pattern changed under probing)."""


@dataclass(frozen=True)
class RecoveryConfig:
    """Stride settings for one affine recovery.

    ``probe_stride`` is both the sign-probe stride and the step taken off the
    boundary along the anchor axis; ``zero_threshold`` bounds the return
    stride, beyond which a coordinate is reported unrecovered.
    """

    probe_stride: float = 2.0**-10
    epsilon: float = 1e-12
    zero_threshold: float = 1e3

    def __post_init__(self):
        if not self.probe_stride > 0:
            raise ValueError("probe_stride must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.zero_threshold > self.probe_stride:
            raise ValueError("zero_threshold must exceed probe_stride")


@dataclass(eq=False)
class RecoveredTuple:
    gamma: np.ndarray
    beta: float
    anchor_index: int
    occurrence_count: int = 1
    source_points: list[int] = field(default_factory=list)
    valid: np.ndarray | None = None
    point: np.ndarray | None = None

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if self.valid is None:
            self.valid = np.isfinite(self.gamma)

    @property
    def partial(self) -> bool:
        return not bool(np.all(self.valid))

    def vector(self) -> np.ndarray:
        """``gamma`` with ``beta`` appended, the form compared during filtering."""
        return np.append(self.gamma, self.beta)

    def reanchored(self, index: int) -> tuple[np.ndarray, float]:
        """``(gamma, beta)`` rescaled so that ``|gamma[index]| == 1``."""
        scale = abs(self.gamma[index])
        return self.gamma / scale, self.beta / scale


def recover_signs(oracle, bp: BoundaryPoint, cfg: RecoveryConfig) -> np.ndarray:
    """Sign of every coefficient of the local affine map (``2 * d_0`` queries)."""
    signs, _ = _probe_signs(oracle, bp.negative_side, cfg.probe_stride)
    return signs


def _probe_signs(oracle, x0: np.ndarray, stride: float):
    d = x0.shape[0]
    eye = np.eye(d) * stride
    labels = oracle.query_batch(np.concatenate([x0 + eye, x0 - eye]))
    plus, minus = labels[:d].astype(bool), labels[d:].astype(bool)
    if np.any(plus & minus):
        bad = np.flatnonzero(plus & minus).tolist()
        raise InvalidPointError(f"both sign probes positive on axes {bad[:5]}")
    return plus.astype(np.int8) - minus.astype(np.int8), labels


def recover_tuple(oracle, bp: BoundaryPoint, signs, cfg: RecoveryConfig) -> RecoveredTuple:
    """Recover the normalized affine tuple at ``bp`` given the coefficient signs.

    The anchor is the first axis with a non-zero sign.  From ``x0`` we step
    ``probe_stride`` along the anchor so the label becomes 1, then search back
    to the boundary along every non-zero axis, the anchor included.  With
    ``t_i`` the return distance along ``e_i``, ``|gamma_i| / |gamma_a| =
    t_a / t_i``; using the anchor's own return distance cancels the residual
    offset of ``x0`` from the boundary.
    """
    signs = np.asarray(signs, dtype=np.int8)
    nz = np.flatnonzero(signs)
    if nz.size == 0:
        raise ValueError("at least one non-zero sign is required")
    x0 = bp.negative_side
    d = x0.shape[0]
    a = int(nz[0])
    s_a = cfg.probe_stride
    x1 = x0.copy()
    x1[a] += signs[a] * s_a
    if oracle(x1) != 1:
        raise InvalidPointError("stepping off the boundary along the anchor did not flip the label")

    dirs = np.zeros((nz.size, d))
    dirs[np.arange(nz.size), nz] = -signs[nz]
    starts = np.broadcast_to(x1, dirs.shape)
    max_exp = max(1, int(np.ceil(np.log2(cfg.zero_threshold / s_a))))
    scfg = SearchConfig(epsilon=cfg.epsilon, initial_stride=s_a, max_expansions=max_exp)
    found = search_boundaries(oracle, starts, dirs, scfg, two_sided=False,
                              start_labels=np.ones(nz.size, dtype=np.int8))

    t = np.full(d, np.nan)
    for idx, res in zip(nz, found):
        if res is not None:
            t[idx] = 0.5 * (res.s_slow + res.s_fast)
    if not np.isfinite(t[a]):
        raise InvalidPointError("could not return to the boundary along the anchor axis")

    gamma = np.zeros(d)
    gamma[nz] = signs[nz] * (t[a] / t[nz])
    gamma[a] = float(signs[a])
    valid = np.isfinite(gamma)
    # x1 - t_a * sign_a * e_a lies on the boundary (to within epsilon)
    on_boundary = x1.copy()
    on_boundary[a] -= signs[a] * t[a]
    beta = -float(np.dot(np.where(valid, gamma, 0.0), on_boundary))
    return RecoveredTuple(gamma=gamma, beta=beta, anchor_index=a, valid=valid, point=on_boundary)


def recover_at(oracle, bp: BoundaryPoint, cfg: RecoveryConfig) -> RecoveredTuple:
    """Signs followed by the tuple, sharing the anchor probe."""
    signs = recover_signs(oracle, bp, cfg)
    if not np.any(signs):
        raise InvalidPointError("no coefficient changes the label; point is not on the boundary")
    return recover_tuple(oracle, bp, signs, cfg)


def recover_all(oracle, points: list[BoundaryPoint], cfg: RecoveryConfig):
    """Recover a tuple per boundary point; failures are skipped and returned separately.

    Returns ``(tuples, failures)`` where ``failures`` lists ``(index, reason)``.
    """
    tuples, failures = [], []
    for i, bp in enumerate(points):
        try:
            rt = recover_at(oracle, bp, cfg)
        except InvalidPointError as exc:
            failures.append((i, str(exc)))
            continue
        rt.source_points = [i]
        tuples.append(rt)
    return tuples, failures


# -- duplicate filtering -----------------------------------------------------

def default_compare_config(tuples: list[RecoveredTuple], scale: float = 1e-6) -> CompareConfig:
    """``phi = scale * max(1, max |gamma|)`` and ``d_phi = max(1, d_0 // 100)``."""
    if not tuples:
        return CompareConfig(phi=scale, d_phi=1)
    d0 = tuples[0].gamma.shape[0]
    top = max(float(np.nanmax(np.abs(t.gamma))) for t in tuples)
    return CompareConfig(phi=scale * max(1.0, top), d_phi=max(1, d0 // 100))


def _rep_key(t: RecoveredTuple):
    norm = float(np.max(np.abs(t.point))) if t.point is not None else np.inf
    return (t.partial, norm)


def dedup_tuples(tuples: list[RecoveredTuple], cmp: CompareConfig, margin: float = 3.0) -> list[RecoveredTuple]:
    """Merge duplicate tuples and return one representative per cluster.

    First pass: greedy clustering where every coordinate must agree to within
    ``phi``.  Second pass: a cluster whose representative differs from a
    larger cluster's in at most ``cmp.d_phi`` coordinates, and which is at
    least ``margin`` times smaller, is treated as a partially wrong recovery
    and folded into the larger one.  The representative always comes from the
    largest exact sub-cluster, preferring fully recovered members and then
    the one closest to the origin (its ``beta`` carries the least rounding);
    ``occurrence_count`` is the total count.  Both passes repeat until nothing
    merges, since merged counts can enable further folds; output is ordered
    by count, largest first.  The result is a fixed point, so dedup is
    idempotent.
    """
    out = list(tuples)
    while True:
        merged = _dedup_pass(out, cmp, margin)
        if len(merged) == len(out) and out:
            return merged
        if not merged:
            return merged
        out = merged


def _dedup_pass(tuples: list[RecoveredTuple], cmp: CompareConfig, margin: float) -> list[RecoveredTuple]:
    if not tuples:
        return []
    vecs = np.stack([t.vector() for t in tuples])
    counts = np.array([t.occurrence_count for t in tuples])

    clusters: list[list[int]] = []
    reps: list[int] = []
    for i in range(len(tuples)):
        for c, r in zip(clusters, reps):
            if not np.any(~(np.abs(vecs[i] - vecs[r]) < cmp.phi)):
                c.append(i)
                break
        else:
            clusters.append([i])
            reps.append(i)

    sizes = [int(counts[c].sum()) for c in clusters]
    order = sorted(range(len(clusters)), key=lambda c: (-sizes[c], c))
    rep_vecs = vecs[[reps[c] for c in order]]
    mism = mismatch_matrix(rep_vecs, rep_vecs, cmp.phi)
    owner = {}
    kept: list[int] = []
    for pos, c in enumerate(order):
        target = None
        if cmp.d_phi > 0:
            for kpos, k in enumerate(kept):
                kp = order.index(k)
                if mism[pos, kp] <= cmp.d_phi and sizes[k] >= margin * sizes[c]:
                    target = k
                    break
        if target is None:
            kept.append(c)
            owner[c] = [c]
        else:
            owner[target].append(c)

    out = []
    for c in kept:
        members = [i for sub in owner[c] for i in clusters[sub]]
        rep = tuples[min(clusters[c], key=lambda i: _rep_key(tuples[i]))]
        sources = sorted({s for i in members for s in tuples[i].source_points})
        out.append(replace(rep, occurrence_count=int(counts[members].sum()), source_points=sources,
                           gamma=rep.gamma.copy(), valid=rep.valid.copy()))
    out.sort(key=lambda t: -t.occurrence_count)
    return out


# -- transcript --------------------------------------------------------------

def _tuple_record(t: RecoveredTuple) -> dict:
    return {
        "point": None if t.point is None else t.point,
        "gamma": t.gamma,
        "beta": float(t.beta),
        "anchor": t.anchor_index,
        "valid": [bool(v) for v in t.valid],
        "count": t.occurrence_count,
        "sources": list(t.source_points),
    }


def write_transcript(path, tuples: list[RecoveredTuple]) -> None:
    """One JSON record per line; numbers keep 17 significant digits."""
    with Path(path).open("w") as fh:
        for t in tuples:
            fh.write(textio.dumps(_tuple_record(t), indent=None) + "\n")


def read_transcript(path) -> list[RecoveredTuple]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        gamma = np.array([np.nan if v is None else v for v in rec["gamma"]], dtype=np.float64)
        point = None if rec["point"] is None else np.array(rec["point"], dtype=np.float64)
        out.append(RecoveredTuple(gamma=gamma, beta=float(rec["beta"]), anchor_index=int(rec["anchor"]),
                                  occurrence_count=int(rec["count"]), source_points=list(rec["sources"]),
                                  valid=np.array(rec["valid"], dtype=bool), point=point))
    return out
