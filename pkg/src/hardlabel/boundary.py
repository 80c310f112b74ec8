"""Locating decision boundary points with hard-label queries only.

A search walks from ``start`` along ``direction`` with exponentially growing
strides until the label flips, then bisects the bracketing strides
``(s_slow, s_fast)`` until they are closer than ``epsilon``.  ``s_slow``
always keeps the label of ``start``.

Many searches run in lockstep so each probe round is a single batched oracle
call; the per-search query count is the same as running them one by one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SearchConfig:
    epsilon: float = 1e-12
    initial_stride: float | None = None  # default 2**-6 * domain_radius
    max_expansions: int = 40
    domain_radius: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_expansions < 1:
            raise ValueError("max_expansions must be at least 1")
        if not self.domain_radius > 0:
            raise ValueError("domain_radius must be positive")
        if self.initial_stride is not None and not self.initial_stride > 0:
            raise ValueError("initial_stride must be positive")

    @property
    def stride0(self) -> float:
        return self.initial_stride if self.initial_stride is not None else 2.0**-6 * self.domain_radius


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    point: np.ndarray
    start: np.ndarray
    direction: np.ndarray
    s_slow: float
    s_fast: float
    label_inside: int
    queries: int = field(default=0, compare=False)

    @property
    def other_side(self) -> np.ndarray:
        """The bracketing point across the boundary, ``start + s_fast * direction``."""
        return self.start + self.s_fast * self.direction

    @property
    def negative_side(self) -> np.ndarray:
        """Whichever bracketing point has hard label 0."""
        return self.point if self.label_inside == 0 else self.other_side

    def labelled_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Inputs whose labels this search already learned: start, point, other side."""
        xs = np.stack([self.start, self.point, self.other_side])
        lab = self.label_inside
        return xs, np.array([lab, lab, 1 - lab], dtype=np.int8)

    def check(self, oracle, epsilon: float) -> bool:
        """Re-query the three defining inputs and test the bracket invariants (3 queries)."""
        labels = oracle.query_batch(np.stack([self.start, self.point, self.other_side]))
        return (abs(self.s_slow - self.s_fast) < epsilon
                and labels[0] == labels[1] == self.label_inside
                and labels[2] != labels[1])


def query_bound(cfg: SearchConfig, bracket: float) -> int:
    """Upper bound on queries for one two-sided search given its bracket width."""
    bisect = max(0, math.ceil(math.log2(bracket / cfg.epsilon))) if bracket > 0 else 0
    return 2 * (cfg.max_expansions + 1) + bisect + 2


def search_boundaries(oracle, starts, directions, cfg: SearchConfig, *, two_sided: bool = True,
                      initial_stride: float | None = None, start_labels=None) -> list[BoundaryPoint | None]:
    """Run one boundary search per row of ``starts``/``directions``.

    With ``two_sided`` the strides ``+s, -s, +2s, -2s, ...`` are probed;
    otherwise only the positive direction is.  ``start_labels`` may supply
    already known labels of the starts, saving one query per search.
    Searches whose label never flips within ``cfg.max_expansions`` doublings
    yield ``None``.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if starts.shape != dirs.shape:
        raise ValueError(f"starts {starts.shape} and directions {dirs.shape} differ in shape")
    if np.any(~np.any(dirs != 0, axis=1)):
        raise ValueError("direction must be non-zero")
    m = starts.shape[0]
    queries = np.zeros(m, dtype=np.int64)
    if start_labels is None:
        labels0 = oracle.query_batch(starts)
        queries += 1
    else:
        labels0 = np.asarray(start_labels, dtype=np.int8).reshape(m)

    stride = initial_stride if initial_stride is not None else cfg.stride0
    s_slow = np.zeros(m)
    s_fast = np.full(m, np.nan)
    found = np.zeros(m, dtype=bool)
    signs = (1.0, -1.0) if two_sided else (1.0,)
    for t in range(cfg.max_expansions + 1):
        s = stride * 2.0**t
        for sign in signs:
            idx = np.flatnonzero(~found)
            if idx.size == 0:
                break
            lab = oracle.query_batch(starts[idx] + (sign * s) * dirs[idx])
            queries[idx] += 1
            hit = idx[lab != labels0[idx]]
            found[hit] = True
            s_fast[hit] = sign * s
            s_slow[hit] = sign * s / 2 if t > 0 else 0.0
        if found.all():
            break

    active = found.copy()
    while True:
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        width = np.abs(s_fast[idx] - s_slow[idx])
        mid = 0.5 * (s_slow[idx] + s_fast[idx])
        done = (width < cfg.epsilon) | (mid == s_slow[idx]) | (mid == s_fast[idx])
        active[idx[done]] = False
        idx, mid = idx[~done], mid[~done]
        if idx.size == 0:
            break
        lab = oracle.query_batch(starts[idx] + mid[:, None] * dirs[idx])
        queries[idx] += 1
        same = lab == labels0[idx]
        s_slow[idx[same]] = mid[same]
        s_fast[idx[~same]] = mid[~same]

    out: list[BoundaryPoint | None] = []
    for i in range(m):
        if not found[i]:
            out.append(None)
            continue
        out.append(BoundaryPoint(
            point=starts[i] + s_slow[i] * dirs[i], start=starts[i].copy(), direction=dirs[i].copy(),
            s_slow=float(s_slow[i]), s_fast=float(s_fast[i]), label_inside=int(labels0[i]),
            queries=int(queries[i]),
        ))
    return out


def find_boundary(oracle, start, direction, cfg: SearchConfig) -> BoundaryPoint | None:
    """Single two-sided boundary search; ``None`` when no label flip is found."""
    return search_boundaries(oracle, np.asarray(start, dtype=np.float64)[None, :],
                             np.asarray(direction, dtype=np.float64)[None, :], cfg)[0]


def sample_starts_and_directions(rng: np.random.Generator, count: int, dim: int, radius: float):
    """Starts uniform in ``[-radius, radius]^dim``, directions uniform on the unit sphere."""
    starts = rng.uniform(-radius, radius, size=(count, dim))
    dirs = rng.standard_normal(size=(count, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return starts, dirs


def collect_boundary_points(oracle, count: int, cfg: SearchConfig) -> list[BoundaryPoint]:
    """Draw ``count`` random (start, direction) pairs and keep the successful searches.

    Deterministic given ``cfg.rng_seed``.  The number of failed searches is
    ``count - len(result)``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(cfg.rng_seed)
    starts, dirs = sample_starts_and_directions(rng, count, oracle.input_dim, cfg.domain_radius)
    return [bp for bp in search_boundaries(oracle, starts, dirs, cfg) if bp is not None]
