"""Extract an affine classifier ``1{a @ x + b > 0}`` from hard labels alone.

A network without hidden layers has one decision hyperplane, so one boundary
point and ``d_0`` return searches recover ``(a, b)`` up to a positive factor.

    python3 demos/zero_deep.py
"""
import numpy as np

from hardlabel import HardLabelOracle, ModelParameters, SearchConfig, find_boundary
from hardlabel.extraction import AttackConfig
from hardlabel.recovery import recover_at

rng = np.random.default_rng(0)
a = rng.uniform(-1, 1, 8)
a[3] = 0.0  # a weight the attack should report as exactly zero
b = 0.4
victim = ModelParameters([a[None, :]], [np.array([b])])
oracle = HardLabelOracle(victim)

search = SearchConfig(epsilon=1e-12)
bp = find_boundary(oracle, np.zeros(8), rng.normal(size=8), search)
print(f"boundary point after {bp.queries} queries, f(x) = {a @ bp.point + b:.2e}")

t = recover_at(oracle, bp, AttackConfig(search=search).recovery_config(depth=0))
w = abs(a[t.anchor_index])
print("recovered gamma:", np.array2string(t.gamma, precision=6))
print("true a / |a_0|: ", np.array2string(a / w, precision=6))
print(f"max coefficient error {np.max(np.abs(t.gamma - a / w)):.2e}, bias error {abs(t.beta - b / w):.2e}")
print(f"total queries {oracle.query_count}")
