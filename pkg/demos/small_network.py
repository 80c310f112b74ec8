"""Walk through every stage of the attack on a 2-2-1 network.

Shows the boundary points, the deduplicated affine tuples with their
occurrence counts, how many candidates each filter removed, and how the
winner compares with the victim's normal form.

    python3 demos/small_network.py
"""
import numpy as np

from hardlabel import HardLabelOracle, ModelParameters, run_attack, theoretical_parameters, verify

victim = ModelParameters([np.array([[1.0, 2.0], [3.0, -1.0]]), np.array([[2.0, 1.0]])],
                         [np.array([0.25, -0.5]), np.array([-1.0])])
oracle = HardLabelOracle(victim)
result = run_attack(oracle, victim.arch)
r = result.report

print(f"{r['points_collected']} of {r['points_requested']} searches hit the boundary")
print(f"{r['tuples_recovered']} tuples recovered, {r['tuples_after_dedup']} after dedup:")
for t in result.tuples:
    print(f"  gamma={np.array2string(t.gamma, precision=4)}  beta={t.beta:+.4f}  seen {t.occurrence_count}x")
print("candidates per stage:", r["candidates"])
print(f"best candidate #{result.best.index}, PMR on held-out labels {result.best.pmr}")

print("\nextracted parameters:")
for w, b in zip(result.best.params.weights, result.best.params.biases):
    print(np.array2string(w, precision=6), np.array2string(b, precision=6))
print("normal form of the victim:")
theo = theoretical_parameters(victim)
for w, b in zip(theo.weights, theo.biases):
    print(np.array2string(w, precision=6), np.array2string(b, precision=6))

eq = verify(victim, result.best.params, pmr_samples=100_000, query_count=oracle.query_count)
print(f"\nmax parameter error {eq.max_param_error:.2e}, output error bound {eq.epsilon_bound:.2e}, "
      f"scale c = {eq.scale_c:.6f}, queries {eq.query_count}")
