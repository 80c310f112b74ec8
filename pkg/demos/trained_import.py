"""Import a trained two-class classifier and attack it.

A trained ``d_0-2-2`` network (two logits) becomes a scalar-output victim
with output ``logit_1 - logit_0``, whose hard label is the predicted class.
The weights below stand in for ones exported from a training framework;
replace them with ``np.load`` of your own arrays (shapes ``(out, in)``).
The attack needs both hidden neurons' plan patterns on the decision
boundary, which for this shape means the two output-difference weights share
a sign opposite to the output-difference bias; these values satisfy that.

    python3 demos/trained_import.py
"""
import numpy as np

from hardlabel import HardLabelOracle, forward_batch, from_two_logits, run_attack, save_model, verify

rng = np.random.default_rng(3)
w1, b1 = rng.normal(scale=0.3, size=(2, 64)), rng.normal(scale=0.1, size=2)
w2, b2 = np.array([[-1.2, -0.7], [0.9, 1.1]]), np.array([0.5, -0.4])

victim = from_two_logits([w1, w2], [b1, b2])
save_model(victim, "trained_victim.json")
xs = rng.uniform(-1, 1, (10_000, 64))
argmax = np.argmax(np.maximum(xs @ w1.T + b1, 0) @ w2.T + b2, axis=1)
assert np.array_equal(argmax == 1, forward_batch(victim, xs) > 0)
print("wrote trained_victim.json; hard labels equal the classifier's argmax")

oracle = HardLabelOracle(victim)
result = run_attack(oracle, victim.arch)
if result.best is None:
    print("no candidate survived:", result.report["candidates"])
else:
    eq = verify(victim, result.best.params, pmr_samples=100_000, query_count=oracle.query_count)
    print(f"PMR {eq.pmr:.4f}, max parameter error {eq.max_param_error:.2e}, queries {eq.query_count}")
