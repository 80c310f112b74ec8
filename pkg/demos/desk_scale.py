"""Reproduce a full-size untrained run and print its summary row.

Picks the first victim seed whose required activation patterns all reach the
decision boundary (a white-box screen), runs the attack and verifies it.
Defaults finish in well under a minute on one core.

    python3 demos/desk_scale.py --arch 512-2-1 --precision 1e-14
    python3 demos/desk_scale.py --arch 32-2-2-1 --relaxed
"""
import argparse
import math

from hardlabel import AttackConfig, HardLabelOracle, ModelParameters, SearchConfig, run_attack, verify
from hardlabel.cli import AttackBudget, table_row
from hardlabel.model import Architecture
from hardlabel.verification import find_extractable_seed

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--arch", default="512-2-1")
parser.add_argument("--precision", type=float, default=1e-12)
parser.add_argument("--relaxed", action="store_true")
parser.add_argument("--pmr-samples", type=int, default=1_000_000)
args = parser.parse_args()

arch = Architecture.parse(args.arch)
search = SearchConfig(epsilon=args.precision)
seed = find_extractable_seed(arch, relaxed=args.relaxed, search=search)
victim = ModelParameters.random(arch, seed)
budget = AttackBudget(arch, args.precision)
print(f"{arch}: victim seed {seed}, forecast 2^{math.log2(budget.predicted_queries):.2f} queries")

oracle = HardLabelOracle(victim)
result = run_attack(oracle, arch, AttackConfig(search=search, relaxed=args.relaxed))
print(f"status {result.status} in {result.report['time_total_s']:.1f} s, candidates {result.report['candidates']}")
eq = verify(victim, result.best.params, pmr_samples=args.pmr_samples, query_count=oracle.query_count)
print("architecture | parameters | epsilon | PMR | queries | (eps,0) | max|theta-theta^|")
print(table_row(arch, args.precision, eq))
