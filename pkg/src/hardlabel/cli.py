"""Command line: ``python -m hardlabel {gen,attack,verify}``.

``gen`` writes a random untrained victim, ``attack`` extracts it through the
metered in-process hard-label oracle and ``verify`` compares a victim with an
extracted model.  Exit status of ``attack``: 0 on success,
:data:`EXIT_INSUFFICIENT_DATA` when too few tuples were recovered,
:data:`EXIT_NO_SURVIVOR` when no candidate survived the filters and
:data:`EXIT_UNSUPPORTED` for architectures outside the attack's scope.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import textio
from .boundary import SearchConfig
from .extraction import (AttackConfig, FilterConfig, InsufficientDataError, count_max_patterns,
                         run_attack)
from .linalg import CompareConfig
from .model import (Architecture, HardLabelOracle, ModelParameters, ShapeError,
                    UnsupportedArchitectureError, file_sha256, load_model, save_model)
from .recovery import write_transcript
from .verification import find_extractable_seed, verify

EXIT_SUCCESS = 0
EXIT_USAGE = 2
EXIT_INSUFFICIENT_DATA = 3
EXIT_NO_SURVIVOR = 4
EXIT_UNSUPPORTED = 5


@dataclass(frozen=True)
class AttackBudget:
    """Forecast of the attack's cost before it runs.

    ``c_eps = ceil(log2(2 R / epsilon)) + 4`` queries per coordinate search
    and ``c_n`` boundary points per possible pattern.
    """

    arch: Architecture
    epsilon: float = 1e-12
    domain_radius: float = 1.0
    c_n: int = 8

    @property
    def c_eps(self) -> int:
        return math.ceil(math.log2(2 * self.domain_radius / self.epsilon)) + 4

    @property
    def predicted_queries(self) -> int:
        return self.c_eps * self.c_n * (1 << self.arch.neuron_count) * self.arch.input_dim

    def predicted_candidates(self, tuples: int | None = None) -> int:
        """Assignments times sign guesses for ``tuples`` distinct tuples.

        Without a count, the smaller of the point budget and the pattern bound
        is used, which is an upper estimate.
        """
        arch = self.arch
        if tuples is None:
            tuples = min(self.c_n << arch.neuron_count, count_max_patterns(arch))
        total, left = 1, tuples
        for d in list(arch.hidden) + [1]:
            if left < d:
                return 0
            total *= math.comb(left, d)
            left -= d
        return total << arch.depth

    def to_dict(self) -> dict:
        return {"c_n": self.c_n, "c_eps": self.c_eps, "predicted_queries": self.predicted_queries,
                "predicted_candidates": self.predicted_candidates()}


@dataclass
class RunManifest:
    seed: int
    configs: dict
    victim_sha256: str
    outputs: dict[str, str] = field(default_factory=dict)
    started: str = ""
    finished: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _add_attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for boundary-point sampling")
    p.add_argument("--precision", type=float, default=1e-12, help="bisection precision epsilon")
    p.add_argument("--points-multiplier", type=int, default=8, help="c_n: boundary points per pattern")
    p.add_argument("--phi", type=float, default=None, help="per-coordinate comparison threshold")
    p.add_argument("--d-phi", type=int, default=None, help="tolerated mismatching coordinates")
    p.add_argument("--pmr-samples", type=int, default=None,
                   help="fresh oracle samples for ranking (default: max(1000, points * d_0))")
    p.add_argument("--domain-radius", type=float, default=1.0)
    p.add_argument("--max-candidates", type=int, default=None)
    p.add_argument("--early-exit", action="store_true", help="stop at the first survivor with PMR 1")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--relaxed", action="store_true",
                   help="let later layers take any non-empty state when recovering a layer")
    p.add_argument("--verify-samples", type=int, default=1_000_000,
                   help="samples for the post-attack PMR against the victim (0 skips verification)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardlabel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a random untrained victim model")
    g.add_argument("--arch", required=True, help='architecture such as "512-2-1"')
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--low", type=float, default=-1.0, help="lower end of the uniform parameter range")
    g.add_argument("--high", type=float, default=1.0, help="upper end of the uniform parameter range")
    g.add_argument("--extractable", action="store_true",
                   help="advance the seed until every plan pattern reaches the decision boundary")
    g.add_argument("--relaxed", action="store_true", help="screen against the relaxed plans")
    g.add_argument("--precision", type=float, default=1e-12)
    g.add_argument("--domain-radius", type=float, default=1.0)
    g.add_argument("--points-multiplier", type=int, default=8)
    g.add_argument("--output", required=True, type=Path)

    a = sub.add_parser("attack", help="extract a victim through its hard-label oracle")
    a.add_argument("victim", type=Path)
    a.add_argument("--arch", help="architecture to assume (default: the victim file's)")
    _add_attack_flags(a)
    a.add_argument("--output", required=True, type=Path, help="directory for model, transcript and report")

    v = sub.add_parser("verify", help="compare an extracted model with its victim")
    v.add_argument("victim", type=Path)
    v.add_argument("extracted", type=Path)
    v.add_argument("--report", type=Path, help="attack report supplying epsilon and the query count")
    v.add_argument("--pmr-samples", type=int, default=1_000_000)
    v.add_argument("--domain-radius", type=float, default=1.0)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output", type=Path, help="write the equivalence report here")
    return parser


def cmd_gen(args) -> int:
    arch = Architecture.parse(args.arch)
    seed = args.seed
    if args.extractable:
        search = SearchConfig(epsilon=args.precision, domain_radius=args.domain_radius)
        seed = find_extractable_seed(arch, seed, relaxed=args.relaxed, search=search,
                                     points_multiplier=args.points_multiplier, low=args.low, high=args.high)
    victim = ModelParameters.random(arch, seed, args.low, args.high)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    save_model(victim, args.output)
    budget = AttackBudget(arch, args.precision, args.domain_radius, args.points_multiplier)
    print(f"wrote {args.output}: {arch}, seed {seed}, {arch.parameter_count} parameters, "
          f"n = {arch.neuron_count}")
    print(f"forecast: {budget.predicted_queries} queries (2^{math.log2(budget.predicted_queries):.2f}), "
          f"about {budget.predicted_candidates()} candidates")
    return EXIT_SUCCESS


def _attack_config(args) -> AttackConfig:
    compare = None
    if args.phi is not None or args.d_phi is not None:
        compare = CompareConfig(phi=args.phi if args.phi is not None else 1e-6,
                                d_phi=args.d_phi if args.d_phi is not None else 0)
    search = SearchConfig(epsilon=args.precision, domain_radius=args.domain_radius, rng_seed=args.seed)
    return AttackConfig(search=search, filters=FilterConfig(compare=compare, pmr_samples=args.pmr_samples),
                        points_multiplier=args.points_multiplier, relaxed=args.relaxed,
                        max_candidates=args.max_candidates, early_exit=args.early_exit, threads=args.threads)


def cmd_attack(args) -> int:
    started = _now()
    victim = load_model(args.victim)
    arch = Architecture.parse(args.arch) if args.arch else victim.arch
    if arch != victim.arch:
        print(f"error: assumed architecture {arch} does not match the oracle's input/output", file=sys.stderr)
        return EXIT_UNSUPPORTED
    config = _attack_config(args)
    budget = AttackBudget(arch, args.precision, args.domain_radius, args.points_multiplier)
    oracle = HardLabelOracle(victim)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": str(out / "report.json"), "manifest": str(out / "manifest.json")}
    try:
        result = run_attack(oracle, arch, config)
    except InsufficientDataError as exc:
        report = {"status": "insufficient-data", "error": str(exc), "query_count": oracle.query_count,
                  "budget": budget.to_dict()}
        textio.write_json(paths["report"], report)
        print(f"insufficient data: {exc}", file=sys.stderr)
        code = EXIT_INSUFFICIENT_DATA
    else:
        report = dict(result.report)
        report["budget"] = budget.to_dict()
        paths["transcript"] = str(out / "transcript.jsonl")
        write_transcript(paths["transcript"], result.tuples)
        if result.best is not None:
            paths["model"] = str(out / "extracted.json")
            save_model(result.best.params, paths["model"])
            report["best"] = {"index": result.best.index, "slots": list(result.best.slots),
                              "sign_guesses": list(result.best.sign_guesses),
                              "plans": [list(p.codes()) for p in result.best.plans]}
            if args.verify_samples > 0:
                eq = verify(victim, result.best.params, pmr_samples=args.verify_samples,
                            domain_radius=args.domain_radius, rng_seed=args.seed,
                            query_count=report["query_count"])
                report["equivalence"] = eq.to_dict()
            code = EXIT_SUCCESS
        else:
            code = EXIT_NO_SURVIVOR
        textio.write_json(paths["report"], report)
        _print_summary(report)
    manifest = RunManifest(seed=args.seed, configs=report.get("config", {}),
                           victim_sha256=file_sha256(args.victim), outputs=paths,
                           started=started, finished=_now())
    textio.write_json(paths["manifest"], manifest.to_dict())
    return code


def _print_summary(report: dict) -> None:
    q = report["query_count"]
    print(f"{report['architecture']}  eps={report['epsilon']:.0e}  status={report['status']}")
    print(f"  points {report['points_collected']}/{report['points_requested']}, "
          f"tuples {report['tuples_after_dedup']} (valid {report['n_valid']}), "
          f"queries {q} (2^{math.log2(max(q, 1)):.2f})")
    print(f"  candidates {report['candidates']}, best PMR {report['best_pmr']}")
    eq = report.get("equivalence")
    if eq:
        print(f"  verify: PMR {eq['pmr']}, (eps,0) 2^{eq['log2_epsilon_bound']}, "
              f"max|theta-theta^| 2^{eq['log2_max_param_error']}")


def table_row(arch: Architecture, epsilon: float | None, eq) -> str:
    def bits(v):
        return "0" if v == 0 else f"2^{math.log2(v):.2f}"

    eps = "-" if epsilon is None else f"{epsilon:.0e}"
    q = "-" if eq.query_count is None else bits(eq.query_count)
    return (f"{arch} | {arch.parameter_count} | {eps} | {100 * eq.pmr:.2f}% | {q} | "
            f"{bits(eq.epsilon_bound)} | {bits(eq.max_param_error)}")


def cmd_verify(args) -> int:
    victim = load_model(args.victim)
    extracted = load_model(args.extracted)
    if victim.arch != extracted.arch:
        print(f"error: architecture mismatch {victim.arch} vs {extracted.arch}", file=sys.stderr)
        return EXIT_USAGE
    epsilon = queries = None
    if args.report:
        rec = textio.read_json(args.report)
        epsilon, queries = rec.get("epsilon"), rec.get("query_count")
    eq = verify(victim, extracted, pmr_samples=args.pmr_samples, domain_radius=args.domain_radius,
                rng_seed=args.seed, query_count=queries)
    print("architecture | parameters | epsilon | PMR | queries | (eps,0) | max|theta-theta^|")
    print(table_row(victim.arch, epsilon, eq))
    print(f"scale c = {eq.scale_c!r} (expected {eq.expected_scale!r}, spread {eq.scale_spread:.3g})")
    if args.output:
        textio.write_json(args.output, eq.to_dict())
    return EXIT_SUCCESS


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"gen": cmd_gen, "attack": cmd_attack, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except UnsupportedArchitectureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
