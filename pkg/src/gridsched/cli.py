"""Command line front end.

Exit codes: 0 success, 2 usage error, 3 invalid input, 4 infeasible
scenario, 5 failure under ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from gridsched.engine import DynamicsConfig, EquilibriumResult, run_dynamics
from gridsched.metrics import summarize
from gridsched.model import InfeasibleScenarioError, PlayerId, ScenarioError, StrategyProfile
from gridsched.oracle import OracleCeilingError, brute_force, verify_profile
from gridsched.pricing import PIECEWISE_AFFINE, POWER_LAW, VIOLATED, Tariff, check_regularity, demand_range_for
from gridsched.scenario import (
    FLEXIBILITY_SLACK,
    HOMOGENEITY,
    TARIFF_THRESHOLD_FRACTIONS,
    GenerationSpec,
    generate,
    load,
    load_spec,
    save,
)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_STRICT = 0, 2, 3, 4, 5

SUMMARY_COLUMNS = [
    "scenario_label", "mode", "houses", "flexibility", "homogeneity", "ttf", "slope_mult", "seed",
    "social_cost_eur", "peak_kw", "jfi", "passes", "converged",
]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


@dataclass(frozen=True)
class ExperimentMatrix:
    cells: tuple[tuple[GenerationSpec, DynamicsConfig], ...]
    out_dir: Path

    def __post_init__(self):
        labels = [cell_label(s, c) for s, c in self.cells]
        if len(set(labels)) != len(labels):
            raise ValueError("experiment cells must have unique labels")


def cell_label(spec: GenerationSpec, config: DynamicsConfig) -> str:
    return f"{spec.label}-{config.mode.lower()}"


def summary_row(label, spec: GenerationSpec | None, n_houses: int, result: EquilibriumResult) -> list:
    scenario = result.final_profile.scenario
    m = summarize(result.final_profile, scenario.tariff)
    meta = [None] * 5 if spec is None else [
        spec.flexibility, spec.homogeneity, spec.tariff_threshold_fraction, spec.slope_multiplier, spec.seed,
    ]
    return [label, result.config.mode, n_houses, *meta, m.social_cost, m.peak_demand_kw, m.jain_index,
            result.passes_used, result.converged]


def write_result_files(out: Path, result: EquilibriumResult, suffix: str = ""):
    scenario = result.final_profile.scenario
    m = summarize(result.final_profile, scenario.tariff)
    _write_csv(out / f"profile{suffix}.csv", ["slot", "aggregate_kw"],
               [(t, v) for t, v in zip(scenario.grid.slots, m.aggregate_profile)])
    _write_csv(out / f"trace{suffix}.csv", ["step", "actor", "old_cost", "new_cost", "potential"],
               [(e.step, e.actor, e.old_cost, e.new_cost, e.potential) for e in result.potential_trace])
    _write_csv(out / f"schedule{suffix}.csv", ["house_id", "appliance_id", "start_slot"],
               [(p.house_id, p.appliance_id, s) for p, s in result.final_profile.start_slot.items()])


def read_schedule(path, scenario) -> StrategyProfile:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    try:
        starts = {PlayerId(r["house_id"], r["appliance_id"]): int(r["start_slot"]) for r in rows}
    except (KeyError, ValueError) as e:
        raise ScenarioError(f"{path}: malformed schedule ({e})") from None
    return StrategyProfile.from_mapping(scenario, starts)


# -- subcommands ---------------------------------------------------------------

def _spec_from_args(args) -> GenerationSpec:
    if getattr(args, "spec", None):
        return load_spec(args.spec)
    return GenerationSpec(
        num_houses=args.houses,
        flexibility=args.flexibility,
        homogeneity="heterogeneous" if args.heterogeneous else "homogeneous",
        tariff_threshold_fraction=args.ttf,
        slope_multiplier=args.slope_mult,
        seed=args.seed,
    )


def _config(args, mode) -> DynamicsConfig:
    return DynamicsConfig(mode=mode, order_policy=args.order, seed=args.seed,
                          max_passes=args.max_passes, improvement_epsilon=args.epsilon, init=args.init)


def cmd_generate(args) -> int:
    scenario = generate(_spec_from_args(args))
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save(scenario, out)
    print(f"wrote {out} ({len(scenario.houses)} houses, {len(scenario.players)} shiftable appliances)")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.scenario:
        scenario, spec = load(args.scenario), None
        label = args.label or Path(args.scenario).stem
    else:
        spec = _spec_from_args(args)
        scenario, label = generate(spec), args.label or spec.label
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    modes = ["SA", "MA"] if args.mode == "both" else [args.mode.upper()]
    rows, ok = [], True
    for mode in modes:
        result = run_dynamics(scenario, _config(args, mode))
        rows.append(summary_row(label, spec, len(scenario.houses), result))
        write_result_files(out, result, "" if len(modes) == 1 else f"_{mode.lower()}")
        ok &= result.converged and not result.diagnostics.cycle_detected
        print(f"{label} {mode}: social cost {result.social_cost:.9g} EUR, passes {result.passes_used}, "
              f"converged {result.converged}")
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
    return EXIT_STRICT if args.strict and not ok else EXIT_OK


def _profile_doc(profile: StrategyProfile) -> dict:
    return {str(p): s for p, s in profile.start_slot.items()}


def cmd_oracle(args) -> int:
    scenario = load(args.scenario)
    result = brute_force(scenario, args.mode, ceiling=args.ceiling)
    doc = {
        "mode": result.mode,
        "optimum_cost": result.optimum_cost,
        "optimum_profiles": [_profile_doc(p) for p in result.optimum_profiles],
        "nash_profiles": [{"starts": _profile_doc(p), "social_cost": c} for p, c in result.nash_profiles],
        "price_of_anarchy": result.price_of_anarchy,
        "profile_count_enumerated": result.profile_count_enumerated,
    }
    ok = True
    if args.verify:
        report = verify_profile(scenario, read_schedule(args.verify, scenario), result)
        doc["verification"] = asdict(report)
        ok = report.status == "verified"
        print(f"verification: {report.status} (cost ratio {fmt(report.cost_ratio)})", file=sys.stderr)
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"optimum {result.optimum_cost:.9g}, {len(result.nash_profiles)} pure equilibria, "
          f"PoA {fmt(result.price_of_anarchy)}", file=sys.stderr)
    return EXIT_STRICT if args.strict and not ok else EXIT_OK


def cmd_check_pricing(args) -> int:
    scenario = None
    if args.scenario:
        scenario = load(args.scenario)
        tariff = scenario.tariff
    elif args.variant == POWER_LAW:
        tariff = Tariff.power_law(args.alpha, args.beta)
    else:
        tariff = Tariff.piecewise_affine(args.c_min, args.slope,
                                         float("inf") if args.threshold is None else args.threshold)
    if args.range:
        lo, hi = args.range
    elif scenario is not None:
        lo, hi = demand_range_for(scenario)
    elif tariff.variant == PIECEWISE_AFFINE and tariff.threshold_kw != float("inf"):
        lo, hi = 0.0, 2 * tariff.threshold_kw
    else:
        lo, hi = 0.0, 10.0
    report = check_regularity(tariff, (lo, hi), args.samples, seed=args.seed)
    text = json.dumps({"demand_range": [lo, hi], **asdict(report)}, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_STRICT if args.strict and report.verdict == VIOLATED else EXIT_OK


def _run_cell(cell):
    spec, config = cell
    return cell_label(spec, config), spec, run_dynamics(generate(spec), config)


def worker_count() -> int:
    env = os.environ.get("GRIDSCHED_THREADS")
    n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def run_matrix(matrix: ExperimentMatrix, workers: int = 1) -> list[list]:
    out = Path(matrix.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if workers > 1 and len(matrix.cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_cell, matrix.cells))
    else:
        done = [_run_cell(c) for c in matrix.cells]
    rows = []
    for label, spec, result in done:
        rows.append(summary_row(label, spec, spec.num_houses, result))
        write_result_files(out, result, f"_{label}")
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, rows)
    return rows


def cmd_matrix(args) -> int:
    cells = []
    for houses in args.houses:
        for hom in args.homogeneity:
            for ttf in args.ttf:
                for mult in args.slope_mult:
                    for seed in args.seeds:
                        for flex in args.flexibility:
                            spec = GenerationSpec(houses, flex, hom, ttf, mult, seed)
                            for mode in args.modes:
                                cells.append((spec, DynamicsConfig(
                                    mode=mode, order_policy=args.order, seed=seed,
                                    max_passes=args.max_passes, improvement_epsilon=args.epsilon)))
    rows = run_matrix(ExperimentMatrix(tuple(cells), Path(args.out)), worker_count())
    print(f"wrote {len(rows)} rows to {Path(args.out) / 'summary.csv'}")
    failed = [r for r in rows if not r[-1]]
    return EXIT_STRICT if args.strict and failed else EXIT_OK


# -- parser ---------------------------------------------------------------------

def _add_generation_flags(p):
    p.add_argument("--spec", help="generation spec file (JSON) instead of the flags below")
    p.add_argument("--houses", type=int, default=20)
    p.add_argument("--flexibility", choices=sorted(FLEXIBILITY_SLACK), default="long")
    p.add_argument("--heterogeneous", action="store_true")
    p.add_argument("--homogeneous", dest="heterogeneous", action="store_false")
    p.add_argument("--ttf", type=float, choices=TARIFF_THRESHOLD_FRACTIONS, default=1.0,
                   help="tariff threshold as a fraction of houses x supply limit")
    p.add_argument("--slope-mult", type=int, default=1, help="slope as a multiple of the minimum slope")
    p.add_argument("--seed", type=int, default=0)


def _add_dynamics_flags(p):
    p.add_argument("--order", choices=["roundrobin", "random"], default="roundrobin")
    p.add_argument("--max-passes", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=1e-12, help="minimum saving (EUR) for a move")
    p.add_argument("--init", choices=["greedy", "random"], default="greedy")
    p.add_argument("--strict", action="store_true", help="exit 5 unless every run converges")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic scenario file")
    _add_generation_flags(g)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run best-response dynamics and write CSV results")
    r.add_argument("--scenario", help="scenario file; otherwise generated from the flags")
    _add_generation_flags(r)
    _add_dynamics_flags(r)
    r.add_argument("--mode", choices=["sa", "ma", "both"], default="sa")
    r.add_argument("--label")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="brute-force optimum and pure equilibria")
    o.add_argument("scenario")
    o.add_argument("--mode", choices=["sa", "ma"], default="sa")
    o.add_argument("--ceiling", type=int, default=10**7)
    o.add_argument("--verify", help="schedule.csv from a run to check against the equilibria")
    o.add_argument("--out")
    o.add_argument("--strict", action="store_true")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("check-pricing", help="numerically certify tariff regularity")
    c.add_argument("--scenario")
    c.add_argument("--variant", choices=[PIECEWISE_AFFINE, POWER_LAW], default=PIECEWISE_AFFINE)
    c.add_argument("--c-min", type=float, default=50e-6)
    c.add_argument("--slope", type=float, default=5.5e-9)
    c.add_argument("--threshold", type=float)
    c.add_argument("--alpha", type=float, default=1.0)
    c.add_argument("--beta", type=float, default=1.0)
    c.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    c.add_argument("--samples", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.add_argument("--strict", action="store_true")
    c.set_defaults(func=cmd_check_pricing)

    m = sub.add_parser("matrix", help="run a grid of generated scenarios")
    m.add_argument("--houses", type=int, nargs="+", default=[5, 20])
    m.add_argument("--flexibility", nargs="+", choices=sorted(FLEXIBILITY_SLACK), default=["fix", "short", "long"])
    m.add_argument("--homogeneity", nargs="+", choices=HOMOGENEITY, default=["homogeneous"])
    m.add_argument("--ttf", type=float, nargs="+", default=[1.0])
    m.add_argument("--slope-mult", type=int, nargs="+", default=[1])
    m.add_argument("--seeds", type=int, nargs="+", default=[0])
    m.add_argument("--modes", nargs="+", choices=["sa", "ma"], default=["sa", "ma"])
    _add_dynamics_flags(m)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_matrix)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, ValueError) as e:
        # OracleCeilingError lands here too: the scenario is too large to enumerate
        if isinstance(e, OracleCeilingError):
            print(f"error: refusing to enumerate {e.size} profiles (ceiling {e.ceiling})", file=sys.stderr)
        else:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
