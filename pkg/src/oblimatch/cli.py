"""Command-line entry point: ``oblimatch <subcommand> [flags]``.

Exit codes: 0 on success, 1 on usage or input errors, 2 when a
verification threshold (``--assert-min``) or an exact check fails. Every
run echoes its resolved configuration to stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analytic, bench, duals, factor_lp
from .errors import OracleCapacityError, PreconditionError
from .graph import brute_force_max_matching, instance_from_doc, instance_to_doc, max_matching, perfect_partners
from .matchers import ALGORITHMS, IRP, PERTURBED_GREEDY, RDO, AlgoConfig, make_rng

OUT_DIR_ENV = "OBLIMATCH_OUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def _resolve_out(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text if text.endswith("\n") else text + "\n")


def _echo(args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("# config " + json.dumps(cfg, sort_keys=True, default=str), file=sys.stderr)


def _common(p: argparse.ArgumentParser, trials: int | None = None) -> None:
    p.add_argument("--seed", type=int, default=0)
    if trials is not None:
        p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--out", default=None, help="write results here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1)


# --------------------------------------------------------------------------
# gen
# --------------------------------------------------------------------------


def _generator_spec(args) -> bench.GeneratorSpec:
    params: dict = {}
    fam = args.family
    if fam == "double-bomb":
        params = {"n1": args.n1, "n2": args.n2}
        if args.cross_block is not None:
            params["cross_block"] = args.cross_block
    elif fam == "dyer-frieze":
        params = {"n": args.n}
    elif fam in ("erdos-renyi", "random-weighted"):
        params = {"n": args.n, "p": args.p, "bipartite": args.bipartite}
        if fam == "random-weighted":
            params["weight_dist"] = args.weight_dist
    return bench.GeneratorSpec(fam, params, args.seed)


def _instance_doc(spec: bench.GeneratorSpec) -> dict:
    inst, prefs, order = bench.generate(spec)
    doc = instance_to_doc(inst)
    doc["family"] = spec.family
    doc["params"] = spec.params
    doc["seed"] = spec.seed
    if prefs is not None:
        doc["preferences"] = prefs.tolist()
    if order is not None:
        doc["decision_order"] = order.tolist()
    return doc


def cmd_gen(args) -> int:
    spec = _generator_spec(args)
    doc = _instance_doc(spec)
    out = _resolve_out(args.out)
    _emit(json.dumps(doc), out)
    summary = {"family": spec.family, "params": spec.params, "n": doc["n"], "edges": len(doc["edges"])}
    print(json.dumps(summary, sort_keys=True), file=sys.stderr if out is None else sys.stdout)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _load_doc(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read instance {path}: {exc}") from exc


def _algo_config(name: str, doc: dict) -> AlgoConfig:
    prefs = np.asarray(doc["preferences"]) if "preferences" in doc else None
    if name == RDO:
        return AlgoConfig(RDO, prefs=prefs, label=name)
    if name == PERTURBED_GREEDY:
        return AlgoConfig(PERTURBED_GREEDY, prefs=prefs, g=analytic.eval_g, label=name)
    if name == IRP:
        order = doc.get("decision_order", list(range(int(doc["n"]))))
        return AlgoConfig(IRP, order=tuple(order), label=name)
    return AlgoConfig(name, label=name)


def cmd_simulate(args) -> int:
    doc = _load_doc(args.inst)
    inst = instance_from_doc(doc)
    config = _algo_config(args.algo, doc)
    params = ";".join(f"{k}={v}" for k, v in sorted(doc.get("params", {}).items()))
    est = bench.estimate_ratio(inst, config, args.trials, args.seed, opt=args.opt,
                               family=doc.get("family", "instance"), params=params, threads=args.threads)
    text = bench.ratio_csv([est]) if args.format == "csv" else json.dumps(est.to_doc(), sort_keys=True)
    _emit(text, _resolve_out(args.out))
    if args.assert_max is not None and est.mean > args.assert_max:
        print(f"mean ratio {est.mean:.6f} exceeds {args.assert_max}", file=sys.stderr)
        return EXIT_VERIFY
    if args.assert_min is not None and est.mean < args.assert_min:
        print(f"mean ratio {est.mean:.6f} below {args.assert_min}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------
# duals
# --------------------------------------------------------------------------


def _gain_functions(mode: str, h_const: float) -> duals.GainFunctions:
    if mode == duals.WEIGHTED:
        return duals.GainFunctions.weighted(analytic.eval_g)
    if mode == duals.BIPARTITE:
        return duals.GainFunctions.bipartite(analytic.eval_g)

    def h(y):
        return np.full(np.shape(y), h_const) if np.ndim(y) else h_const

    return duals.GainFunctions(analytic.eval_g, h)


def cmd_duals(args) -> int:
    doc = _load_doc(args.inst)
    inst = instance_from_doc(doc)
    config = _algo_config(args.algo, doc)
    mode = args.mode or duals.default_mode(inst)
    gf = _gain_functions(mode, args.h_const)
    gf.check(mode)
    perfect = perfect_partners(max_matching(inst), inst.n)
    counts = {"runs": 0, "sum_error_max": 0.0, "negative": 0, "matched_low": 0, "victim_low": 0, "earlier_low": 0}
    for t in range(args.trials):
        run, alpha, victims, rep = duals.certify_run(inst, config, gf, seed=(args.seed, t), perfect=perfect, mode=mode)
        counts["runs"] += 1
        counts["sum_error_max"] = max(counts["sum_error_max"], rep.sum_error)
        for key in ("negative", "matched_low", "victim_low", "earlier_low"):
            counts[key] += len(getattr(rep, key))
    if args.format == "json":
        text = json.dumps({"mode": mode, **counts}, sort_keys=True)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", *counts])
        w.writerow([mode, *counts.values()])
        text = buf.getvalue()
    _emit(text, _resolve_out(args.out))
    clean = counts["sum_error_max"] <= 1e-9 and not any(
        counts[k] for k in ("negative", "matched_low", "victim_low", "earlier_low"))
    return EXIT_OK if clean else EXIT_VERIFY


# --------------------------------------------------------------------------
# lp
# --------------------------------------------------------------------------


def cmd_lp(args) -> int:
    n = args.n or factor_lp.DEFAULT_N[args.family]
    build = factor_lp.build_bipartite_lp if args.family == factor_lp.BIPARTITE else factor_lp.build_general_lp
    t0 = time.perf_counter()
    model = build(n, args.relaxation, args.refine)
    if args.export_lp:
        _resolve_out(args.export_lp).write_text(factor_lp.to_lp_text(model))
    sol = factor_lp.solve_lp(model)
    doc = factor_lp.solution_doc(model, sol)
    doc["seconds"] = round(time.perf_counter() - t0, 3)
    if args.soundness:
        rep = factor_lp.check_soundness(model, args.soundness, args.seed)
        doc["soundness"] = {"samples": rep.samples, "violations": rep.violations, "worst_gap": rep.worst_gap}
    if args.format == "json":
        text = json.dumps(doc, sort_keys=True, default=float)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "n", "relaxation", "refine", "status", "value", "rows", "seconds"])
        w.writerow([args.family, n, args.relaxation, args.refine, sol.status, repr(sol.value),
                    model.n_rows, doc["seconds"]])
        text = buf.getvalue()
    _emit(text, _resolve_out(args.out))
    if sol.status != "optimal":
        return EXIT_VERIFY
    if args.soundness and doc["soundness"]["violations"]:
        return EXIT_VERIFY
    if args.assert_min is not None and sol.value < args.assert_min:
        print(f"LP value {sol.value:.6f} below {args.assert_min}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------
# analytic
# --------------------------------------------------------------------------


def cmd_analytic(args) -> int:
    rep = analytic.analytic_report(args.grid_step, args.gamma_step)
    if args.format == "json":
        text = json.dumps(rep.to_doc(), sort_keys=True, default=float)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["item", "expected", "computed", "tol", "passed"])
        for name, m in rep.minima.items():
            w.writerow([f"min {name}", "", repr(m.value), "", ""])
        for c in rep.checkpoints:
            w.writerow([c.name, c.expected, repr(c.computed), c.tol, c.passed])
        text = buf.getvalue()
    _emit(text, _resolve_out(args.out))
    if not rep.passed:
        print("analytic checkpoints failed", file=sys.stderr)
        return EXIT_VERIFY
    if args.assert_min is not None and rep.overall_min < args.assert_min:
        print(f"minimum {rep.overall_min:.6f} below {args.assert_min}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------
# oracle
# --------------------------------------------------------------------------


def random_oracle_instance(rng: np.random.Generator, max_n: int):
    n = int(rng.integers(2, max_n + 1))
    bipartite = bool(rng.integers(0, 2))
    weighted = bool(rng.integers(0, 2))
    seed = int(rng.integers(0, 2**31))
    p = float(rng.uniform(0.2, 0.9))
    if weighted:
        return bench.gen_random_weighted(n, p, seed, "uniform", bipartite)
    return bench.gen_erdos_renyi(n, p, seed, bipartite)


def cmd_oracle(args) -> int:
    rng = make_rng(args.seed)
    mismatches = 0
    for _ in range(args.instances):
        inst = random_oracle_instance(rng, args.max_n)
        fast = max_matching(inst).weight
        slow = brute_force_max_matching(inst).weight
        if abs(fast - slow) > 1e-9 * max(1.0, abs(slow)):
            mismatches += 1
    doc = {"instances": args.instances, "max_n": args.max_n, "mismatches": mismatches}
    text = json.dumps(doc, sort_keys=True) if args.format == "json" else \
        f"instances,max_n,mismatches\n{args.instances},{args.max_n},{mismatches}\n"
    _emit(text, _resolve_out(args.out))
    return EXIT_OK if mismatches == 0 else EXIT_VERIFY


# --------------------------------------------------------------------------
# probe
# --------------------------------------------------------------------------


def cmd_probe(args) -> int:
    spec = bench.correlated_probing_spec(args.n, args.seed, weighted=not args.unweighted, latent_count=args.latent)
    config = AlgoConfig(PERTURBED_GREEDY, g=analytic.eval_g, label=PERTURBED_GREEDY)
    res = bench.run_probing(spec, config, args.trials, args.seed)
    doc = {"n": args.n, "trials": args.trials, "seed": args.seed, "mean": res.mean, "se": res.se,
           "min": res.min, "max": res.max}
    if args.format == "json":
        text = json.dumps(doc, sort_keys=True)
    else:
        text = ",".join(doc) + "\n" + ",".join(repr(v) for v in doc.values()) + "\n"
    _emit(text, _resolve_out(args.out))
    if args.assert_min is not None and res.mean < args.assert_min - 3 * res.se:
        print(f"mean {res.mean:.6f} below {args.assert_min} - 3 SE", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oblimatch", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate an instance file", allow_abbrev=False)
    p.add_argument("family", choices=("double-bomb", "dyer-frieze", "four-vertex", "erdos-renyi", "random-weighted"))
    p.add_argument("--n1", type=int, default=100)
    p.add_argument("--n2", type=int, default=150)
    p.add_argument("--cross-block", type=int, default=None)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--bipartite", action="store_true")
    p.add_argument("--weight-dist", choices=("uniform", "integer", "exponential"), default="uniform")
    _common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="Monte Carlo ratio of an algorithm on an instance", allow_abbrev=False)
    p.add_argument("--inst", required=True)
    p.add_argument("--algo", choices=ALGORITHMS, default=RDO)
    p.add_argument("--opt", type=float, default=None, help="known optimum (skips the oracle)")
    p.add_argument("--assert-min", type=float, default=None)
    p.add_argument("--assert-max", type=float, default=None)
    _common(p, trials=1000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("duals", help="check dual certificates on sampled runs", allow_abbrev=False)
    p.add_argument("--inst", required=True)
    p.add_argument("--algo", choices=ALGORITHMS, default=RDO)
    p.add_argument("--mode", choices=duals.SHARING_MODES, default=None)
    p.add_argument("--h-const", type=float, default=0.05, help="constant h for general unweighted sharing")
    _common(p, trials=100)
    p.set_defaults(func=cmd_duals)

    p = sub.add_parser("lp", help="build and solve a factor-revealing LP", allow_abbrev=False)
    p.add_argument("--family", choices=(factor_lp.BIPARTITE, factor_lp.GENERAL), default=factor_lp.BIPARTITE)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--relaxation", choices=(factor_lp.TANGENT, factor_lp.RIEMANN), default=factor_lp.TANGENT)
    p.add_argument("--refine", type=int, default=1)
    p.add_argument("--export-lp", default=None, help="also write the model in LP text format")
    p.add_argument("--soundness", type=int, default=0, help="random soundness samples to check")
    p.add_argument("--assert-min", type=float, default=None)
    _common(p)
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("analytic", help="minimize the weighted closed-form bounds", allow_abbrev=False)
    p.add_argument("--grid-step", type=float, default=1e-3)
    p.add_argument("--gamma-step", type=float, default=0.05)
    p.add_argument("--assert-min", type=float, default=None)
    _common(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("oracle", help="compare max_matching with brute force", allow_abbrev=False)
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--max-n", type=int, default=12)
    _common(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("probe", help="stochastic probing with correlated edges", allow_abbrev=False)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--latent", type=int, default=3)
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--assert-min", type=float, default=None)
    _common(p, trials=1000)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1 or getattr(args, "trials", 1) < 1:
            raise UsageError("--threads and --trials must be positive")
        _echo(args)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, OracleCapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
