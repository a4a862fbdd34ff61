"""Command-line front end.

Subcommands: ``gen``, ``run``, ``verify``, ``bounds`` and ``report``.
Exit codes are 0 when every asserted check passes, 1 when one fails and
2 for usage or input errors. ``SBL_SEED`` overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversary import AdversaryError, run_against_adversary
from .bounds import (
    LOWER_SOURCES,
    UPPER_SOURCES,
    VERDICT_FIELDS,
    BoundError,
    VerdictReport,
    VerdictRow,
    envelope_params,
    general_lower_source,
    krylov_envelope,
    lower_envelope,
    make_envelope,
    span_lower_source,
    upper_envelope,
    verdict,
)
from .instances import (
    ECO_KINDS,
    KINDS,
    Instance,
    RegimeError,
    closed_form,
    default_dims,
    kkt_residuals,
    load_instance,
    make_instance,
    normalize_kind,
    rotate_instance,
    save_instance,
)
from .krylov import brute_force_min_over_K, closed_form_J, closed_form_K, krylov_pair, min_over_K
from .numerics import max_principal_angle
from .oracle import FirstOrderOracle
from .solvers import (
    SolverError,
    lalm_auto_parameters,
    metrics,
    penalty_parameters,
    run_agd,
    run_lalm,
    run_pdhg,
    run_penalty_agd,
    run_random_probe,
    run_smoothing,
)

SOLVERS = ("lalm", "pdhg", "smoothing", "agd", "penalty-agd", "probe")
SPAN_SOLVERS = frozenset(SOLVERS) - {"probe"}
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit code 2."""


@dataclass
class ExperimentConfig:
    kind: str
    k: int
    m: int
    n: int
    iterations: int
    L_f: float = 1.0
    L_A: float = 1.0
    mu: float = 0.0
    solvers: list[str] = field(default_factory=list)
    solver_params: dict = field(default_factory=dict)
    adversarial: bool = False
    out_dir: Path = Path("out")
    seed: int = 0


def _dims(args) -> tuple[int, int, int, int]:
    """``(k, m, n, iterations)`` from ``--k`` / ``--T`` / ``--m`` / ``--n``."""
    if args.k is None and args.T is None:
        raise UsageError("one of --k or --T is required")
    if args.k is not None:
        k = args.k
        m = 2 * k + 2
    else:
        k, m, _ = default_dims(args.T)
    m = args.m if args.m is not None else m
    n = args.n if args.n is not None else m + 8
    iterations = args.T if args.T is not None else k
    return k, m, n, iterations


def _build_instance(args) -> Instance:
    if args.kind is None:
        raise UsageError("--kind is required without --instance")
    k, m, n, _ = _dims(args)
    return make_instance(args.kind, m, n, k, args.lf, args.la, args.mu or 0.0)


def _seed(args) -> int:
    env = os.environ.get("SBL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SBL_SEED must be an integer, got {env!r}") from None
    return args.seed


# ---------------------------------------------------------------- gen

def cmd_gen(args) -> int:
    inst = _build_instance(args)
    save_instance(inst, args.out)
    sol = closed_form(inst)
    print(f"wrote {args.out}: {inst.kind} k={inst.k} m={inst.m} n={inst.n} "
          f"opt={sol.opt_value!r}")
    return EXIT_PASS


# ---------------------------------------------------------------- run

@dataclass
class JobResult:
    solver: str
    trajectory: object
    report: VerdictReport
    certificate: object = None
    transcript: object = None


def _lalm_params(inst: Instance, params: dict) -> tuple[float, float, bool]:
    eta = params.get("eta", "auto")
    if eta == "auto":
        sol = closed_form(inst)
        eta, beta = lalm_auto_parameters(inst.L_f, inst.L_A, math.sqrt(sol.x_norm_sq),
                                         math.sqrt(sol.y_norm_sq))
        return eta, beta, True
    return float(eta), params.get("beta") or 1.0, False


def _run_fixed(inst: Instance, solver: str, cfg: ExperimentConfig) -> JobResult:
    params = cfg.solver_params
    T = cfg.iterations
    oracle = FirstOrderOracle(inst)
    upper = None
    average_traj = None
    lag = 1
    if solver == "lalm":
        if inst.is_spp:
            raise SolverError("LALM runs on the equality-constrained kinds only")
        eta, beta, auto = _lalm_params(inst, params)
        traj = run_lalm(inst, eta, T, oracle, beta=beta)
        if auto:
            # the rate guarantee is stated for the ergodic average
            average_traj = metrics(run_lalm(inst, eta, T, beta=beta, average=True), inst)
            upper = make_envelope("lalm", envelope_params(inst))
    elif solver == "pdhg":
        traj = run_pdhg(inst, T, params.get("tau"), params.get("sigma"), oracle)
    elif solver == "smoothing":
        traj = run_smoothing(inst, T, oracle)
        lag = 0
        upper = make_envelope("smoothing", envelope_params(inst)).restricted(lambda t: t == T)
    elif solver == "agd":
        traj = run_agd(inst, T, oracle, mu=inst.mu)
    elif solver == "penalty-agd":
        sol = closed_form(inst)
        rho0, eps0 = penalty_parameters(inst.mu, math.sqrt(sol.y_norm_sq), params["eps"])
        traj = run_penalty_agd(inst, rho0, eps0, oracle)
    else:
        traj = run_random_probe(inst, T, oracle, seed=cfg.seed)
    metrics(traj, inst)
    span = solver in SPAN_SOLVERS
    report = VerdictReport()
    if span:
        report.rows += verdict(traj, lower=krylov_envelope(inst, lag)).rows
    if inst.kind in ECO_KINDS:
        theorem = make_envelope(span_lower_source(inst.kind), envelope_params(inst))
        theorem = theorem.restricted(lambda t: t == inst.k)
        report.rows += verdict(traj, lower=theorem, linear_span=span).rows
    else:
        # general-method envelopes need the resisting oracle; informational here
        theorem = make_envelope(general_lower_source(inst.kind), envelope_params(inst))
        report.rows += verdict(traj, lower=theorem, linear_span=False).rows
    if upper is not None:
        target = average_traj if average_traj is not None else traj
        report.rows += verdict(target, upper=upper).rows
        if average_traj is not None:
            for p, q in zip(traj.points, average_traj.points):
                p.upper_env = q.upper_env
    return JobResult(solver, traj, report, transcript=oracle.transcript)


def _run_adversarial(inst: Instance, solver: str, cfg: ExperimentConfig) -> JobResult:
    params = dict(cfg.solver_params)
    eps = params.pop("eps")
    params = {key: val for key, val in params.items() if val is not None}
    traj, cert, oracle, final = run_against_adversary(inst, solver, seed=cfg.seed, eps=eps,
                                                      **params)
    metrics(traj, final)
    source = general_lower_source(inst.kind)
    rows = []
    for metric, certified in cert.certified_lower_values.items():
        measured = cert.measured_values[metric]
        envelope = cert.envelope_values[metric]
        rows.append(VerdictRow("krylov-min", cert.envelope_t, metric, measured, certified, ">=",
                               measured >= certified - 1e-7, True))
        rows.append(VerdictRow(source, cert.envelope_t, metric, certified, envelope, ">=",
                               certified >= envelope - 1e-7, True))
    rows.append(VerdictRow("replay", cert.rounds, "deviation", cert.replay_deviation, 1e-8, "<=",
                           cert.replay_deviation <= 1e-8, True))
    rows.append(VerdictRow("certificate", cert.rounds, "pass", float(cert.passed), 1.0, ">=",
                           cert.passed, True))
    primary = next(iter(cert.envelope_values))
    traj.final.lower_env = cert.envelope_values[primary]
    return JobResult(solver, traj, VerdictReport(rows), cert, oracle.transcript)


def _job(inst: Instance, solver: str, cfg: ExperimentConfig) -> JobResult:
    runner = _run_adversarial if cfg.adversarial else _run_fixed
    return runner(inst, solver, cfg)


def cmd_run(args) -> int:
    if args.instance is not None:
        inst, _ = _read_instance(args.instance)
        k, m, n = inst.k, inst.m, inst.n
        iterations = args.T if args.T is not None else inst.k
    else:
        inst = _build_instance(args)
        k, m, n, iterations = _dims(args)
    cfg = ExperimentConfig(
        inst.kind, k, m, n, iterations, inst.L_f, inst.L_A, inst.mu,
        solvers=args.solver or [], adversarial=args.adversarial, out_dir=Path(args.out),
        seed=_seed(args),
        solver_params={"eta": args.eta, "beta": args.beta, "tau": args.tau,
                       "sigma": args.sigma, "eps": args.eps},
    )
    if not cfg.solvers:
        raise UsageError("at least one --solver is required")
    if cfg.adversarial and inst.is_rotated:
        raise UsageError("adversarial runs need an unrotated instance")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=min(len(cfg.solvers), os.cpu_count() or 1)) as pool:
        futures = [pool.submit(_job, inst, s, cfg) for s in cfg.solvers]
        results = [f.result() for f in futures]
    # single collector: files are written in submission order
    ok = True
    for res in results:
        stem = cfg.out_dir / res.solver
        res.trajectory.to_csv(f"{stem}_trajectory.csv")
        res.report.to_csv(f"{stem}_verdict.csv")
        if res.transcript is not None and res.transcript.keep_entries:
            res.transcript.to_jsonl(f"{stem}_transcript.jsonl")
        if res.certificate is not None:
            res.certificate.to_json(f"{stem}_certificate.json")
        asserted = [r for r in res.report.rows if r.asserted]
        failed = res.report.violations()
        ok = ok and res.report.passed
        status = "PASS" if res.report.passed else "FAIL"
        print(f"{status} {res.solver}: {len(asserted) - len(failed)}/{len(asserted)} "
              f"asserted rows pass, {res.trajectory.final.oracle_calls} oracle calls")
        for row in failed[:5]:
            print(f"  {row.source} t={row.t} {row.metric}: measured {row.measured:.6g} "
                  f"{row.direction} {row.bound:.6g}")
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------- verify

def _read_instance(path):
    text = Path(path).read_text() if Path(path).exists() else None
    if text is None:
        raise UsageError(f"no such file: {path}")
    if not text.strip():
        raise UsageError(f"parse error: {path} is empty")
    try:
        return load_instance(path)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"parse error in {path}: {exc}") from None


def _relerr(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b), initial=0.0)) / max(1.0, float(np.max(np.abs(b),
                                                                             initial=0.0)))


def verify_checks(inst: Instance, embedded: dict) -> list[tuple[str, float, float]]:
    """``(check, value, tolerance)`` rows; a check passes when ``value <= tolerance``."""
    rows = []
    reference = make_instance(inst.kind, inst.m, inst.n, inst.k, inst.L_f, inst.L_A, inst.mu)
    if inst.is_rotated:
        reference = rotate_instance(reference, inst.U, inst.V)
    for name in ("H", "h", "A", "b"):
        rows.append((f"data {name} matches generator",
                     _relerr(getattr(inst, name), getattr(reference, name)), 1e-10))
    sol = closed_form(inst)
    if embedded:
        rows.append(("embedded x* matches closed form", _relerr(embedded["x_star"], sol.x_star),
                     1e-10))
        rows.append(("embedded y* matches closed form", _relerr(embedded["y_star"], sol.y_star),
                     1e-10))
        rows.append(("embedded optimal value", _relerr(embedded["opt_value"], sol.opt_value),
                     1e-10))
    for name, value in kkt_residuals(inst, sol.x_star, sol.y_star).items():
        rows.append((f"KKT {name} residual", value, 1e-9))
    if inst.L_A > 0:
        Lam, c = 2.0 * inst.A / inst.L_A, 2.0 * inst.b / inst.L_A
        worst = 0.0
        for i in range(2 * inst.k):
            pair = krylov_pair(Lam, c, i)
            worst = max(worst,
                        max_principal_angle(pair.J, closed_form_J(inst.k, inst.m, i, inst.V)),
                        max_principal_angle(pair.K, closed_form_K(inst.k, inst.n, i, inst.U)))
        rows.append(("Krylov spans match closed form (max angle)", worst, 1e-9))
    quantities = {"ECO-I": ("obj_abs", "feas"), "ECO-II": ("obj", "obj_abs", "feas"),
                  "ECO-SC": ("obj", "feas", "dist2"), "SPP-I": ("phi_gap", "feas"),
                  "SPP-II": ("phi_gap", "feas"), "SPP-SC": ("feas", "dist2")}[inst.kind]
    for q in quantities:
        exact = min_over_K(inst, q)
        numeric = brute_force_min_over_K(inst, q)
        rows.append((f"min over K_(k-1) of {q}", abs(exact - numeric) / max(1.0, abs(exact)),
                     1e-7))
    return rows


def cmd_verify(args) -> int:
    inst, embedded = _read_instance(args.instance)
    rows = verify_checks(inst, embedded)
    width = max(len(r[0]) for r in rows)
    ok = True
    for name, value, tol in rows:
        passed = value <= tol
        ok = ok and passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<{width}}  {value:.3e} (tol {tol:.0e})")
    return EXIT_PASS if ok else EXIT_FAIL


# ---------------------------------------------------------------- bounds

def cmd_bounds(args) -> int:
    if args.instance is not None:
        inst, _ = _read_instance(args.instance)
    else:
        inst = _build_instance(args)
    params = envelope_params(inst)
    # the AL-ADMM envelope needs finite diameters, so it only applies to ball-constrained kinds
    sources = args.source or [general_lower_source(inst.kind)] + (
        [span_lower_source(inst.kind), "lalm"] if inst.kind in ECO_KINDS
        else ["smoothing", "al-admm"])
    columns = []
    for src in sources:
        if src in LOWER_SOURCES:
            metrics_ = list(LOWER_SOURCES[src][1])
        elif src in UPPER_SOURCES:
            metrics_ = list(UPPER_SOURCES[src])
        else:
            raise UsageError(f"unknown source {src!r}")
        columns += [(src, m) for m in metrics_]
    writer = csv.writer(sys.stdout)
    writer.writerow(["t"] + [f"{s}:{m}" for s, m in columns])
    for t in range(args.t_max + 1):
        row = [t]
        for src, metric in columns:
            try:
                if src in LOWER_SOURCES:
                    value = lower_envelope(src, params, t)[metric]
                else:
                    value = upper_envelope(src, params, t)[metric]
                row.append(f"{value:.6g}")
            except BoundError:
                row.append("")
        writer.writerow(row)
    return EXIT_PASS


# ---------------------------------------------------------------- report

def _csv_inputs(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.glob("*.csv"))
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    if not files:
        raise UsageError("no CSV files to merge")
    return files


def cmd_report(args) -> int:
    header: list[str] = []
    rows = []
    for path in _csv_inputs(args.inputs):
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                for key in rec:
                    if key not in header:
                        header.append(key)
                rows.append({"file": path.name, **rec})
    target = open(args.out, "w", newline="") if args.out else nullcontext(sys.stdout)
    with target as out:
        writer = csv.DictWriter(out, ["file"] + header, restval="")
        writer.writeheader()
        writer.writerows(rows)
    verdicts = [r for r in rows if set(VERDICT_FIELDS) <= r.keys()]
    failed = sum(r["pass"] == "false" for r in verdicts)
    print(f"{len(rows)} rows merged; {len(verdicts)} verdict rows, {failed} failed",
          file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_PASS


# ---------------------------------------------------------------- parser

def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", type=normalize_kind, choices=KINDS, metavar="KIND",
                   help="instance kind: " + ", ".join(KINDS))
    p.add_argument("--k", type=int, help="hardness parameter k")
    p.add_argument("--T", type=int, help="round budget; implies k = 2T+4 when --k is absent")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--lf", type=float, default=1.0, help="L_f (default 1)")
    p.add_argument("--la", type=float, default=1.0, help="|A| (default 1)")
    p.add_argument("--mu", type=float, help="strong convexity modulus (required for *-SC)")


def _eta(value: str):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError("--eta takes a number or 'auto'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saddlebounds",
                                     description="Hard instances, solvers and rate envelopes "
                                                 "for first-order saddle-point methods.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write an instance file with its closed-form solution")
    _add_instance_flags(p)
    p.add_argument("--out", default="instance.json")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run solvers and compare against the envelopes")
    _add_instance_flags(p)
    p.add_argument("--instance", help="instance file (instead of the inline flags)")
    p.add_argument("--solver", action="append", choices=SOLVERS)
    p.add_argument("--eta", type=_eta, default="auto")
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--eps", type=float, default=1e-3, help="target accuracy for penalty-agd")
    p.add_argument("--adversarial", action="store_true",
                   help="answer queries through the resisting oracle")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="re-derive and check an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="print envelope tables as CSV")
    _add_instance_flags(p)
    p.add_argument("--instance")
    p.add_argument("--source", action="append")
    p.add_argument("--t-max", type=int, default=20)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("report", help="merge CSV outputs")
    p.add_argument("inputs", nargs="+", help="CSV files or directories")
    p.add_argument("--out", help="merged CSV path (default stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, RegimeError, SolverError, BoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AdversaryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
