"""Command-line interface.

Every subcommand accepts ``--config FILE``, a YAML mapping whose keys mirror
the long options; explicit options override the file.  Results print as a
table on stdout; ``--jsonl PATH`` appends one JSON record per result.

Exit codes: 0 success, 1 usage error, 2 domain or precondition error,
3 verification failure, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import acceptance
from .bounds import lower_bound_bphi, lower_bound_gls, lower_bound_lp
from .config import (ConfigError, jsonable, load_document, normalize_keys, parse_float_list,
                     parse_int_list, parse_norm, scenario_document)
from .errors import RCBoundsError, VerificationFailure
from .families import get_family
from .fisher import MONTECARLO, QUADRATURE, fisher_bphi, fisher_gls, fisher_p
from .montecarlo import SCENARIO_KEYS, VIOLATED, Scenario, clt_norm_estimate, verify_bound, wnri_probe
from .rng import WORKERS_ENV, default_workers
from .transforms import (natural_phi, natural_psi, parse_phi, parse_psi, phi_bar_table, young_fenchel)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Output:
    """Collects records, prints a table and writes JSON-lines."""

    def __init__(self, jsonl: Optional[str], stream=None):
        self.records: list[dict] = []
        self.jsonl = jsonl
        self.stream = stream or sys.stdout

    def emit(self, record: dict) -> None:
        self.records.append(jsonable(record))

    def table(self, rows: list[tuple], header: Optional[tuple] = None) -> None:
        lines = ([header] if header else []) + rows
        widths = [max(len(_fmt(r[i])) for r in lines) for i in range(len(lines[0]))]
        for r in lines:
            print("  ".join(_fmt(c).ljust(w) for c, w in zip(r, widths)).rstrip(), file=self.stream)

    def close(self) -> None:
        if self.jsonl:
            with open(self.jsonl, "a") as fh:
                for rec in self.records:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- subcommands ---------------------------------------------------------------------------

def cmd_fisher(args, out: Output) -> int:
    _need(args, "family", "theta")
    fam = get_family(args.family)
    if args.p is not None:
        rep = fisher_p(fam, args.theta, args.p, method=args.method, reps=args.reps, seed=args.seed or 0)
    elif args.psi is not None:
        p_grid = parse_float_list(args.p_grid) if args.p_grid else None
        rep = fisher_gls(fam, args.theta, parse_psi(args.psi), p_grid=p_grid)
    elif args.phi is not None:
        lam = parse_float_list(args.lambda_grid) if args.lambda_grid else None
        rep = fisher_bphi(fam, args.theta, parse_phi(args.phi), lam_grid=lam)
    else:
        raise UsageError("fisher needs one of --p, --psi, --phi")
    out.emit({"command": "fisher", **rep.to_dict()})
    out.table([("value", rep.value), ("error_estimate", rep.error_estimate), ("method", rep.method),
               ("diverged", rep.diverged)])
    return 0


def cmd_bound(args, out: Output) -> int:
    _need(args, "family", "theta")
    if args.q is not None:
        res = lower_bound_lp(args.family, args.theta, args.q)
    elif args.psi is not None:
        p_grid = parse_float_list(args.p_grid) if args.p_grid else None
        res = lower_bound_gls(args.family, args.theta, parse_psi(args.psi), p_grid=p_grid)
    elif args.phi is not None:
        lam = parse_float_list(args.lambda_grid) if args.lambda_grid else None
        res = lower_bound_bphi(args.family, args.theta, parse_phi(args.phi), lam_grid=lam)
    else:
        raise UsageError("bound needs one of --q, --psi, --phi")
    out.emit({"command": "bound", **res.to_dict()})
    rows = [("bound", res.bound), ("statement_norm", res.statement_norm),
            ("information", res.information.value)]
    rows += [(k, v) for k, v in res.constant.items()]
    if res.variant:
        rows += [("bound[K(B)]", res.variant["bound"]), ("statement_norm[K(B)]", res.variant["statement_norm"])]
    out.table(rows)
    return 0


def cmd_verify(args, out: Output) -> int:
    if not args.scenario:
        raise UsageError("verify needs --scenario")
    doc, outputs = scenario_document(args.scenario)
    doc = normalize_keys(doc, set(SCENARIO_KEYS), args.scenario)
    if args.seed is not None:
        doc["seed"] = args.seed
    if doc.get("seed") is None:
        raise UsageError("verify needs a seed (--seed or in the scenario)")
    scenario = Scenario.from_dict(doc)
    report = verify_bound(scenario, workers=args.workers)
    text = json.dumps(jsonable(report.to_dict()), sort_keys=True, indent=1)
    report_path = args.report or outputs.get("report")
    csv_path = args.csv or outputs.get("csv")
    if report_path:
        Path(report_path).write_text(text + "\n")
    if csv_path:
        Path(csv_path).write_text(report.to_csv())
    if outputs.get("jsonl") and not out.jsonl:
        out.jsonl = outputs["jsonl"]
    for row in report.csv_rows():
        out.emit({"command": "verify", "scenario_key": scenario.key, **row})
    out.emit({"command": "verify", "verdict": report.verdict, "rhs": report.rhs_bound})
    rows = [(n, l, s, m, v) for n, l, s, m, v in zip(report.n_grid, report.lhs, report.se, report.margin,
                                                     report.verdicts)]
    out.table(rows, header=("n", "lhs", "se", "margin", "verdict"))
    out.table([("rhs", report.rhs_bound), ("verdict", report.verdict)])
    if report.verdict == VIOLATED:
        raise VerificationFailure("bound violated beyond Monte Carlo noise")
    return 0


def _norm_from_args(args):
    if not args.norm:
        raise UsageError("--norm is required")
    p_grid = parse_float_list(args.p_grid) if args.p_grid else None
    lam = parse_float_list(args.lambda_grid) if args.lambda_grid else None
    return parse_norm(args.norm, p_grid=p_grid, lam_grid=lam)


def cmd_clt_norm(args, out: Output) -> int:
    _need(args, "dist", "n_grid")
    est = clt_norm_estimate(args.dist, _norm_from_args(args), parse_int_list(args.n_grid), args.reps,
                            seed=args.seed or 0, workers=args.workers)
    out.emit({"command": "clt-norm", **est.to_dict()})
    out.table([(n, v, s, r) for n, v, s, r in zip(est.n_grid, est.values, est.ses, est.running_sup)],
              header=("n", "norm", "se", "running_sup"))
    out.table([("sup", est.sup), ("growth_exponent", est.growth.slope), ("growth_se", est.growth.se),
               ("divergence", est.divergence)])
    return 0


def cmd_probe(args, out: Output) -> int:
    _need(args, "dist", "n_grid")
    res = wnri_probe(args.dist, _norm_from_args(args), parse_int_list(args.n_grid), args.reps,
                     seed=args.seed or 0, workers=args.workers)
    out.emit({"command": "probe", **res.to_dict()})
    est = res.estimate
    out.table([(n, v, s) for n, v, s in zip(est.n_grid, est.values, est.ses)], header=("n", "norm", "se"))
    out.table([("verdict", res.verdict), ("growth_exponent", est.growth.slope), ("growth_se", est.growth.se)])
    return 0


def cmd_natural_psi(args, out: Output) -> int:
    _need(args, "family")
    thetas = parse_float_list(args.theta_grid) if args.theta_grid else None
    if args.phi:
        lam = parse_float_list(args.lambda_grid) if args.lambda_grid else parse_float_list("lin:-2:2:9")
        phi = natural_phi(args.family, thetas, lam)
        vals = np.asarray(phi(np.asarray(lam)), dtype=float)
        for l, v in zip(lam, vals):
            out.emit({"command": "natural-phi", "family": args.family, "lambda": l, "value": float(v)})
        out.table([(l, float(v)) for l, v in zip(lam, vals)], header=("lambda", "phi0"))
        out.table([("lambda0", phi.lambda0)])
        return 0
    psi = natural_psi(args.family, thetas)
    grid = parse_float_list(args.p_grid) if args.p_grid else parse_float_list("geom:2:16:8")
    rows = []
    for p in grid:
        v = psi(p)
        rows.append((p, v))
        out.emit({"command": "natural-psi", "family": args.family, "thetas": list(psi.thetas), "p": p,
                  "value": v})
    out.table(rows, header=("p", "psi0"))
    return 0


def cmd_conjugate(args, out: Output) -> int:
    _need(args, "phi")
    phi = parse_phi(args.phi)
    if args.bar:
        lam = parse_float_list(args.lambda_grid) if args.lambda_grid else parse_float_list("lin:-3:3:13")
        pts = phi_bar_table(phi, lam, n_max=args.n_max)
        for l, pt in zip(lam, pts):
            out.emit({"command": "phi-bar", "phi": phi.label, "lambda": l, "value": pt.value,
                      "argmax_n": pt.argmax_n, "diverged": pt.diverged})
        out.table([(l, pt.value, pt.argmax_n, pt.diverged) for l, pt in zip(lam, pts)],
                  header=("lambda", "phi_bar", "argmax_n", "diverged"))
        return 0
    u = parse_float_list(args.u_grid) if args.u_grid else parse_float_list("lin:-5:5:11")
    res = young_fenchel(phi, u)
    for a, v, arg, b in zip(res.u, res.values, res.argmax, res.boundary):
        out.emit({"command": "conjugate", "phi": phi.label, "u": float(a), "value": float(v),
                  "argmax": float(arg), "boundary": bool(b)})
    out.table([(float(a), float(v), float(arg), bool(b)) for a, v, arg, b in
               zip(res.u, res.values, res.argmax, res.boundary)], header=("u", "conjugate", "argmax", "boundary"))
    return 0


def cmd_regress_suite(args, out: Output) -> int:
    ids = parse_int_list(args.only) if args.only else None
    failed = 0
    for res in acceptance.run_all(ids, workers=args.workers):
        out.emit({"command": "regress-suite", **res.to_dict()})
        print(res.line(), file=out.stream)
        failed += not res.passed
    if failed:
        raise VerificationFailure(f"{failed} acceptance criteria failed")
    return 0


# -- parser --------------------------------------------------------------------------------

def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rcbounds", description="Rao-Cramer type lower bounds in r.i. norms")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func: Callable, helptext):
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.set_defaults(func=func)
        p.add_argument("--config", help="YAML file whose keys mirror the long options")
        p.add_argument("--jsonl", help="append JSON-lines records to this file")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default ${WORKERS_ENV} or 1); never changes results")
        return p

    p = add("fisher", cmd_fisher, "Fisher information of the score in L_p, G(psi) or B(phi)")
    p.add_argument("--family")
    p.add_argument("--theta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--psi")
    p.add_argument("--phi")
    p.add_argument("--p-grid")
    p.add_argument("--lambda-grid")
    p.add_argument("--method", choices=[QUADRATURE, MONTECARLO], default=QUADRATURE)
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int)

    p = add("bound", cmd_bound, "lower bound for regular unbiased estimators")
    p.add_argument("--family")
    p.add_argument("--theta", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--psi")
    p.add_argument("--phi")
    p.add_argument("--p-grid")
    p.add_argument("--lambda-grid")

    p = add("verify", cmd_verify, "simulate a scenario and compare against its bound")
    p.add_argument("--scenario", help="scenario YAML file or a JSON report to re-run")
    p.add_argument("--seed", type=int)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--csv", help="write one CSV row per n here")

    for name, func, text in (("clt-norm", cmd_clt_norm, "CLT norm of normalized sums over an n grid"),
                             ("probe", cmd_probe, "weak normal rearrangement-invariance probe")):
        p = add(name, func, text)
        p.add_argument("--dist", help="e.g. normal, rademacher, symmetric-stable(1.5)")
        p.add_argument("--norm", help="Lp(4), Lorentz(2,3), GLS(psi_m(2)) or Bphi(phi_2)")
        p.add_argument("--n-grid", help="e.g. 1,4,16 or pow2:0:10")
        p.add_argument("--reps", type=int, default=100_000)
        p.add_argument("--seed", type=int)
        p.add_argument("--p-grid")
        p.add_argument("--lambda-grid")

    p = add("natural-psi", cmd_natural_psi, "natural generating functions of a family")
    p.add_argument("--family")
    p.add_argument("--theta-grid")
    p.add_argument("--p-grid")
    p.add_argument("--phi", action="store_true", help="the exponential (phi_0) version instead")
    p.add_argument("--lambda-grid")

    p = add("conjugate", cmd_conjugate, "Young-Fenchel conjugate or CLT majorant of phi")
    p.add_argument("--phi")
    p.add_argument("--u-grid")
    p.add_argument("--bar", action="store_true", help="compute sup_n n phi(lambda / sqrt n) instead")
    p.add_argument("--lambda-grid")
    p.add_argument("--n-max", type=int, default=2 ** 20)

    p = add("regress-suite", cmd_regress_suite, "run the acceptance battery")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        raise UsageError("a subcommand is required: " + ", ".join(
            a.dest for a in parser._subparsers._group_actions[0]._choices_actions))
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        allowed = {a.dest for a in sub._actions if a.dest not in ("help", "config", "func")}
        doc = normalize_keys(load_document(args.config), allowed, args.config)
        sub.set_defaults(**doc)
        args = parser.parse_args(argv)
    return args


def main(argv: Optional[list[str]] = None, stdout=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    out = None
    try:
        args = _apply_config(parser, argv)
        if args.workers is None:
            args.workers = default_workers()
        out = Output(args.jsonl, stdout)
        code = args.func(args, out)
        out.close()
        return code
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except RCBoundsError as exc:
        if out is not None:
            out.close()
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
