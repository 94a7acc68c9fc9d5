"""Batch command-line front end.

Subcommands: build | chain | verify | scan | spectrum | quadrature-dump.
Every command echoes a fully resolved configuration (defaults materialized)
so a run can be replayed exactly.  Mathematical verdicts live in the JSON
payloads; exit codes only distinguish tool failure classes (2 validation,
3 sampler failure, 4 resource budget).
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from fractions import Fraction
from typing import Optional

from . import gibbs, lancaster as lc, measures as me, orthopoly as op, triplekernel as tk
from .orthopoly import format_real

__all__ = ["main", "build_parser"]


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.payload = {"error": kind, "message": message}
        if field:
            self.payload["field"] = field


def _require(args, names, command):
    for nm in names:
        if getattr(args, nm.replace("-", "_"), None) is None:
            raise CliError(2, "missing-parameter", f"{command} requires --{nm}", field=nm)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lancaster-lab",
                                 description="Lancaster bivariate distributions: "
                                             "construction, Gibbs chains, verification, kernel scans")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; its values override CLI flags")
    common.add_argument("--out", help="output path (JSON, or CSV for chain/quadrature-dump)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--json-errors", action="store_true",
                        help="also emit unexpected internal errors as JSON on stderr")
    sub = ap.add_subparsers(dest="command", parser_class=lambda **kw: argparse.ArgumentParser(
        parents=[common], **kw))

    b = sub.add_parser("build", help="construct a sequence/distribution and serialize it")
    b.add_argument("--family", required=True,
                   choices=["buja", "beta-binomial", "eagleson", "hyperbolic-beta",
                            "geometric-cross", "jacobi-extremal"])
    for flag, typ in (("--a", float), ("--b", float), ("--n", int), ("--N", int),
                      ("--q", float), ("--eta", float), ("--lam", float), ("--xi", float),
                      ("--t", float), ("--z", float)):
        b.add_argument(flag, type=typ)
    b.add_argument("--nef-family", choices=list(gibbs.MODEL_KINDS) + [
        "gaussian", "poisson", "binomial", "negative_binomial", "gamma", "hyperbolic"])
    b.add_argument("--cross-kind", choices=["poisson", "negbin", "negbin_gamma"])

    c = sub.add_parser("chain", help="run the x-chain and fit its spectral decay")
    c.add_argument("--model", required=True,
                   choices=["beta-binomial", "gamma-poisson", "gauss-gauss", "kibble-gamma"])
    for flag, typ in (("--a", float), ("--b", float), ("--n", int), ("--x0", float),
                      ("--lam", float), ("--q", float), ("--r", float)):
        c.add_argument(flag, type=typ)
    c.add_argument("--steps", type=int, required=True)
    c.add_argument("--start", type=float, help="initial x state (default: marginal mean)")
    c.add_argument("--degree", type=int, default=1)
    c.add_argument("--max-lag", type=int, default=8)
    c.add_argument("--diagnostics", help="path for the diagnostics JSON")

    v = sub.add_parser("verify", help="moment-representation screen for a candidate sequence")
    v.add_argument("--family", required=True,
                   choices=["hyperbolic-geometric", "gamma-geometric", "eagleson",
                            "hyperbolic-beta", "geometric-cross"])
    for flag, typ in (("--q", float), ("--t", float), ("--eta", float), ("--lam", float),
                      ("--xi", float), ("--a", float), ("--b", float), ("--N", int)):
        v.add_argument(flag, type=typ)
    v.add_argument("--nef-family")
    v.add_argument("--cross-kind", choices=["poisson", "negbin", "negbin_gamma"])
    v.add_argument("--case", choices=["C", "D"])

    s = sub.add_parser("scan", help="triple-product kernel positivity scan")
    s.add_argument("--family", required=True,
                   choices=["binomial", "hahn", "jacobi", "cartier-dunau"])
    for flag, typ in (("--n", int), ("--p", float), ("--a", float), ("--b", float),
                      ("--q", float), ("--N", int)):
        s.add_argument(flag, type=typ)
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--neg-tol", type=float, default=1e-6)
    s.add_argument("--csv", help="optional CSV dump of the stabilized grid values")

    p = sub.add_parser("spectrum", help="eigenfunction residuals of the x-chain operator")
    p.add_argument("--model", required=True,
                   choices=["beta-binomial", "gamma-poisson", "gauss-gauss"])
    for flag, typ in (("--a", float), ("--b", float), ("--n", int), ("--x0", float),
                      ("--lam", float)):
        p.add_argument(flag, type=typ)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--max-degree", type=int)
    p.add_argument("--resolution", type=int, default=64)

    qd = sub.add_parser("quadrature-dump", help="Gauss nodes/weights for a family")
    qd.add_argument("--family", required=True,
                    choices=["gaussian", "gamma", "beta", "jacobi", "poisson", "binomial",
                             "negative-binomial", "hyperbolic", "cartier-dunau"])
    for flag, typ in (("--q", float), ("--a", float), ("--b", float), ("--n", int),
                      ("--p", float), ("--lam", float)):
        qd.add_argument(flag, type=typ)
    qd.add_argument("--nodes", type=int, required=True)
    return ap


def _resolved_config(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("config", "json_errors"):
            continue
        out[k] = v if not isinstance(v, float) else float(format_real(v))
    return out


def _model_from_args(args) -> gibbs.ConjugateModel:
    kind = args.model.replace("-", "_")
    if kind == "beta_binomial":
        _require(args, ["n", "a", "b"], "beta-binomial model")
        return gibbs.make_model(kind, n=args.n, a=args.a, b=args.b)
    if kind == "gamma_poisson":
        _require(args, ["x0", "lam"], "gamma-poisson model")
        return gibbs.make_model(kind, x0=args.x0, lam=args.lam)
    if kind == "gauss_gauss":
        _require(args, ["x0", "lam"], "gauss-gauss model")
        return gibbs.make_model(kind, x0=args.x0, lam=args.lam)
    if kind == "kibble_gamma":
        _require(args, ["q", "r"], "kibble-gamma model")
        return gibbs.make_model(kind, q=args.q, r=args.r)
    raise CliError(2, "unknown-model", f"model {args.model!r} not supported", field="model")


def _sequence_from_args(args) -> lc.LancasterSequence:
    fam = args.family
    N = args.N if args.N is not None else 30
    if fam == "buja":
        _require(args, ["a", "b"], "buja")
        return lc.seq_buja(args.a, args.b, N)
    if fam == "beta-binomial":
        _require(args, ["n", "a", "b"], "beta-binomial")
        return lc.seq_beta_binomial(args.n, Fraction(args.a).limit_denominator(10 ** 9),
                                    Fraction(args.b).limit_denominator(10 ** 9))
    if fam == "eagleson":
        _require(args, ["nef-family", "lam", "eta", "xi"], "eagleson")
        return lc.seq_eagleson(args.nef_family, args.lam, args.eta, args.xi, N)
    if fam == "hyperbolic-beta":
        _require(args, ["q", "eta"], "hyperbolic-beta")
        return lc.seq_hyperbolic_beta(args.q, args.eta, N)
    if fam == "geometric-cross":
        _require(args, ["cross-kind", "t"], "geometric-cross")
        kw = {}
        if args.cross_kind in ("poisson", "negbin"):
            _require(args, ["a", "b"], "geometric-cross")
            kw = {"a": args.a, "b": args.b}
            if args.cross_kind == "negbin":
                _require(args, ["lam"], "geometric-cross")
                kw["lam"] = args.lam
        else:
            _require(args, ["a", "lam"], "geometric-cross")
            kw = {"a": args.a, "lam": args.lam}
        return lc.seq_geometric_cross(args.cross_kind, args.t, N, **kw)
    if fam == "hyperbolic-geometric":
        _require(args, ["q", "t"], "hyperbolic-geometric")
        m = me.hyperbolic_measure(args.q)
        return lc.LancasterSequence(tuple(args.t ** k for k in range(N + 1)), (m, m),
                                    provenance="candidate_geometric[hyperbolic]")
    if fam == "gamma-geometric":
        _require(args, ["q", "t"], "gamma-geometric")
        m = me.gamma_measure(args.q)
        return lc.LancasterSequence(tuple(args.t ** k for k in range(N + 1)), (m, m),
                                    provenance="candidate_geometric[gamma]")
    if fam == "jacobi-extremal":
        _require(args, ["a", "z"], "jacobi-extremal")
        return tk.extremal_sigma_z(args.a, args.z, N).sequence
    raise CliError(2, "unknown-family", f"family {fam!r} not supported", field="family")


def _scan_measure(args) -> me.MeasureSpec:
    if args.family == "binomial":
        _require(args, ["n", "p"], "scan binomial")
        return me.binomial_measure(args.n, args.p)
    if args.family == "hahn":
        _require(args, ["n", "a", "b"], "scan hahn")
        return me.beta_binomial_measure(args.n, args.a, args.b)
    if args.family == "jacobi":
        _require(args, ["a"], "scan jacobi")
        return me.jacobi_symmetric_measure(args.a)
    _require(args, ["q"], "scan cartier-dunau")
    return me.cartier_dunau_measure(args.q)


def _quad_measure(args) -> me.MeasureSpec:
    fam = args.family
    if fam == "gaussian":
        return me.gaussian_measure()
    if fam == "gamma":
        _require(args, ["q"], "quadrature-dump gamma")
        return me.gamma_measure(args.q)
    if fam == "beta":
        _require(args, ["a", "b"], "quadrature-dump beta")
        return me.beta_measure(args.a, args.b)
    if fam == "jacobi":
        _require(args, ["a"], "quadrature-dump jacobi")
        return me.jacobi_symmetric_measure(args.a)
    if fam == "poisson":
        _require(args, ["a"], "quadrature-dump poisson")
        return me.poisson_measure(args.a)
    if fam == "binomial":
        _require(args, ["n", "p"], "quadrature-dump binomial")
        return me.binomial_measure(args.n, args.p)
    if fam == "negative-binomial":
        _require(args, ["a", "lam"], "quadrature-dump negative-binomial")
        return me.negative_binomial_measure(args.a, args.lam)
    if fam == "hyperbolic":
        _require(args, ["q"], "quadrature-dump hyperbolic")
        return me.hyperbolic_measure(args.q)
    _require(args, ["q"], "quadrature-dump cartier-dunau")
    return me.cartier_dunau_measure(args.q)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_build(args) -> dict:
    seq = _sequence_from_args(args)
    payload = seq.to_json_dict()
    try:
        N = min(seq.max_degree, op.DEGREE_CAP)
        bx = op.recurrence(seq.margins[0], min(N, _margin_cap(seq.margins[0])))
        by = op.recurrence(seq.margins[1], min(N, _margin_cap(seq.margins[1])))
        payload["bases"] = [bx.to_json_dict(), by.to_json_dict()]
    except Exception:
        payload["bases"] = None
    payload["eigenvalues"] = [format_real(v) for v in seq.eigenvalues()]
    return payload


def _margin_cap(m: me.MeasureSpec) -> int:
    if m.kind == "discrete" and m.family in ("binomial", "beta_binomial"):
        return len(m.atoms) - 1
    return op.DEGREE_CAP


def cmd_chain(args) -> tuple:
    model = _model_from_args(args)
    if args.steps < 0:
        raise CliError(2, "invalid-parameter", "steps must be nonnegative", field="steps")
    lo, hi = model.marginal.support
    start = args.start
    if start is None:
        pts = model.marginal
        start = float(op.moments(pts, 1).as_floats()[1]) if pts.family != "gaussian_loc_scale" \
            else float(pts.params[0])
        if model.kind in ("beta_binomial", "gamma_poisson"):
            start = float(round(start))
    try:
        trace = gibbs.run_x_chain(model, start, args.steps, args.seed)
    except Exception as exc:
        raise CliError(3, "sampler-failure", str(exc))
    csv_text = trace.to_csv()
    diag: dict = {"trace": trace.metadata()}
    if args.steps == 0:
        diag["decay"] = None
        diag["refused"] = "empty trace: no diagnostics on zero steps"
    else:
        try:
            fit = gibbs.autocorrelation_vs_spectrum(trace, args.degree, args.max_lag)
            diag["decay"] = fit.to_json_dict()
            diag["analytic_eigenvalue"] = format_real(
                model.sequence.eigenvalues()[args.degree])
        except ValueError as exc:
            diag["decay"] = None
            diag["refused"] = str(exc)
    return csv_text, diag


def cmd_verify(args) -> dict:
    seq = _sequence_from_args(args)
    case = args.case
    if case is None:
        cls = seq.margins[0].support_class()
        case = "C" if cls == "real_line" else "D"
    N = args.N if args.N is not None else min(seq.max_degree, 16)
    report = lc.verify_moment_representation(seq, case, N)
    payload = report.to_json_dict()
    payload["sequence"] = seq.to_json_dict()
    if any(n.startswith("known non-Lancaster") for n in report.notes):
        payload["note"] = "known non-Lancaster"
    return payload


def cmd_scan(args) -> dict:
    measure = _scan_measure(args)
    spec = tk.default_kernel_spec(measure, truncation=args.N)
    try:
        report = tk.positivity_scan(spec, grid_per_axis=args.grid, neg_tol=args.neg_tol)
    except tk.ResourceBudgetError as exc:
        raise CliError(4, "resource-budget", str(exc))
    payload = report.to_json_dict()
    payload["measure"] = measure.to_json_dict()
    if measure.family == "beta_binomial":
        payload["exploratory"] = ("positivity for this discrete family is an open "
                                  "question; the verdict reports grid evidence only")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
        payload["csv"] = args.csv
    return payload


def cmd_spectrum(args) -> dict:
    model = _model_from_args(args)
    degrees = range(0, args.max_degree + 1) if args.max_degree is not None \
        else [args.degree]
    out = {}
    for n in degrees:
        resid = gibbs.spectral_eigencheck(model, n, resolution=args.resolution)
        out[str(n)] = format_real(resid)
    return {"model": model.describe(), "residuals": out,
            "eigenvalues": [format_real(v) for v in model.sequence.eigenvalues()[: max(degrees) + 1]]}


def cmd_quadrature_dump(args) -> str:
    measure = _quad_measure(args)
    cap = _margin_cap(measure)
    if args.nodes < 1 or args.nodes > cap + 1:
        raise CliError(2, "invalid-parameter",
                       f"nodes must be in [1, {cap + 1}] for this family", field="nodes")
    rec = op.recurrence(measure, max(args.nodes - 1, 1))
    nodes, wts = op.quadrature(rec, args.nodes)
    buf = io.StringIO()
    buf.write("node,weight\n")
    for x, w in zip(nodes, wts):
        buf.write(f"{format_real(x)},{format_real(w)}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _apply_config(ap: argparse.ArgumentParser, args) -> None:
    if not args.config:
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(2, "bad-config", f"cannot read config: {exc}", field="config")
    known = set(vars(args))
    for key, val in cfg.items():
        k = key.replace("-", "_")
        if k not in known:
            raise CliError(2, "unknown-key", f"config key {key!r} is not recognized",
                           field=key)
        setattr(args, k, val)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command is None:
            raise CliError(2, "missing-command", "no subcommand given")
        _apply_config(ap, args)
        resolved = _resolved_config(args)
        if args.command == "build":
            payload = cmd_build(args)
            _emit_json(payload, resolved, args.out)
        elif args.command == "chain":
            csv_text, diag = cmd_chain(args)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(csv_text)
            else:
                sys.stdout.write(csv_text)
            _emit_json(diag, resolved, args.diagnostics)
        elif args.command == "verify":
            _emit_json(cmd_verify(args), resolved, args.out)
        elif args.command == "scan":
            _emit_json(cmd_scan(args), resolved, args.out)
        elif args.command == "spectrum":
            _emit_json(cmd_spectrum(args), resolved, args.out)
        elif args.command == "quadrature-dump":
            text = cmd_quadrature_dump(args)
            if args.out:
                with open(args.out, "w") as fh:
                    fh.write(text)
                _emit_json({"written": args.out}, resolved, None)
            else:
                sys.stdout.write(text)
        return 0
    except CliError as err:
        sys.stderr.write(json.dumps(err.payload) + "\n")
        return err.code
    except (me.MeasureError, op.DegreeError, lc.AdmissibilityError, lc.WrongCaseError,
            lc.MarginMismatchError, gibbs.UnsupportedModelError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": "validation", "message": str(exc)}) + "\n")
        return 2
    except lc.BudgetError as exc:
        sys.stderr.write(json.dumps({"error": "resource-budget", "message": str(exc)}) + "\n")
        return 4
    except Exception as exc:  # pragma: no cover - unexpected internal failure
        if getattr(args, "json_errors", False):
            sys.stderr.write(json.dumps({"error": "internal", "message": str(exc)}) + "\n")
        else:
            raise
        return 1


def _emit_json(payload: dict, resolved: dict, out_path: Optional[str]) -> None:
    doc = {"resolved_config": resolved}
    doc.update(payload)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
        sys.stdout.write(json.dumps({"resolved_config": resolved, "written": out_path})
                         + "\n")
    else:
        sys.stdout.write(text + "\n")


if __name__ == "__main__":
    sys.exit(main())
