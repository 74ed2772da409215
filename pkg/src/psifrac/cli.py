"""Command-line entry point: ``psifrac {solve,certify,stability,ml-eval,op-apply}``.

Exit codes: 0 success, 1 usage or config error, 2 no convergence,
3 degenerate boundary system.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from psifrac.catalog import test_function
from psifrac.certify import (
    Variant,
    certificate_rows,
    existence_certificate,
    uh_bound,
    uhr_bound,
    uniqueness_certificate,
)
from psifrac.config import build, parse_config
from psifrac.errors import DegenerateProblem, NoConvergence, PsifracError
from psifrac.langevin import SolutionBundle, residual_profile, solve_picard
from psifrac.ops import GridFunction, caputo_left, frac_integral_left, frac_integral_right
from psifrac.psi import Domain, build_mesh, make_psi
from psifrac.specfn import MLParams, mittag_leffler

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_DEGENERATE = 3


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_rows(header: Sequence[str], rows: Iterable[Sequence], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return _Passthrough(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


class _Passthrough:
    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        self.stream.flush()
        return False


def emit_csv(obj, path: Optional[str] = None, problem=None) -> None:
    """Write a solution bundle, certificate rows or stability bound as CSV.

    Values carry 17 significant digits and lines end with LF.
    """
    with _open_out(path) as out:
        if isinstance(obj, SolutionBundle):
            res = residual_profile(problem, obj.u) if problem is not None else None
            rows = (
                (t, u, d, r)
                for t, u, d, r in zip(
                    obj.mesh.t, obj.u.values, obj.du.values,
                    res if res is not None else np.full_like(obj.mesh.t, np.nan),
                )
            )
            _write_rows(("t", "u", "du", "residual"), rows, out)
        elif isinstance(obj, list):
            _write_rows(("name", "value"), obj, out)
        elif isinstance(obj, GridFunction):
            _write_rows(("t", "value"), zip(obj.mesh.t, obj.values), out)
        else:
            bound = obj.bound
            _write_rows(("t", "bound"), zip(bound.mesh.t, bound.values), out)


def plot_data(bundle: SolutionBundle, prefix: str) -> tuple[Path, Path]:
    """Write ``<prefix>_solution.csv`` (``t,u,du``) and ``<prefix>_trace.csv``
    (``iter,update_norm``)."""
    sol = Path(f"{prefix}_solution.csv")
    trace = Path(f"{prefix}_trace.csv")
    with open(sol, "w", newline="", encoding="utf-8") as out:
        _write_rows(("t", "u", "du"), zip(bundle.mesh.t, bundle.u.values, bundle.du.values), out)
    with open(trace, "w", newline="", encoding="utf-8") as out:
        _write_rows(
            ("iter", "update_norm"),
            ((str(i + 1), v) for i, v in enumerate(bundle.trace)),
            out,
        )
    return sol, trace


class _Diag:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)


def _cmd_solve(args, say) -> int:
    cfg = parse_config(args.config)
    built = build(cfg)
    try:
        bundle = solve_picard(built.problem, cfg.solver, mesh=built.mesh)
    except NoConvergence as exc:
        say(f"error: {exc}")
        if exc.bundle is not None:
            if args.plot:
                plot_data(exc.bundle, args.plot)
            else:
                for i, v in enumerate(exc.bundle.trace):
                    say(f"trace,{i + 1},{fmt(v)}")
        return EXIT_NO_CONVERGENCE
    emit_csv(bundle, args.out, built.problem)
    if args.plot:
        plot_data(bundle, args.plot)
    r = bundle.residual
    say(
        f"converged in {bundle.iterations} iterations; update {bundle.update_norm:.3e}; "
        f"interior residual {r.interior:.3e}; boundary {r.boundary:.3e}"
    )
    if built.exact is not None:
        err = float(np.max(np.abs(bundle.u.values - built.exact.u(bundle.mesh.K))))
        say(f"max error against the manufactured solution {err:.3e}")
    return EXIT_OK


def _cmd_certify(args, say) -> int:
    cfg = parse_config(args.config)
    built = build(cfg)
    rows = certificate_rows(built.problem, built.assumptions, built.mesh)
    uc = uniqueness_certificate(built.problem, built.assumptions, built.mesh)
    ec = existence_certificate(built.problem, built.assumptions, built.mesh)
    with _open_out(args.out) as out:
        _write_rows(("name", "value"), rows, out)
        out.write(f"UNIQUENESS: {'PASS' if uc.holds else 'FAIL'}\n")
        out.write(f"EXISTENCE: {'PASS' if ec.holds else 'FAIL'}\n")
    return EXIT_OK


def _cmd_stability(args, say) -> int:
    cfg = parse_config(args.config)
    built = build(cfg)
    asm = built.assumptions
    if args.epsilon is not None:
        asm = replace(asm, epsilon=args.epsilon)
    variant = Variant(args.variant)
    if variant in (Variant.UH, Variant.GeneralizedUH):
        report = uh_bound(built.problem, asm, built.mesh, variant)
        say(f"C_eps {report.c_eps:.6e}; kappa0 {report.kappa0:.6e}; bound {report.uh_bound:.6e}")
    else:
        report = uhr_bound(built.problem, asm, built.mesh, variant)
        say(f"max Mittag-Leffler envelope {report.envelope.norm():.6e}")
    emit_csv(report, args.out)
    return EXIT_OK


def _cmd_ml_eval(args, say) -> int:
    value = mittag_leffler(MLParams(args.alpha, args.beta), args.z)
    print(format(value, ".15g"))
    return EXIT_OK


def _parse_psi(text: str):
    if text in ("identity", "log"):
        return make_psi(text)
    if text.startswith("power:"):
        try:
            rho = float(text[6:])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad power exponent in {text!r}") from None
        return make_psi("power", rho)
    raise argparse.ArgumentTypeError(f"--psi must be identity, log or power:R, got {text!r}")


def _cmd_op_apply(args, say) -> int:
    psi = args.psi
    mesh = build_mesh(psi, Domain(args.a, args.b), args.n)
    u = GridFunction.from_K(mesh, test_function(args.fn))
    op = {"jleft": frac_integral_left, "jright": frac_integral_right, "caputo": caputo_left}[args.op]
    emit_csv(op(args.order, u), args.out)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psifrac", description=__doc__.splitlines()[0])
    ap.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", parents=[common], help="solve a configured boundary problem")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--plot", default=None, metavar="PREFIX", help="write plot-data CSV pair")
    sp.set_defaults(run=_cmd_solve)

    sp = sub.add_parser("certify", parents=[common], help="print every certificate constant")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(run=_cmd_certify)

    sp = sub.add_parser("stability", parents=[common], help="print a stability bound")
    sp.add_argument("--config", required=True)
    sp.add_argument("--variant", choices=[v.value for v in Variant], default="uh")
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(run=_cmd_stability)

    sp = sub.add_parser("ml-eval", parents=[common], help="evaluate the Mittag-Leffler function")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--z", type=float, required=True)
    sp.set_defaults(run=_cmd_ml_eval)

    sp = sub.add_parser("op-apply", parents=[common], help="apply an operator to a catalog function")
    sp.add_argument("--op", choices=["jleft", "jright", "caputo"], required=True)
    sp.add_argument("--order", type=float, required=True)
    sp.add_argument("--psi", type=_parse_psi, default="identity")
    sp.add_argument("--a", type=float, default=0.0)
    sp.add_argument("--b", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=512)
    sp.add_argument("--fn", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(run=_cmd_op_apply)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    say = _Diag(args.quiet)
    with warnings.catch_warnings():
        if args.quiet:
            warnings.simplefilter("ignore")
        else:
            warnings.showwarning = lambda message, *rest, **kw: say(f"warning: {message}")
        try:
            return args.run(args, say)
        except DegenerateProblem as exc:
            say(f"error: {exc}")
            return EXIT_DEGENERATE
        except (PsifracError, ValueError, OSError) as exc:
            say(f"error: {exc}")
            return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
