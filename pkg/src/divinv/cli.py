"""Command line front end.

Exit codes: 0 success, 1 I/O or parse error, 2 validation, 3 convergence,
4 resolution.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, ledger
from .errors import DivInvError
from .fields import ScalarField, norms_csv, read_field, write_field
from .geometry import load_config, validate_config
from .perforated import discretize, make_rhs, bogovskii_perforated

log = logging.getLogger("divinv")

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_RESOLUTION = 0, 1, 2, 3, 4


class InputError(Exception):
    """Unreadable or unparsable input (exit 1)."""


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_config(path):
    try:
        return load_config(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_validate(args) -> int:
    dom = validate_config(_load_config(args.config))
    s = dom.summary()
    print(f"valid: N={s['N']} bound={s['bound']} min_gap={s['min_gap']:.6g} "
          f"min_boundary_clearance={s['min_boundary_clearance']:.6g}")
    return EXIT_OK


def _rhs(spec: str, disc, q: float) -> ScalarField:
    kind, _, arg = spec.partition(":")
    if kind == "builtin":
        return make_rhs(disc, arg or "bump_dx", q)
    if kind == "file":
        try:
            f = read_field(arg, origin=disc.grid.origin)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read rhs {arg}: {exc}") from exc
        if not isinstance(f, ScalarField) or f.grid.shape != disc.grid.shape \
                or not np.isclose(f.grid.h, disc.grid.h, rtol=1e-12):
            raise InputError(f"rhs {arg} does not match the grid {disc.grid.shape}, h={disc.grid.h!r}")
        return ScalarField(disc.grid, np.where(disc.fluid, f.values, 0.0), disc.fluid)
    raise InputError(f"unknown rhs spec {spec!r} (use builtin:<family> or file:<path>)")


def cmd_solve(args) -> int:
    dom = validate_config(_load_config(args.config))
    disc = discretize(dom, h=args.h, cells_per_feature=args.cells_per_feature, max_cells=args.max_cells)
    f = _rhs(args.rhs, disc, args.q[0])
    if args.grid_only:
        write_field(_out_dir(args.out) / "grid_rhs.field", ScalarField(disc.grid, f.values))
        return EXIT_OK
    sol = bogovskii_perforated(f, disc, backend=args.backend, tol=args.tol, q_list=args.q,
                               max_iter=args.max_iter)
    out = _out_dir(args.out)
    write_field(out / "solution.field", sol.u)
    diag = {k: v for k, v in sol.info.items()}
    diag["norms"] = {str(q): v for q, v in sol.norms.items()}
    diag["tol"] = args.tol
    with open(out / "diagnostics.json", "w") as fh:
        json.dump(diag, fh, indent=2)
    rows = []
    for q, v in sol.norms.items():
        rows += [("u_lq", q, v["lq"]), ("grad_u_lq", q, v["grad_lq"]), ("f_lq", q, v["f_lq"])]
    (out / "norms.csv").write_text(norms_csv(rows))
    ok = sol.residual <= args.tol and diag["hole_trace_max"] == 0.0
    print(f"residual={sol.residual:.3e} hole_trace_max={diag['hole_trace_max']:.1e} -> {out}")
    return EXIT_OK if ok else EXIT_CONVERGENCE


def cmd_sweep(args) -> int:
    try:
        plan = harness.SweepPlan.from_dict(_load_json(args.plan))
    except (KeyError, TypeError) as exc:
        raise InputError(f"bad plan {args.plan}: {exc}") from exc
    if args.seed is not None:
        plan.seed = args.seed
    if args.tol is not None:
        plan.tol = args.tol
    if args.backend is not None:
        plan.backend = args.backend
    records = harness.run_sweep(plan, threads=args.threads)
    out = _out_dir(args.out)
    harness.write_sweep_csv(records, out / "sweep.csv", timing=args.timing)
    if args.timing:
        with open(out / "timing.json", "w") as fh:
            json.dump([{"epsilon": r.epsilon, "q": r.q, "seconds": r.seconds} for r in records], fh, indent=2)
    print(f"{len(records)} records -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_ledger(args) -> int:
    if args.scan:
        text = ledger.scan_csv(ledger.scan())
        if args.out:
            (_out_dir(args.out) / "admissibility.csv").write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    if args.gamma is None or args.alpha is None:
        raise InputError("ledger needs --gamma and --alpha (or --scan)")
    results = [r.to_dict() for r in ledger.report(args.gamma, args.alpha, args.delta0_exp)]
    print(json.dumps(results, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = harness.read_sweep_csv(args.csv)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read sweep CSV {args.csv}: {exc}") from exc
    out = _out_dir(args.out)
    keys = sorted({(r.q, r.alpha) for r in records})
    fits = [harness.fit_report(records, q, a) for q, a in keys]
    with open(out / "fit.json", "w") as fh:
        json.dump(fits, fh, indent=2)
    lines = [f"{'epsilon':>10} {'q':>6} {'alpha':>6} {'nx':>5} {'ratio':>14} {'residual':>10}"]
    for r in records:
        lines.append(f"{r.epsilon:>10.4g} {r.q:>6.3g} {r.alpha:>6.3g} {r.nx:>5d} {r.ratio:>14.8g} {r.residual:>10.2e}")
    lines.append("")
    for fit in fits:
        slope = "n/a" if fit["slope"] is None else f"{fit['slope']:.6f}"
        lines.append(f"q={fit['q']:g} alpha={fit['alpha']:g}: predicted {fit['predicted']:.6f}, "
                     f"slope {slope}, bound check {fit['bound_check_passed']}")
    (out / "table.txt").write_text("\n".join(lines) + "\n")
    with open(out / "sweep.dat", "w") as fh:
        for q, a in keys:
            fh.write(f"# q={q:g} alpha={a:g}\n# epsilon ratio\n")
            for r in sorted((r for r in records if (r.q, r.alpha) == (q, a)), key=lambda r: r.epsilon):
                fh.write(f"{r.epsilon!r} {r.ratio!r}\n")
            fh.write("\n\n")
    from .plotting import plot_sweep

    plot_sweep(records, fits, out / "sweep.png")
    print(f"report -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divinv", description="Right inverses of the divergence on perforated domains.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a perforation config")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("solve", help="solve div u = f on the perforated domain")
    s.add_argument("--config", required=True)
    s.add_argument("--rhs", default="builtin:bump_dx", help="builtin:bump_dx | builtin:near_hole | file:<path>")
    s.add_argument("--backend", choices=("minenergy", "integral"), default="minenergy")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--q", type=float, nargs="+", default=[2.0])
    s.add_argument("--h", type=float, default=None, help="grid spacing (default: resolution rule)")
    s.add_argument("--cells-per-feature", type=int, default=3)
    s.add_argument("--max-cells", type=int, default=96**3)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--grid-only", action="store_true",
                   help="write the discretized right-hand side as grid_rhs.field and stop")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run an epsilon sweep plan")
    w.add_argument("--plan", required=True)
    w.add_argument("--out", default="out")
    w.add_argument("--threads", type=int, default=1)
    w.add_argument("--seed", type=int, default=None)
    w.add_argument("--tol", type=float, default=None)
    w.add_argument("--backend", choices=("minenergy", "integral"), default=None)
    w.add_argument("--timing", action="store_true", help="fill the seconds column (output no longer byte-stable)")
    w.set_defaults(func=cmd_sweep)

    g = sub.add_parser("ledger", help="exponent identities of the pressure estimates")
    g.add_argument("--gamma", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--delta0-exp", type=float, default=None)
    g.add_argument("--scan", action="store_true", help="emit the admissibility map as CSV")
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_ledger)

    r = sub.add_parser("report", help="fit and plot a sweep CSV")
    r.add_argument("--csv", required=True)
    r.add_argument("--out", default="report")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DivInvError as exc:
        msg = str(exc)
        name = type(exc).__name__
        print(f"error: {msg if msg.startswith(name) else f'{name}: {msg}'}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
