"""Command-line entry point: ``gffperc <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ESTIMATES,
    RECIPES,
    ExperimentSpec,
    SpecError,
    default_output_dir,
    dumps,
    parse_config,
    plot_curves,
    recipe,
    run,
)


def _list(text: str) -> list:
    return [t for t in text.split(",") if t.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=None, help="write results here (default: no files, or $GFFPERC_OUTPUT with --save)")
    p.add_argument("--save", action="store_true", help="persist results under the default output directory")
    p.add_argument("--name", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gffperc", description="Level-set percolation of the lattice Gaussian free field.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("greens", help="random-walk Green function g(0, x)")
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--point", default="0", help="comma-separated coordinates")
    g.add_argument("--method", choices=("quadrature", "box", "both"), default="quadrature")
    g.add_argument("--tol", type=float, default=1e-10)
    _common(g)

    s = sub.add_parser("sample", help="draw free-field samples on a cube")
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--side", "--window", dest="side", type=int, required=True, help="cube side")
    s.add_argument("--margin", type=int, default=None)
    s.add_argument("--count", "--n", dest="count", type=int, default=1)
    s.add_argument("--file", "--out", dest="file", default=None, help="binary dump of the samples")
    _common(s)

    e = sub.add_parser("estimate", help="Monte Carlo percolation estimates")
    e.add_argument("--what", choices=ESTIMATES, default="crossing")
    e.add_argument("--dim", type=int, default=3)
    e.add_argument("--L", default="8,16", help="comma-separated sizes")
    e.add_argument("--h", "--h-grid", dest="h", default=None, help="comma-separated levels")
    e.add_argument("--h-min", type=float, default=None)
    e.add_argument("--h-max", type=float, default=None)
    e.add_argument("--h-step", type=float, default=None)
    e.add_argument("--n", type=int, default=100)
    e.add_argument("--margin", type=int, default=None)
    e.add_argument("--x", default=None, help="target point for connectivity")
    e.add_argument("--field", choices=("gff", "iid-gaussian", "iid-uniform"), default="gff")
    e.add_argument("--L0", type=int, default=None)
    e.add_argument("--h0", type=float, default=None)
    e.add_argument("--plot", default=None, metavar="SVG", help="also draw the curves (and fits) to this file")
    _common(e)

    r = sub.add_parser("renorm", help="renormalization recursion trace")
    r.add_argument("--dim", type=int, default=3)
    r.add_argument("--L0", type=int, default=10)
    r.add_argument("--l0", type=int, default=100)
    r.add_argument("--h0", type=float, default=20.0)
    r.add_argument("--nmax", type=int, default=40)
    r.add_argument("--ledger", default=None, help="JSON constants ledger")
    r.add_argument("--p0", default="analytic", help="analytic or mc:<n>:<seed>")
    _common(r)

    c = sub.add_parser("slab-cert", help="d0 search and slab gates")
    c.add_argument("--h0", type=float, required=True)
    c.add_argument("--L0", type=int, required=True)
    c.add_argument("--pcsite", type=float, default=None)
    c.add_argument("--mc", type=int, default=0, help="Monte Carlo samples for the empirical checks")
    _common(c)

    rc = sub.add_parser("recipe", help="write a pre-baked experiment bundle")
    rc.add_argument("name", choices=RECIPES)
    rc.add_argument("--out-dir", default=None, help="where to write the spec files")

    rn = sub.add_parser("run", help="run an experiment from a key-value config file")
    rn.add_argument("config")
    rn.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config value")
    rn.add_argument("--seed", type=int, default=None)
    rn.add_argument("--workers", type=int, default=None)
    rn.add_argument("--out-dir", default=None)
    return ap


_SKIP = {"command", "seed", "workers", "out_dir", "save", "name", "plot"}


def _spec_from_args(args) -> ExperimentSpec:
    params = {}
    for k, v in vars(args).items():
        if k in _SKIP or v is None:
            continue
        if k in ("point", "L", "h", "x"):
            v = parse_config(f"v = {v}")["v"]
        params[k] = v
    output = args.out_dir or (str(default_output_dir()) if args.save else None)
    return ExperimentSpec(args.name or args.command, args.command, params, args.seed, args.workers, output)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "recipe":
            specs = recipe(args.name)
            outdir = Path(args.out_dir) if args.out_dir else None
            for spec in specs:
                text = spec.to_config()
                if outdir:
                    outdir.mkdir(parents=True, exist_ok=True)
                    (outdir / f"{spec.name}.cfg").write_text(text)
                sys.stdout.write(text)
            return 0
        if args.command == "run":
            overrides = {}
            for item in args.set:
                if "=" not in item:
                    raise SpecError(f"--set expects KEY=VALUE, got {item!r}")
                overrides.update(parse_config(item))
            if args.seed is not None:
                overrides["seed"] = args.seed
            if args.workers is not None:
                overrides["workers"] = args.workers
            if args.out_dir is not None:
                overrides["output"] = args.out_dir
            spec = ExperimentSpec.from_config(Path(args.config).read_text(), overrides)
        else:
            spec = _spec_from_args(args)
        rec = run(spec)
    except (ValueError, FileNotFoundError) as exc:
        # SpecError is a ValueError, as are the modules' precondition failures
        print(f"gffperc: error: {exc}", file=sys.stderr)
        return 2
    if getattr(args, "plot", None) and rec.payload.get("rows"):
        fits = {float(h): f for h, f in rec.payload.get("fits", {}).items()}
        plot_curves(rec.payload["rows"], args.plot, fits, spec.name)
    sys.stdout.write(dumps(rec.payload) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
