"""Command-line entry point: ``sdfdem --config run.toml --out runs/a``.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time

from ..errors import OutputError, SchemaError, SdfDemError
from .assemble import assemble
from .config import load_config
from .writers import OutputWriter

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="sdfdem", description="Run a DEM / peridynamics scenario described by a TOML config.")
    p.add_argument("--config", required=True, metavar="PATH", help="scenario configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides [output].directory)")
    p.add_argument("--dt", type=float, metavar="F", help="time step override")
    p.add_argument("--t-end", type=float, metavar="F", help="end time override")
    p.add_argument("--seed", type=int, metavar="N", help="random seed override")
    p.add_argument("--threads", type=int, metavar="N", help="worker threads for contact solves")
    p.add_argument("--verbose", action="store_true", help="print a progress line at every output")
    return p


def apply_overrides(cfg, args):
    """Command-line values replace file values; the result is re-validated."""
    changes = {}
    errors = []
    if args.dt is not None:
        if not args.dt > 0.0:
            errors.append(f"--dt: must be positive, got {args.dt}")
        changes["dt"] = args.dt
    if args.t_end is not None:
        if args.t_end < 0.0:
            errors.append(f"--t-end: must be non-negative, got {args.t_end}")
        changes["t_end"] = args.t_end
    if args.seed is not None:
        if args.seed < 0:
            errors.append(f"--seed: must be non-negative, got {args.seed}")
        changes["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            errors.append(f"--threads: must be positive, got {args.threads}")
        changes["threads"] = args.threads
    if errors:
        raise SchemaError(errors)
    return dataclasses.replace(cfg, **changes)


def run(cfg, out_dir, verbose=False):
    """Run a parsed config, streaming outputs into ``out_dir``."""
    from ..integration import advance_simulation

    try:
        exp = assemble(cfg)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
    sim = exp.simulation
    sim.initialize()
    started = time.perf_counter()

    def progress(k, simulation):
        if verbose:
            print(
                f"step {k}/{exp.plan.n_steps} t={simulation.t:.6g} contacts={len(simulation.contacts)}"
                f" elapsed={time.perf_counter() - started:.1f}s",
                flush=True,
            )

    with OutputWriter(out_dir, vtk=exp.output.get("vtk", True)) as writer:
        advance_simulation(sim, exp.plan, exp.observers, progress, sink=writer.write)
    return exp


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = apply_overrides(load_config(args.config), args)
        out_dir = args.out if args.out is not None else cfg.output.get("directory", "out")
        run(cfg, out_dir, args.verbose)
    except SchemaError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SdfDemError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
