"""Command-line entry point: ``biofilm-mixture {solve,evolve,mms,verify}``.

Exit status: 0 success, 2 configuration error, 3 solver non-convergence,
4 invariant breach.  Sign aborts count as breaches, as do MMS orders below
their floor and failed verification properties.  ``BIOFILM_LOG_LEVEL`` sets
the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, RunSpec, load_config, replace, spec_to_text
from .core import BiofilmError, GridError, ParameterError
from .coupled import SolutionState, run_fixed_point
from .interface import HeightProfile, evolve
from .mms import divergence_identity_mms, nutrient_mms, stokes_mms, transport_mms
from .nutrient import PicardError
from .output import table_csv, write_fields, write_manifest, write_text
from .sparse import SolverError
from .transport import InvariantBreach
from .verify import run_verify

log = logging.getLogger("biofilm_mixture")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_INVARIANT = 4


def _exit_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, GridError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, InvariantBreach):
        return EXIT_INVARIANT
    if isinstance(exc, (SolverError, PicardError)):
        return EXIT_NONCONVERGENCE
    return 1


def _state_code(state: SolutionState) -> int:
    if state.status == "aborted":
        return EXIT_INVARIANT
    return EXIT_OK if state.converged else EXIT_NONCONVERGENCE


def _meta(spec: RunSpec, **extra) -> dict:
    return {"command": spec.command, "seed": spec.seed, "version": __version__, **extra}


def cmd_solve(spec: RunSpec, out: Path) -> int:
    grid = spec.grid.build()
    state = run_fixed_point(grid, spec.params, spec.coupled)
    entries = write_fields(state, out, spec.formats)
    entries.append(write_text(out, "config.ini", spec_to_text(spec)))
    man = write_manifest(out, entries, _meta(spec, status=state.status, iterations=state.iterations))
    print(f"{state.status} after {state.iterations} outer iterations; manifest {man['digest']}")
    return _state_code(state)


def _heights_csv(profiles: list[HeightProfile]) -> str:
    nx = profiles[0].nx
    header = ["step", "t"] + [f"h{i}" for i in range(nx + 1)]
    return table_csv(header, [[k, p.t, *p.h] for k, p in enumerate(profiles)])


def cmd_evolve(spec: RunSpec, out: Path) -> int:
    entries: list[dict] = []

    def on_step(k: int, h: HeightProfile, state: Optional[SolutionState]) -> None:
        if state is not None:
            entries.extend(write_fields(state, out, spec.formats, subdir=f"step_{k:04d}"))

    initial = spec.grid.profile_at_t0()
    res = evolve(spec.params, spec.evolution, initial, spec.grid.nz, spec.coupled, on_step=on_step)
    entries.append(write_text(out, "heights.csv", _heights_csv(res.profiles)))
    entries.append(write_text(out, "config.ini", spec_to_text(spec)))
    man = write_manifest(out, entries, _meta(spec, status=res.status, steps=len(res.profiles) - 1))
    print(f"evolution {res.status} at t = {res.profiles[-1].t:.6g}; manifest {man['digest']}")
    if res.completed:
        return EXIT_OK
    log.error("%s", res.error)
    if res.status == "inner_failure":
        return _state_code(res.states[-1])
    return _exit_for(res.exception) if res.exception is not None else 1


def cmd_mms(spec: RunSpec, out: Path) -> int:
    m = spec.mms
    lv = m.levels
    p_tab, v_tab = stokes_mms(lv, lateral=spec.grid.lateral.value)
    studies = [
        (transport_mms(lv), m.min_order_transport),
        (p_tab, m.min_order_pressure),
        (v_tab, m.min_order_velocity),
        (nutrient_mms(lv), m.min_order_nutrient),
        (divergence_identity_mms(lv), m.min_order_divergence),
    ]
    entries, summary, ok = [], [], True
    for tab, floor in studies:
        entries.append(write_text(out, f"mms_{tab.name}.csv", tab.to_csv()))
        passed = tab.min_order >= floor
        ok &= passed
        summary.append((tab.name, tab.min_order, floor, "pass" if passed else "fail"))
        print(f"{'PASS' if passed else 'FAIL'} {tab.name} min order {tab.min_order:.3f} (floor {floor:g})")
    entries.append(write_text(out, "mms_summary.csv", table_csv(["study", "min_order", "floor", "result"], summary)))
    write_manifest(out, entries, _meta(spec))
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_verify(spec: RunSpec, out: Path) -> int:
    rep = run_verify(spec.seed, spec.verify.family_size, spec.verify.inject_sign_violation, spec.params)
    for line in rep.lines():
        print(line)
    entries = [write_text(out, "verify.csv", table_csv(["property", "result", "measured", "detail"], rep.rows()))]
    write_manifest(out, entries, _meta(spec, passed=rep.passed))
    return EXIT_OK if rep.passed else EXIT_INVARIANT


COMMANDS = {"solve": cmd_solve, "evolve": cmd_evolve, "mms": cmd_mms, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biofilm-mixture", description="Two-phase biofilm mixture solver")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve", "single quasi-stationary coupled solve"),
        ("evolve", "free-surface time evolution"),
        ("mms", "manufactured-solution convergence studies"),
        ("verify", "seeded invariant suite"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--out", help="output directory (overrides run.output_dir)")
        if name == "verify":
            p.add_argument("--seed", type=int, help="seed for the property families")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("BIOFILM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        spec = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    spec = replace(spec, command=args.command)
    if args.command == "verify" and args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = Path(args.out or spec.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"config error: output directory {out} is not writable: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](spec, out)
    except BiofilmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_for(exc)


if __name__ == "__main__":
    sys.exit(main())
