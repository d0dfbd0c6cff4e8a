"""Command-line front end: ``bpod <verb> [--config FILE] [--workdir DIR] [overrides]``.

Exit codes: 0 success, 1 numerical failure (or a failed verification),
2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import CaseConfig, bundled_config, load_config, parse_config
from .criteria import checks_for, standalone_checks
from .errors import (ChecksumError, FormatError, InvalidParameterError, NumericalFailure,
                     VersionMismatchError)
from .pipeline import MANIFEST, STAGES, Manifest, Pipeline, StageError, check_integrity

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

_OVERRIDE_SKIP = {"tolerances", "name"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    """One ``--field`` flag per CaseConfig field."""
    from .config import _SCHEMA
    parsers = {k: v for sec in _SCHEMA.values() for k, v in sec.items()}
    for f in fields(CaseConfig):
        if f.name in _OVERRIDE_SKIP:
            continue
        flag = "--" + f.name.replace("_", "-")
        conv = parsers.get(f.name)
        if f.name == "force_rank":
            p.add_argument(flag, dest=f.name, action="store_true", default=None,
                           help="cut models at the requested rank even inside an HSV pair")
        elif conv is None:
            continue
        else:
            p.add_argument(flag, dest=f.name, type=conv, default=None, metavar=f.name.upper())


def _add_verbose(p: argparse.ArgumentParser) -> None:
    # also accepted after the verb; SUPPRESS keeps the top-level value otherwise
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bpod", description="Balanced POD of linearized channel flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in STAGES + ("pipeline",):
        sp = sub.add_parser(verb, help=f"run stages up to '{verb}'" if verb != "pipeline"
                            else "run every stage")
        _add_verbose(sp)
        sp.add_argument("--config", help="config file, or the name of a bundled config")
        sp.add_argument("--workdir", required=True)
        sp.add_argument("--force", action="store_true", help="rerun stages even if up to date")
        if verb in ("simulate", "pipeline"):
            sp.add_argument("--slice", type=int, metavar="J", default=None,
                            help="(localized case) write x-z planes of v at y-node J")
        _add_overrides(sp)
    sp = sub.add_parser("verify", help="check artifacts and report each acceptance criterion")
    _add_verbose(sp)
    sp.add_argument("--workdir", required=True)
    sp.add_argument("--skip-standalone", action="store_true",
                    help="only evaluate criteria that read the workdir")
    return p


def _load(args) -> CaseConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(CaseConfig)
                 if f.name not in _OVERRIDE_SKIP}
    if args.config is None:
        return parse_config("", overrides)
    path = Path(args.config)
    if not path.is_file():
        path = bundled_config(args.config if args.config.endswith(".cfg") else args.config + ".cfg")
    return load_config(path, overrides)


def _write_slices(pipe: Pipeline, j: int) -> list[Path]:
    from .analysis import write_csv
    from .field3d import state_to_field, slice_rows
    box = pipe.case.box
    if box is None:
        raise InvalidParameterError("--slice applies to the localized case only")
    if not 0 <= j < box.Ny:
        raise InvalidParameterError(f"slice index must lie in 0..{box.Ny - 1}")
    X = pipe.direct()
    states = X.states()
    energy = pipe.case.system.E.norm(states) ** 2
    out = []
    for label, k in (("initial", 0), ("peak", int(np.argmax(energy)))):
        f = state_to_field(box, states[:, k])
        path = pipe.path(f"reports/slice_{label}_y{j}.csv")
        write_csv(path, ["x", "z", "v"], slice_rows(f, j))
        out.append(path)
    return out


def _run(args) -> int:
    cfg = _load(args)
    pipe = Pipeline(cfg, args.workdir, force=args.force)
    stages = STAGES if args.verb == "pipeline" else STAGES[:STAGES.index(args.verb) + 1]
    pipe.run(stages)
    if getattr(args, "slice", None) is not None:
        for p in _write_slices(pipe, args.slice):
            print(p)
    print(f"{args.verb}: done ({args.workdir})")
    return EXIT_OK


def _verify(args) -> int:
    workdir = Path(args.workdir)
    if not (workdir / MANIFEST).is_file():
        raise UsageError(f"{workdir} has no {MANIFEST}; run the pipeline first")
    manifest = Manifest(workdir / MANIFEST)
    missing = check_integrity(workdir, manifest)
    if missing:
        print("missing artifacts:")
        for m in missing:
            print(f"  {m}")
        return EXIT_FAILURE
    incomplete = [s for s in STAGES if manifest.get(f"stage.{s}.status") != "complete"]
    cfg = load_config(workdir / "config.cfg")
    if incomplete and "evaluate" in incomplete:
        print("incomplete stages: " + ", ".join(incomplete))
        return EXIT_FAILURE
    checks = [] if args.skip_standalone else standalone_checks()
    checks += checks_for(workdir, cfg)
    checks.sort(key=lambda c: (c.criterion, c.part))
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bpod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _verify(args) if args.verb == "verify" else _run(args)
    except (UsageError, InvalidParameterError) as exc:
        print(f"bpod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"bpod: {exc}", file=sys.stderr)
        if isinstance(exc.cause, InvalidParameterError):
            return EXIT_USAGE
        return EXIT_FAILURE
    except (NumericalFailure, ChecksumError, VersionMismatchError, FormatError) as exc:
        print(f"bpod: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
