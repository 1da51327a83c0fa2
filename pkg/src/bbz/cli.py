"""Command-line entry point: ``bbz {profile,spectrum,sweep,verify}``."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from bbz import acceptance
from bbz.continuation import (
    BRANCH_CSV_HEADER,
    SweepConfig,
    config_dict,
    detect_collision,
    sweep,
)
from bbz.errors import BBZError
from bbz.io import dumps_csv, dumps_json, write_text
from bbz.operators import MIN_POINTS
from bbz.profiles import (
    H_MAX,
    Branch,
    Parity,
    ProfileGrid,
    build_profile,
    params_of_alpha,
    params_of_h,
)
from bbz.spectra import CSV_HEADER as SPECTRUM_CSV_HEADER
from bbz.spectra import Tolerances, analyze

COMMANDS = ("profile", "spectrum", "sweep", "verify")
PROFILE_CSV_HEADER = ("x", "u", "phi", "uprime")
VERIFY_CSV_HEADER = ("number", "name", "pass", "detail")
DEFAULT_POINTS = 2048


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Command:
    name: str
    alpha: float | None = None
    h: float | None = None
    branch: Branch | None = None
    n: int | None = None
    length: float | None = None
    alpha_min: float | None = None
    alpha_max: float | None = None
    steps: int | None = None
    format: str = "csv"
    out: str = "."
    config: str | None = None
    parity: Parity | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int, help="grid points")
    common.add_argument("--length", type=float, help="half-length L of the domain [-L, L]")
    common.add_argument("--parity", choices=[p.value for p in Parity])
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", help="key=value settings file")

    point = _Parser(add_help=False)
    point.add_argument("--alpha", type=float)
    point.add_argument("--h", type=float)
    point.add_argument("--branch", choices=[b.value for b in Branch])

    parser = _Parser(prog="bbz", description="Forced NLS solitons: profiles, spectra, continuation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("profile", parents=[common, point], help="sample a soliton profile")
    sub.add_parser("spectrum", parents=[common, point], help="linearized spectrum at one parameter")
    sw = sub.add_parser("sweep", parents=[common], help="continuation in alpha and collision search")
    sw.add_argument("--alpha-min", type=float)
    sw.add_argument("--alpha-max", type=float)
    sw.add_argument("--steps", type=int)
    sw.add_argument("--branch", choices=[b.value for b in Branch])
    sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    return parser


def parse_args(argv: Sequence[str]) -> Command:
    ns = _parser().parse_args(list(argv))
    if ns.command is None:
        raise UsageError(f"a command is required: one of {', '.join(COMMANDS)}")
    kw: dict[str, Any] = {k: v for k, v in vars(ns).items() if k != "command" and v is not None}
    if "branch" in kw:
        kw["branch"] = Branch(kw["branch"])
    if "parity" in kw:
        kw["parity"] = Parity(kw["parity"])
    cmd = Command(ns.command, **kw)
    if cmd.n is not None and cmd.n < MIN_POINTS:
        raise UsageError(f"--n {cmd.n}: need at least {MIN_POINTS} grid points")
    if cmd.length is not None and not cmd.length > 0:
        raise UsageError(f"--length {cmd.length}: must be positive")
    if cmd.name in ("profile", "spectrum"):
        if cmd.alpha is not None and cmd.h is not None:
            raise UsageError("--alpha and --h conflict; give exactly one")
        if cmd.alpha is None and cmd.h is None:
            raise UsageError("one of --alpha or --h is required")
        if cmd.alpha is not None and not (cmd.alpha > 0 and math.isfinite(cmd.alpha)):
            raise UsageError(f"--alpha {cmd.alpha}: must be a positive number")
        if cmd.h is not None and not 0.0 < cmd.h < H_MAX:
            raise UsageError(f"--h {cmd.h}: must lie in (0, 2/(3*sqrt(6))) = (0, {H_MAX:.6f})")
    if cmd.name == "sweep":
        if cmd.steps is not None and cmd.steps < 1:
            raise UsageError(f"--steps {cmd.steps}: must be at least 1")
        lo, hi = cmd.alpha_min, cmd.alpha_max
        if lo is not None and hi is not None and not 0 < lo < hi:
            raise UsageError(f"--alpha-min {lo} / --alpha-max {hi}: need 0 < alpha-min < alpha-max")
    return cmd


_FIELD_TYPES = {
    "alpha_min": float, "alpha_max": float, "steps": int, "branch": Branch,
    "n_points": int, "parity": Parity, "half_length": float, "zero_tol": float,
    "re_tol": float, "edge_margin": float, "collision_tol": float, "edge_tol": float,
    "bisect_tol": float, "quartet_probe": float, "max_halvings": int, "threads": int,
    "out_dir": str,
}


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse ``key=value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
    known = SweepConfig.field_names()
    out: dict[str, Any] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            if value.lower() in ("none", "") and key in ("half_length", "threads"):
                out[key] = None
                continue
            try:
                out[key] = _FIELD_TYPES[key](value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return out


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> SweepConfig:
    """File values first, then ``overrides`` (command-line flags) on top."""
    settings = read_config(path) if path else {}
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return SweepConfig(**settings)
    except BBZError as exc:
        raise UsageError(str(exc)) from None


def write_outputs(documents: dict[str, tuple[Any, Sequence[str] | None, list | None]],
                  fmt: str, out_dir: str | Path) -> list[Path]:
    """Write each ``stem -> (json_obj, csv_header, csv_rows)`` as ``stem.csv`` or ``stem.json``.

    Documents without a CSV form are always written as JSON.
    """
    if fmt not in ("csv", "json"):
        raise UsageError(f"--format {fmt}: must be csv or json")
    paths = []
    for stem, (obj, header, rows) in documents.items():
        if fmt == "csv" and header is not None:
            paths.append(write_text(Path(out_dir) / f"{stem}.csv", dumps_csv(header, rows)))
        else:
            paths.append(write_text(Path(out_dir) / f"{stem}.json", dumps_json(obj)))
    return paths


def _point_settings(cmd: Command) -> tuple[dict[str, Any], Any]:
    settings = read_config(cmd.config) if cmd.config else {}
    branch = cmd.branch or settings.get("branch", Branch.MINUS)
    params = (params_of_alpha(cmd.alpha, branch) if cmd.alpha is not None
              else params_of_h(cmd.h, branch))
    grid = ProfileGrid.for_params(
        params,
        cmd.n or settings.get("n_points", DEFAULT_POINTS),
        cmd.parity or settings.get("parity", Parity.FULL),
        cmd.length if cmd.length is not None else settings.get("half_length"),
    )
    return settings, build_profile(params, grid)


def _run_profile(cmd: Command) -> int:
    _, prof = _point_settings(cmd)
    docs = {"profile": (prof.to_dict(), PROFILE_CSV_HEADER, prof.records())}
    for p in write_outputs(docs, cmd.format, cmd.out):
        print(p)
    return 0


def _run_spectrum(cmd: Command) -> int:
    settings, prof = _point_settings(cmd)
    tol = Tolerances(**{k: settings[k] for k in ("zero_tol", "re_tol", "edge_margin") if k in settings})
    rep = analyze(prof, tol)
    kr, kc, ki = rep.counts
    chk = rep.index_check
    print(f"kr={kr} kc={kc} ki_minus={ki} zero_multiplicity={rep.zero_multiplicity} "
          f"edge={rep.edge:.6f} index {chk.lhs} = {chk.rhs}"
          + (" (conditional)" if chk.conditional else ""))
    docs = {"spectrum": (rep.to_dict(), SPECTRUM_CSV_HEADER, rep.csv_rows())}
    for p in write_outputs(docs, cmd.format, cmd.out):
        print(p)
    return 0


def _sweep_config(cmd: Command) -> SweepConfig:
    overrides = {
        "alpha_min": cmd.alpha_min, "alpha_max": cmd.alpha_max, "steps": cmd.steps,
        "n_points": cmd.n, "half_length": cmd.length, "parity": cmd.parity,
        "branch": cmd.branch,
    }
    if cmd.out != ".":
        overrides["out_dir"] = cmd.out
    return load_config(cmd.config, overrides)


def _run_sweep(cmd: Command) -> int:
    config = _sweep_config(cmd)
    result = sweep(config)
    event = detect_collision(result.points, config)
    docs = {
        "branch": ({"config": config_dict(config),
                    "points": [dict(zip(BRANCH_CSV_HEADER, p.csv_row())) for p in result.points]},
                   BRANCH_CSV_HEADER, [p.csv_row() for p in result.points]),
        "collision": (event.to_dict(), None, None),
    }
    print(f"{event.kind.value}: alpha*={event.alpha_star:.6g} h*={event.h_star:.6g}")
    for p in write_outputs(docs, cmd.format, config.out_dir):
        print(p)
    return 0


def _run_verify(cmd: Command) -> int:
    ctx = acceptance.AcceptanceContext()
    results = acceptance.run_all(ctx, on_result=lambda r: print(r.line(), flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    docs = {
        "verify": ([r.to_dict() for r in results], VERIFY_CSV_HEADER,
                   [(r.number, r.name, r.passed, r.detail) for r in results]),
    }
    if ctx._sweep is not None:
        docs["branch"] = ({"points": [dict(zip(BRANCH_CSV_HEADER, p.csv_row()))
                                      for p in ctx.sweep_result.points]},
                          BRANCH_CSV_HEADER, [p.csv_row() for p in ctx.sweep_result.points])
        docs["collision"] = (ctx.collision.to_dict(), None, None)
    write_outputs(docs, cmd.format, cmd.out)
    return 0 if passed == len(results) else 1


_RUNNERS = {"profile": _run_profile, "spectrum": _run_spectrum,
            "sweep": _run_sweep, "verify": _run_verify}


def run(cmd: Command) -> int:
    try:
        return _RUNNERS[cmd.name](cmd)
    except UsageError as exc:
        print(f"bbz {cmd.name}: {exc}", file=sys.stderr)
        return 2
    except (BBZError, ArithmeticError, ValueError, OSError) as exc:
        print(f"bbz {cmd.name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        print(f"bbz: {exc}", file=sys.stderr)
        return 2
    return run(cmd)


if __name__ == "__main__":
    sys.exit(main())
