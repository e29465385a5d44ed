"""Command-line front end: ``gravispheroid <subcommand> ...``.

Exit codes: 0 success, 1 usage, 2 parse, 3 validation, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bulakh, detect, forward, formats, invert, synth
from .model import Domain, GravityDomainError

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3, 4
DEFAULT_NOISE_LEVEL = 0.05


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    """Checked numeric settings shared by the solver subcommands."""

    alpha: float = invert.ALPHA
    functional: str = "F1"
    valley_threshold: float = detect.VALLEY_THRESHOLD
    noise_threshold: float = detect.NOISE_THRESHOLD
    tol: float = invert.SWEEP_TOL
    max_sweeps: int = invert.MAX_SWEEPS
    rounds: int = invert.ROUNDS
    shrink: float = invert.SHRINK
    seed: int = synth.DEFAULT_SEED

    def check(self):
        problems = []
        if not self.alpha >= 0:
            problems.append("alpha must be >= 0")
        if self.functional not in ("F1", "F2"):
            problems.append("functional must be F1 or F2")
        for name in ("valley_threshold", "noise_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                problems.append(f"{name.replace('_', '-')} must lie in [0, 1]")
        if not self.tol > 0:
            problems.append("tol must be > 0")
        if self.max_sweeps < 1 or self.rounds < 1:
            problems.append("sweeps and rounds must be >= 1")
        if not 0 < self.shrink < 1:
            problems.append("shrink must lie in (0, 1)")
        if self.seed < 0:
            problems.append("seed must be non-negative")
        if problems:
            raise ValidationError("; ".join(problems))
        return self


def _config(args) -> RunConfig:
    keys = RunConfig.__dataclass_fields__
    given = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    return RunConfig(**given).check()


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(pairs):
    sys.stdout.write(formats.format_summary(pairs))


def _measured(path):
    stations = formats.read_stations(path)
    if not stations:
        raise ValidationError(f"{path}: no stations")
    if any(s.vz is None for s in stations):
        raise ValidationError(f"{path}: every station needs a measured vz")
    return stations


def _seeded(name, seed):
    if seed is not None and seed < 0:
        raise ValidationError("seed must be non-negative")
    sc = synth.scenario(name)
    if seed is None:
        return sc
    return synth.Scenario(sc.name, sc.bodies, sc.stations, sc.exact_params, sc.noise_sigma,
                          seed, sc.noise_relative)


def _survey(args):
    """Stations with measurements from ``--survey`` or a named ``--scenario``."""
    if args.survey and args.scenario:
        raise UsageError("give either --survey or --scenario, not both")
    if args.scenario:
        sc = _seeded(args.scenario, args.seed)
        level = sc.noise_level if args.noise_level is None else args.noise_level
        return sc.survey(), level
    if not args.survey:
        raise UsageError("one of --survey or --scenario is required")
    level = DEFAULT_NOISE_LEVEL if args.noise_level is None else args.noise_level
    return _measured(args.survey), level


def cmd_forward(args):
    model = formats.read_model(args.model)
    stations = formats.read_stations(args.stations)
    vz = forward.field_at(model, stations)
    _emit(formats.format_stations([s.with_vz(v) for s, v in zip(stations, vz)]), args.out)
    _summary([("stations", len(stations)), ("bodies", len(model)),
              ("vz_max", float(np.max(vz)) if vz.size else 0.0)])


def cmd_grid(args):
    if args.nx < 2 or args.ny < 2:
        raise ValidationError("nx and ny must be >= 2")
    if bool(args.model) == bool(args.survey):
        raise UsageError("give exactly one of --model or --survey")
    if args.model:
        dom = Domain(args.xmin, args.xmax, args.ymin, args.ymax)
        grid = forward.field_grid(formats.read_model(args.model), dom, args.nx, args.ny)
    else:
        grid = detect.grid_from_stations(_measured(args.survey), args.nx, args.ny, args.method)
    formats.write_grid(args.out, grid)
    _summary([("nx", grid.nx), ("ny", grid.ny), ("vz_max", float(grid.values.max()))])


def cmd_noise(args):
    if args.sigma < 0 or args.relative < 0:
        raise ValidationError("sigma and relative must be >= 0")
    stations = _measured(args.survey)
    clean = np.array([s.vz for s in stations])
    seed = synth.DEFAULT_SEED if args.seed is None else args.seed
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    noisy = synth.add_noise(clean, args.sigma + args.relative * np.abs(clean), seed)
    _emit(formats.format_stations([s.with_vz(v) for s, v in zip(stations, noisy)]), args.out)
    _summary([("stations", len(stations)), ("seed", seed)])


def _peaks(stations, level, cfg, method):
    if level < 0:
        raise ValidationError("noise-level must be >= 0")
    return detect.detect(stations, level, method=method, valley_threshold=cfg.valley_threshold,
                         noise_threshold=cfg.noise_threshold)


def _format_peaks(peaks) -> str:
    lines = ["# x0_km y0_km vz_peak_mgal valley"]
    for p in peaks:
        valley = "-" if p.valley_to_nearest is None else formats.fmt(p.valley_to_nearest)
        lines.append(f"{formats.fmt(p.x0)} {formats.fmt(p.y0)} {formats.fmt(p.vz_peak)} {valley}")
    return "\n".join(lines) + "\n"


def cmd_peaks(args):
    cfg = _config(args)
    stations, level = _survey(args)
    _, raw, accepted = _peaks(stations, level, cfg, args.method)
    _emit(_format_peaks(accepted), args.out)
    _summary([("raw_peaks", len(raw)), ("bodies", len(accepted))])


def cmd_estimate(args):
    cfg = _config(args)
    stations, level = _survey(args)
    _, _, accepted = _peaks(stations, level, cfg, args.method)
    ests = bulakh.estimate_bodies(accepted, stations)
    lines = ["# x0_km y0_km z0_km mass_bt n_pairs z0_min z0_max rejected"]
    for p, e in zip(accepted, ests):
        vals = " ".join(formats.fmt(v) for v in (p.x0, p.y0, e.z0, e.mass))
        lines.append(f"{vals} {e.n_pairs} {formats.fmt(e.z0_min)} {formats.fmt(e.z0_max)} {e.rejected}")
    _emit("\n".join(lines) + "\n", args.out)
    _summary([("bodies", len(accepted))])


def _refine(args, boxes):
    cfg = _config(args)
    stations, level = _survey(args)
    if args.rho_min is not None or args.rho_max is not None:
        rho = (args.rho_min or invert.RHO_RANGE[0], args.rho_max or invert.RHO_RANGE[1])
        if not 0 < rho[0] < rho[1]:
            raise ValidationError("need 0 < rho-min < rho-max")
    else:
        rho = invert.RHO_RANGE
    res = invert.refine_pipeline(
        stations, level, alpha=cfg.alpha, functional=cfg.functional, rounds=cfg.rounds,
        shrink=cfg.shrink, tol=cfg.tol, max_sweeps=cfg.max_sweeps,
        valley_threshold=cfg.valley_threshold, noise_threshold=cfg.noise_threshold,
        boxes=boxes, rho_range=rho, mass_rule=args.mass_rule, gridding=args.method,
    )
    if res.inversion is None:
        _emit("# no bodies detected\n", args.out)
        _summary([("bodies", 0), ("reason", res.diagnostics.get("reason", ""))])
        return
    _emit(formats.format_result(res.inversion), args.out)
    inv = res.inversion
    _summary([("bodies", inv.m), ("rounds", inv.rounds), ("f_initial", inv.f_initial),
              ("f_final", inv.f_final)])
    if args.report:
        _report(res)


def _report(res):
    print("body      x0      y0      z0     eps     rho       a       v       M")
    for k, s in enumerate(res.spheroids, start=1):
        print(f"{k:4d} {s.x0:7.3f} {s.y0:7.3f} {s.z0:7.3f} {s.eps:7.3f} {s.rho:7.3f} "
              f"{s.a:7.3f} {s.volume:7.2f} {s.mass:7.2f}")


def cmd_invert(args):
    box = formats.read_constraints(args.constraints)
    _refine(args, box)


def cmd_pipeline(args):
    _refine(args, None)


def cmd_scenario(args):
    sc = _seeded(args.name, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_model(out / "bars.txt", sc.bodies)
    formats.write_model(out / "model.txt", [e.spheroid for e in sc.exact_params])
    formats.write_stations(out / "stations.txt", sc.stations)
    formats.write_stations(out / "survey.txt", sc.survey())
    rows = ["# a eps rho x0 y0 z0 v M"]
    for e in sc.exact_params:
        rows.append(" ".join(formats.fmt(v) for v in (e.a, e.eps, e.rho, e.x0, e.y0, e.z0, e.v, e.M)))
    (out / "exact.txt").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if sc.name == "example1":
        box = invert.ParameterBox.from_corridors(synth.EXAMPLE1_BOXES)
        formats.write_constraints(out / "constraints.txt", box)
    _summary([("scenario", sc.name), ("stations", len(sc.stations)),
              ("bodies", len(sc.bodies)), ("seed", sc.seed),
              ("noise_level", sc.noise_level)])


def _solver_options(p):
    p.add_argument("--alpha", type=float, default=invert.ALPHA)
    p.add_argument("--functional", choices=("F1", "F2"), default="F1")
    p.add_argument("--tol", type=float, default=invert.SWEEP_TOL)
    p.add_argument("--sweeps", dest="max_sweeps", type=int, default=invert.MAX_SWEEPS)
    p.add_argument("--rounds", type=int, default=invert.ROUNDS)
    p.add_argument("--shrink", type=float, default=invert.SHRINK)
    p.add_argument("--rho-min", type=float)
    p.add_argument("--rho-max", type=float)
    p.add_argument("--mass-rule", choices=("rescale", "pole", "fixed"), default="rescale")
    p.add_argument("--report", action="store_true", help="print a human-readable body table")


def _detection_options(p):
    p.add_argument("--survey", help="stations file with measured vz")
    p.add_argument("--scenario", choices=synth.available_scenarios(),
                   help="simulate the survey of a built-in scenario instead")
    p.add_argument("--noise-level", type=float,
                   help=f"noise std relative to the strongest pole (default {DEFAULT_NOISE_LEVEL}, "
                        "or the scenario's own level)")
    p.add_argument("--valley-threshold", type=float, default=detect.VALLEY_THRESHOLD)
    p.add_argument("--noise-threshold", type=float, default=detect.NOISE_THRESHOLD)
    p.add_argument("--method", choices=("tps", "idw"), default="tps", help="gridding method")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--seed", type=int,
                        help="random seed (default: the scenario's own seed, "
                             f"otherwise {synth.DEFAULT_SEED})")
    parser = _Parser(prog="gravispheroid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _add = sub.add_parser

    def add(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add

    p = sub.add_parser("forward", help="V_z of a model at stations")
    p.add_argument("--model", required=True)
    p.add_argument("--stations", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("grid", help="rasterise a model or a survey for contouring")
    p.add_argument("--model")
    p.add_argument("--survey")
    p.add_argument("--xmin", type=float, default=synth.SURVEY_EXTENT[0])
    p.add_argument("--xmax", type=float, default=synth.SURVEY_EXTENT[1])
    p.add_argument("--ymin", type=float, default=synth.SURVEY_EXTENT[0])
    p.add_argument("--ymax", type=float, default=synth.SURVEY_EXTENT[1])
    p.add_argument("--nx", type=int, default=detect.DEFAULT_RASTER)
    p.add_argument("--ny", type=int, default=detect.DEFAULT_RASTER)
    p.add_argument("--method", choices=("tps", "idw"), default="tps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("noise", help="add seeded Gaussian errors to a survey")
    p.add_argument("--survey", required=True)
    p.add_argument("--sigma", type=float, default=0.0, help="absolute std, mGal")
    p.add_argument("--relative", type=float, default=0.0, help="std as a fraction of |vz|")
    p.add_argument("--out")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("peaks", help="detect anomaly poles")
    _detection_options(p)
    p.set_defaults(func=cmd_peaks)

    p = sub.add_parser("estimate", help="sphere depth and mass per pole")
    _detection_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("invert", help="refine spheroids inside given constraints")
    _detection_options(p)
    p.add_argument("--constraints", required=True)
    _solver_options(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("pipeline", help="poles, estimates and refinement end to end")
    _detection_options(p)
    _solver_options(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("scenario", help="write a built-in synthetic scenario")
    p.add_argument("--name", required=True, choices=synth.available_scenarios())
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scenario)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except formats.ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (GravityDomainError, bulakh.EstimationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
