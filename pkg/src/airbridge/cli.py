"""Command-line entry point: ``airbridge calibrate|compile|verify|analyze|profile``.

Logs go to stderr, data to files or stdout.  Failures print one line of the
form ``airbridge: error[<kind>]: <message>`` and exit with status 2; a
negative verdict (non-converged fit, failed design rules) exits with 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, develop, exposure, gds, layout, profile
from .errors import AirbridgeError
from .project import ProjectConfig, load_project, parse_timestamp

log = logging.getLogger("airbridge")

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_ERROR = 2


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, bytes):
        path.write_bytes(data)
    else:
        path.write_text(data)
    log.info("wrote %s", path)


# -- calibrate ------------------------------------------------------------

def cmd_calibrate(args) -> int:
    samples = exposure.read_dose_csv(args.csv)
    report = exposure.fit_calibration(samples, args.material, args.z0)
    sys.stdout.write(_dump(report.to_dict()))
    if not report.converged:
        log.error("fit for %s did not converge after %d iterations", args.material, report.iterations)
        return EXIT_VERDICT
    out = Path(args.out) if args.out else Path(f"cal_{args.material}.json")
    _write(out, exposure.calibration_to_json(report.calibration, report.rms_residual))
    return EXIT_OK


# -- compile / verify -----------------------------------------------------

def _project(args) -> ProjectConfig:
    overrides = {
        "pier_margin": args.pier_margin,
        "apex_clearance_um": args.apex_clearance,
        "metal_thickness_um": args.metal_thickness,
        "pier_extension_um": args.pier_extension,
        "grid_pitch_um": getattr(args, "pitch", None),
        "n_steps": args.n_steps,
    }
    cfg = load_project(args.config, overrides)
    if args.fixed_timestamp:
        cfg.timestamp = parse_timestamp(args.fixed_timestamp)
    if args.out:
        cfg.output_dir = Path(args.out)
    return cfg


def _compile(cfg: ProjectConfig) -> layout.ExposurePlan:
    return layout.compile_plan(cfg.bridges, cfg.material_map, cfg.calibrations, cfg.compile_options)


def compile_report(cfg: ProjectConfig, plan: layout.ExposurePlan) -> dict:
    checks = []
    for b in cfg.bridges:
        steps = profile.discretize(profile.build_arc(b.length, b.height), b.n_steps)
        c = profile.check_step_constraint(steps, cfg.compile_options.metal_thickness)
        checks.append(
            {"id": b.id, "step_height_um": c.step_height, "margin_um": c.margin, "pass": c.passed}
        )
    return {
        "name": cfg.name,
        "z0_um": plan.z0,
        "n_bridges": len(cfg.bridges),
        "n_layers": len(plan.layers),
        "n_polygons": sum(len(l.polygons) for l in plan.layers),
        "layers": [
            {
                "layer": l.number,
                "power_mw": l.power,
                "material": l.material,
                "band": l.band_index,
                "target_um": l.target,
                "n_polygons": len(l.polygons),
            }
            for l in plan.layers
        ],
        "step_checks": checks,
        "options": {
            "pier_margin": cfg.compile_options.pier_margin,
            "apex_clearance_um": cfg.compile_options.apex_clearance,
            "pier_extension_um": cfg.compile_options.pier_extension,
            "metal_thickness_um": cfg.compile_options.metal_thickness,
        },
        "warnings": list(plan.warnings),
    }


def cmd_compile(args) -> int:
    cfg = _project(args)
    plan = _compile(cfg)
    lib = gds.plan_to_library(plan, name=cfg.name.upper()[:32] or "AIRBRIDGE")
    out = cfg.output_dir
    _write(out / f"{cfg.name}.gds", gds.write_gds(lib, timestamp=cfg.timestamp))
    _write(out / f"{cfg.name}_layers.csv", plan.sidecar_csv())
    report = compile_report(cfg, plan)
    _write(out / f"{cfg.name}_compile.json", _dump(report))
    sys.stdout.write(
        f"{cfg.name}: {report['n_layers']} layers, {report['n_polygons']} polygons\n"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _project(args)
    plan = _compile(cfg)
    field = develop.simulate(plan, cfg.material_map, cfg.calibrations, pitch=cfg.grid_pitch)
    opts = develop.DrcOptions(
        metal_thickness=cfg.compile_options.metal_thickness,
        clearance_min=cfg.compile_options.apex_clearance,
        pier_extension=cfg.compile_options.pier_extension,
    )
    report = develop.run_drc(field, cfg.bridges, opts)
    for w in report.warnings:
        log.warning(w)
    out = cfg.output_dir
    _write(out / f"{cfg.name}_drc.json", report.to_json())
    if args.export_field:
        _write(out / f"{cfg.name}_field.csv", field.to_csv())
        _write(out / f"{cfg.name}_field.pgm", field.to_pgm())
    sys.stdout.write(report.to_json())
    return EXIT_OK if report.passed else EXIT_VERDICT


# -- analyze --------------------------------------------------------------

def cmd_analyze(args) -> int:
    if args.kind == "series":
        fit = analysis.fit_series(analysis.read_series_csv(args.csv))
        doc = {
            "per_bridge_ohms": fit.per_bridge_ohms,
            "intercept_ohms": fit.intercept_ohms,
            "r_squared": fit.r_squared,
            "zero_variance": fit.zero_variance,
            "slope_stderr_ohms": fit.slope_stderr,
        }
    elif args.kind == "junction":
        d = analysis.junction_delta_table(analysis.read_junction_csv(args.csv))
        doc = {"mean_relative_change": d.mean_relative_change, "dispersion": d.dispersion, "n": d.n}
    else:
        fit = analysis.per_bridge_loss(analysis.read_qi_csv(args.csv), n_min=args.n_min)
        doc = {
            "loss_per_bridge": fit.loss_per_bridge,
            "base_loss": fit.base_loss,
            "n_used": fit.n_used,
            "excluded_n_bridges": list(fit.excluded),
            "r_squared": fit.r_squared,
        }
    text = _dump(doc)
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(text)
    return EXIT_OK


# -- profile preview --------------------------------------------------------

def cmd_profile(args) -> int:
    steps = profile.discretize(profile.build_arc(args.length, args.height), args.n_steps)
    out = Path(args.out)
    stem = f"arc_{args.length:g}x{args.height:g}_n{args.n_steps}"
    _write(out / f"{stem}.csv", profile.preview_csv(steps, args.pitch))
    _write(out / f"{stem}.svg", profile.preview_svg(steps, args.pitch))
    check = profile.check_step_constraint(steps, args.metal_thickness)
    sys.stdout.write(
        _dump(
            {
                "radius_um": steps.profile.radius,
                "step_height_um": steps.step_height,
                "n_steps": steps.n_steps,
                "step_check_pass": check.passed,
                "step_margin_um": check.margin,
            }
        )
    )
    return EXIT_OK


def _layout_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="project JSON file")
    p.add_argument("--out", help="output directory (default: config's output_dir)")
    p.add_argument("--fixed-timestamp", metavar="ISO", help="timestamp stored in the GDSII file")
    p.add_argument("--pier-margin", type=float)
    p.add_argument("--apex-clearance", type=float, metavar="UM")
    p.add_argument("--metal-thickness", type=float, metavar="UM")
    p.add_argument("--pier-extension", type=float, metavar="UM")
    p.add_argument("--n-steps", type=int, help="override n_steps of every bridge")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airbridge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit the exposure model to a dose test")
    p.add_argument("csv")
    p.add_argument("--material", required=True)
    p.add_argument("--z0", type=float, required=True, help="initial resist thickness (µm)")
    p.add_argument("--out", help="calibration JSON to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("compile", help="write the GDSII layout and layer power table")
    _layout_flags(p)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("verify", help="simulate development and run design rules")
    _layout_flags(p)
    p.add_argument("--pitch", type=float, metavar="UM", help="simulation grid pitch")
    p.add_argument("--export-field", action="store_true", help="also write CSV and PGM of the field")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("analyze", help="fit measurement data")
    p.add_argument("kind", choices=["series", "junction", "loss"])
    p.add_argument("csv")
    p.add_argument("--n-min", type=int, default=analysis.DEFAULT_N_MIN,
                   help="smallest bridge count used in the loss fit")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("profile", help="preview an arc staircase as CSV and SVG")
    p.add_argument("--length", type=float, required=True)
    p.add_argument("--height", type=float, required=True)
    p.add_argument("--n-steps", type=int, default=18)
    p.add_argument("--pitch", type=float, default=0.05)
    p.add_argument("--metal-thickness", type=float, default=0.5)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        return args.func(args)
    except AirbridgeError as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"airbridge: error[{exc.kind}]: {msg}\n")
        return EXIT_ERROR
    except OSError as exc:
        sys.stderr.write(f"airbridge: error[io]: {' '.join(str(exc).split())}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
