"""Command-line entry point.

Exit status: 0 success, 1 validation or domain failure, 2 usage error.
Diagnostics go to stderr; data goes to stdout or to files.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from . import config as cfgmod
from . import electro as eo
from . import panel as pg
from . import ppm
from . import schedule as sched
from . import simulate as sim
from . import study
from .errors import DuoglassError


def _kv(out, pairs):
    for k, v in pairs:
        out.write(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n")


def cmd_metrics(args, out):
    m = eo.curve_metrics(eo.read_curve_csv(args.curve))
    _kv(out, [("i_min_au", m.i_min), ("i_max_au", m.i_max), ("cr", m.cr), ("v_sat_v", m.v_sat)])
    return 0


def cmd_fit(args, out):
    fit = eo.fit_response(eo.read_curve_csv(args.curve), name=Path(args.curve).stem)
    m = fit.material
    _kv(out, [("i_min_au", m.i_min), ("i_max_au", m.i_max), ("v_mid_v", m.v_mid),
              ("v_width_v", m.v_width), ("residual", fit.residual),
              ("iterations", fit.iterations)])
    return 0


def _load(source, require=()):
    cfg = cfgmod.load_config(source, require=require)
    for note in cfg.notices:
        print(f"note: {note}", file=sys.stderr)
    return cfg


def cmd_transparency(args, out):
    cfg = _load(args.config)
    loss = pg.mask_loss_fraction(cfg.panel)
    _kv(out, [("mask_loss", loss),
              ("transparency", pg.panel_transparency(cfg.panel, cfg.stack))])
    return 0


def _frames(cfg, front, back):
    front = front or cfg.front
    back = back or cfg.back
    if not front or not back:
        raise DuoglassError("front and back images are required (arguments or [input] section)")
    return sched.FramePair(ppm.read_image(front), ppm.read_image(back))


def cmd_schedule_compile(args, out):
    cfg = _load(args.config)
    s = sched.compile_schedule(_frames(cfg, args.front, args.back), cfg.panel, cfg.material,
                               cfg.timing)
    data = sched.serialize_schedule(s)
    if args.output:
        Path(args.output).write_bytes(data)
    else:
        out.write(data.decode("utf-8"))
    feas = sched.check_feasibility(cfg.timing, cfg.material)
    if not feas.feasible:
        print(f"warning: {feas.subframe_ms:.4g} ms sub-frames are shorter than the "
              f"{feas.bound_ms:.4g} ms settle bound", file=sys.stderr)
    return 0


def cmd_schedule_validate(args, out):
    s = sched.parse_schedule(Path(args.schedule).read_bytes())
    problems = sched.validate_schedule(s)
    for p in problems:
        print(p, file=sys.stderr)
    out.write(f"violations = {len(problems)}\n")
    return 1 if problems else 0


def cmd_feasibility(args, out):
    cfg = _load(args.config)
    r = sched.check_feasibility(cfg.timing, cfg.material)
    _kv(out, [("subframe_ms", r.subframe_ms), ("bound_ms", r.bound_ms),
              ("margin_ratio", r.margin_ratio), ("feasible", "true" if r.feasible else "false")])
    return 0 if r.feasible else 1


def cmd_simulate(args, out):
    cfg = _load(args.config)
    frames = _frames(cfg, args.front, args.back)
    s = sched.compile_schedule(frames, cfg.panel, cfg.material, cfg.timing)
    report = sim.simulate_frame(s, cfg.panel, cfg.material, cfg.led, cfg.mask, dt=cfg.dt,
                                stack=cfg.stack)
    out_dir = Path(args.output or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "front.ppm").write_bytes(sim.render_side(report, "A"))
    (out_dir / "back.ppm").write_bytes(sim.render_side(report, "B"))
    mt = report.metrics
    _kv(out, [("brightness_white_cd_m2", mt.brightness_white), ("panel_cr", mt.panel_cr),
              ("crosstalk", mt.crosstalk), ("transparency", mt.transparency),
              ("calibration", report.calibration), ("frames", report.frames_simulated)])
    return 0


def cmd_sweep(args, out):
    ds = study.load_dataset(args.dataset)
    result = study.run_sweep(ds)
    for row in result.rows:
        if row.flag and row.flag != "no data":
            print(f"warning: {row.value}: {row.flag}", file=sys.stderr)
    out.write(study.sweep_csv(result))
    checks = study.check_anchors(result, ds) if args.check else []
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        extra = " (degenerate)" if c.degenerate else ""
        print(f"{status} {c.name}: {c.detail}{extra}", file=sys.stderr)
    if args.output:
        study.emit_charts(result, study.dataset_curves(ds), args.output, stem=ds.name)
    return 0 if all(c.passed for c in checks) else 1


def cmd_render(args, out):
    report = sim.SimulationReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    sides = ("A", "B") if args.side == "both" else (args.side,)
    for side in sides:
        name = "front.ppm" if side == "A" else "back.ppm"
        (out_dir / name).write_bytes(sim.render_side(report, side))
        out.write(f"{out_dir / name}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="duoglass",
        description="Dual-sided transparent LC waveguide display: metrics, drive "
                    "schedules and optical simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    s = sub.add_parser("metrics", help="contrast ratio and saturation voltage of a curve CSV")
    s.add_argument("curve")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("fit", help="fit the logistic response model to a curve CSV")
    s.add_argument("curve")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("transparency", help="mask loss and panel transparency")
    s.add_argument("config", help="config file, named config or panel preset")
    s.set_defaults(func=cmd_transparency)

    s = sub.add_parser("feasibility", help="check sub-frame length against switching times")
    s.add_argument("config")
    s.set_defaults(func=cmd_feasibility)

    s = sub.add_parser("schedule", help="compile or validate drive schedules")
    ssub = s.add_subparsers(dest="action", metavar="ACTION")
    c = ssub.add_parser("compile", help="compile a front/back image pair")
    c.add_argument("config")
    c.add_argument("front", nargs="?")
    c.add_argument("back", nargs="?")
    c.add_argument("-o", "--output", help="schedule file (default: stdout)")
    c.set_defaults(func=cmd_schedule_compile)
    v = ssub.add_parser("validate", help="check a schedule file")
    v.add_argument("schedule")
    v.set_defaults(func=cmd_schedule_validate)

    s = sub.add_parser("simulate", help="simulate a front/back image pair")
    s.add_argument("config")
    s.add_argument("front", nargs="?")
    s.add_argument("back", nargs="?")
    s.add_argument("-o", "--output", help="output directory (default: [output] directory)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="metrics over a study dataset, as CSV")
    s.add_argument("dataset", help=f"dataset file or one of: {', '.join(study.ANCHORS)}")
    s.add_argument("-o", "--output", help="directory for SVG charts")
    s.add_argument("--check", action="store_true", help="also run the anchor checks")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("render", help="render a simulation report to PPM images")
    s.add_argument("report")
    s.add_argument("--side", choices=("A", "B", "both"), default="both")
    s.add_argument("-o", "--output", default=".")
    s.set_defaults(func=cmd_render)
    return p


def cli_dispatch(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if not getattr(args, "func", None):
        target = parser
        if args.command == "schedule":
            target = parser._subparsers._group_actions[0].choices["schedule"]
        target.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args, out)
    except (DuoglassError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch())
