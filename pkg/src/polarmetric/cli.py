"""Command-line entry point.

Every command loads a metric spec (a JSON path or the name of a shipped
model), runs one analysis and writes ``<command>.<model>.json`` (plus CSV
and SVG files where there is tabular data) into ``--out``.

Exit codes: 0 success, 2 the input violates a hypothesis, 3 a numerical
method failed.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import NumericalError, PolarMetricError, UnknownKind, UsageError, ValidationError
from .expr import ExprError
from .io import write_csv, write_json
from .metric import MetricModel, load_model, validate

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunConfig:
    command: str
    spec: str
    out: Path = Path(".")
    tol: dict = field(default_factory=dict)
    seed: int = 0
    grid: int = 3
    s_range: tuple[float, float] = (-0.3, 0.3)
    sigma: str | None = None
    start: list[float] | None = None


class Outcome:
    """Collects the report and the list of written files of one command."""

    def __init__(self, cfg: RunConfig, model: MetricModel):
        self.cfg = cfg
        self.model = model
        self.files: list[Path] = []

    def path(self, command: str, ext: str) -> Path:
        return self.cfg.out / f"{command}.{self.model.name}.{ext}"

    def json(self, command: str, report: dict) -> dict:
        self.files.append(write_json(self.path(command, "json"), report))
        return report

    def csv(self, command: str, header, rows) -> None:
        self.files.append(write_csv(self.path(command, "csv"), header, rows))


# -- commands ---------------------------------------------------------------------

def _normal_field(model: MetricModel) -> list[str]:
    comps = ["0"] * model.m
    comps[model.normal_index] = "1"
    return comps


def cmd_validate(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    rep = validate(model, seed=cfg.seed)
    out.json("validate", rep)
    return EXIT_OK if rep["D1"] and rep["D2"] else EXIT_VALIDATION


def _require_valid(model: MetricModel, cfg: RunConfig) -> None:
    rep = validate(model, seed=cfg.seed)
    if not (rep["D1"] and rep["D2"]):
        failed = "D1" if not rep["D1"] else "D2"
        raise ValidationError(f"model {model.name!r} fails {failed}")


def cmd_frames(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .expr import derive
    from .frames import dual_frame, normal_form_deviation, polar_frame_from_transversal, radstar_coframe
    _require_valid(model, cfg)
    pts = np.vstack([model.boundary_samples(4, seed=cfg.seed),
                     model.interior_samples(4, seed=cfg.seed, min_tau=0.05)])
    frame = polar_frame_from_transversal(model, _normal_field(model))
    mu = [derive(model.tau_expr, c) for c in model.coords]
    cof = radstar_coframe(model, mu)
    inner = pts[[abs(model.tau(p)) > 0 for p in pts]]
    rep = {"model": model.name, "coords": list(model.coords),
           "transversal": {"field": _normal_field(model), "samples": frame.sample_table(inner),
                           "normal_form_deviation": normal_form_deviation(frame, inner)},
           "radstar": {"mu": [str(e) for e in mu],
                       "normal_form_deviation": normal_form_deviation(cof, pts),
                       "dual_frame_deviation": normal_form_deviation(dual_frame(cof), inner)}}
    out.json("frames", rep)
    return EXIT_OK


def cmd_normal(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .connection import beta_form, polar_normal_field
    _require_valid(model, cfg)
    N = polar_normal_field(model)
    rows = []
    for p in model.boundary_samples(4, seed=cfg.seed):
        beta = beta_form(model, N, p)
        rows.append({"point": p.tolist(), "direction": N.direction(p).tolist(),
                     "lambda": N.lam(p).tolist(), "beta": beta.gamma.tolist()})
    rep = {"model": model.name, "points": rows,
           "max_abs_beta": max(float(np.max(np.abs(r["beta"]), initial=0.0)) for r in rows)}
    out.json("normal", rep)
    return EXIT_OK


def cmd_geodesic(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .geodesic import integrate_pregeodesic, linearize_at_boundary
    from .natcoords import crossing_law_residuals, natural_parameter
    from .plotting import emit_plot_data
    _require_valid(model, cfg)
    if cfg.start is not None:
        p = np.asarray(cfg.start, dtype=float)
        if p.size != model.m:
            raise UsageError(f"--from needs {model.m} coordinates")
        p = model.boundary_point(p)
    else:
        p = model.boundary_point(model.center)
    lin = linearize_at_boundary(model, p)
    traj = integrate_pregeodesic(model, p, xi=lin.xi)
    nat = natural_parameter(traj)
    lo, hi = nat.s_range
    s_probe = [s for s in np.linspace(lo, hi, 9)[1:-1] if abs(s) > 1e-3]
    rep = {"model": model.name, "point": p.tolist(), "linearization": lin.as_dict(),
           "crossing_direction": traj.crossing_direction().tolist(),
           "t_range": list(traj.t_range), "s_range": [lo, hi],
           "crossing_law_max_residual": float(np.max(np.abs(crossing_law_residuals(nat, s_probe)))),
           "steps": int(len(traj.t))}
    out.json("geodesic", rep)
    out.csv("geodesic", traj.header(), traj.rows())
    out.files += emit_plot_data(traj, "trajectory", cfg.out, model.name)
    return EXIT_OK


def cmd_chart(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .natcoords import build_natural_chart, validate_natural_chart
    _require_valid(model, cfg)
    chart = build_natural_chart(model, s_range=cfg.s_range, grid=cfg.grid)
    checks = validate_natural_chart(chart)
    rep = {"model": model.name, "columns": chart.header(), "meta": chart.meta, "checks": checks}
    out.json("chart", rep)
    out.csv("chart", chart.header(), chart.rows())
    return EXIT_OK if checks["ok"] else EXIT_NUMERIC


def cmd_curvature(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .curvature import (SymbolicSource, boundary_curvature_compare, decay_table,
                            extendibility_report, flatness_criterion)
    from .plotting import emit_plot_data
    _require_valid(model, cfg)
    src = SymbolicSource(model)
    p = model.boundary_point(model.center)
    rep = extendibility_report(src, p)
    flat = flatness_criterion(src, p, report=rep)
    rows = decay_table(src, p)
    table = np.array(rows)
    fit = np.polyfit(np.log(table[:, 0]), np.log(np.maximum(np.abs(table[:, 1]), 1e-300)), 1)
    doc = {"model": model.name, "report": rep.as_dict(), "flatness": flat,
           "decay_exponent_R_mm": float(fit[0])}
    if model.m >= 3:
        doc["boundary_curvature"] = boundary_curvature_compare(src, p)
    out.json("curvature", doc)
    out.files += emit_plot_data(rows, "decay", cfg.out, model.name)
    return EXIT_OK


def cmd_conformal(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .conformal import pregeodesic_family_compare, polar_normal_shift, rescale
    if not cfg.sigma:
        raise UsageError("conformal needs --sigma EXPR")
    _require_valid(model, cfg)
    other = rescale(model, cfg.sigma)
    rep = {"model": model.name, "sigma": cfg.sigma, "rescaled_validation": other.validation,
           "pregeodesics": pregeodesic_family_compare(model, other, seed=cfg.seed),
           "polar_normal": polar_normal_shift(model, other, seed=cfg.seed)}
    out.json("conformal", rep)
    return EXIT_OK


def cmd_rw_probe(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    from .conformal import robertson_walker_probe
    from .plotting import emit_plot_data
    _require_valid(model, cfg)
    rep = robertson_walker_probe(model, seed=cfg.seed)
    out.json("rw-probe", rep)
    out.files += emit_plot_data(rep["leaves"], "leaf", cfg.out, model.name)
    return EXIT_OK if rep["robertson_walker"] else EXIT_NUMERIC


def cmd_report(cfg: RunConfig, model: MetricModel, out: Outcome) -> int:
    """Full pipeline; steps whose hypotheses do not hold are recorded, not fatal."""
    from .curvature import is_natural_form
    steps: list[tuple[str, Callable]] = [("validate", cmd_validate), ("frames", cmd_frames),
                                         ("normal", cmd_normal), ("geodesic", cmd_geodesic),
                                         ("chart", cmd_chart)]
    if is_natural_form(model):
        steps.append(("curvature", cmd_curvature))
    if cfg.sigma:
        steps.append(("conformal", cmd_conformal))
    if model.m == 4 and is_natural_form(model):
        steps.append(("rw-probe", cmd_rw_probe))
    results = {}
    worst = EXIT_OK
    for name, fn in steps:
        code, err = _guarded(fn, cfg, model, out)
        entry = {"exit": code}
        if err is not None:
            entry["error"] = err
        else:
            entry["file"] = out.path(name, "json").name
        results[name] = entry
        worst = max(worst, code)
        if name == "validate" and code != EXIT_OK:
            break
    out.json("report", {"model": model.name, "seed": cfg.seed, "steps": results})
    return worst


COMMANDS: dict[str, Callable[[RunConfig, MetricModel, Outcome], int]] = {
    "validate": cmd_validate, "frames": cmd_frames, "normal": cmd_normal,
    "geodesic": cmd_geodesic, "chart": cmd_chart, "curvature": cmd_curvature,
    "conformal": cmd_conformal, "rw-probe": cmd_rw_probe, "report": cmd_report,
}


# -- driver ------------------------------------------------------------------------

def error_code(err: BaseException) -> str:
    module = getattr(err, "module", None) or ("expr" if isinstance(err, ExprError) else "polarmetric")
    return f"{module}.{type(err).__name__}"


def exit_code_for(err: BaseException) -> int:
    if isinstance(err, (ValidationError, ExprError)):
        return EXIT_VALIDATION
    if isinstance(err, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(err, PolarMetricError):
        return EXIT_NUMERIC
    raise err


def _guarded(fn, cfg: RunConfig, model: MetricModel, out: Outcome) -> tuple[int, dict | None]:
    try:
        return fn(cfg, model, out), None
    except (PolarMetricError, ExprError, ArithmeticError, np.linalg.LinAlgError) as err:
        return exit_code_for(err), {"code": error_code(err), "message": str(err)}


def run(cfg: RunConfig) -> tuple[int, list[Path]]:
    """Execute one command; returns the exit code and the written files."""
    if cfg.command not in COMMANDS:
        raise UnknownKind(f"unknown command {cfg.command!r}")
    model = load_model(cfg.spec)
    model.tolerances.update(cfg.tol)
    out = Outcome(cfg, model)
    code, err = _guarded(COMMANDS[cfg.command], cfg, model, out)
    if err is not None:
        out.json(cfg.command, {"model": model.name, "error": err})
        print(f"polarmetric: error [{err['code']}]: {err['message']}", file=sys.stderr)
    return code, out.files


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"{what}: expected comma-separated numbers") from err


def _tol(text: str) -> tuple[str, float]:
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("--tol expects KEY=VAL")
    try:
        return key.strip(), float(val)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"--tol {key}: value is not a number") from err


def _s_range(text: str) -> tuple[float, float]:
    vals = _floats(text, "--s-range")
    if len(vals) != 2 or not vals[0] < 0.0 < vals[1]:
        raise argparse.ArgumentTypeError("--s-range expects A,B with A < 0 < B")
    return vals[0], vals[1]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polarmetric", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("spec", help="metric spec JSON file or shipped model name (m0..m7)")
    ap.add_argument("--out", type=Path, default=Path("."), help="output directory")
    ap.add_argument("--tol", type=_tol, action="append", default=[], metavar="KEY=VAL",
                    help="override a model tolerance (repeatable)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--grid", type=int, default=3, help="boundary nodes per axis for chart")
    ap.add_argument("--s-range", type=_s_range, default=(-0.3, 0.3), metavar="A,B")
    ap.add_argument("--sigma", default=None, metavar="EXPR", help="conformal exponent")
    ap.add_argument("--from", dest="start", type=lambda s: _floats(s, "--from"), default=None,
                    metavar="P1,...,Pm", help="boundary point for geodesic")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command, spec=args.spec, out=args.out, tol=dict(args.tol),
                    seed=args.seed, grid=args.grid, s_range=tuple(args.s_range), sigma=args.sigma,
                    start=args.start)
    try:
        code, files = run(cfg)
    except (PolarMetricError, ExprError) as err:
        print(f"polarmetric: error [{error_code(err)}]: {err}", file=sys.stderr)
        return exit_code_for(err)
    for f in files:
        print(f)
    return code


if __name__ == "__main__":
    sys.exit(main())
