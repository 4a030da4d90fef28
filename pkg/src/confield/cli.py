"""Command line front end: run analysis manifests, print catalog and schema.

``confield run manifest.json`` reads a JSON manifest describing a chart, a
field, and a list of analyses, executes them in the declared order with a
single seeded generator, and emits a JSON report.  Reports are
byte-identical across runs for the same manifest and seed: floats are
written with 17 significant digits through a deterministic writer rather
than the default repr, and non-finite values become strings.

Exit codes: 0 when every analysis passed, 1 when an analysis failed or
raised, 2 for malformed manifests or unusable charts/fields.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .conformal import is_conformal
from .essential import (
    VERDICT_INVALID,
    VERDICT_KILLING,
    classify_zero,
    find_zeros,
    limit_point_audit,
)
from .expr import ExprSyntaxError, parse
from .geodesic import (
    DomainExitError,
    dxi_identity_residual,
    taylor_scalar_check,
    taylor_vector_check,
)
from .geometry import Chart, ChartError, FieldSpec, MetricError, sample_interior
from .models import CHART_BUILDERS, FIELD_BUILDERS, make_chart, make_field
from .zeroset import (
    PatchError,
    trace_component,
    umbilicity_report,
)

__all__ = ["main", "ManifestError", "run_manifest", "render_report"]

ANALYSES = (
    "check-conformal",
    "zeros",
    "classify",
    "verify-identities",
    "trace",
    "umbilicity",
)

DEFAULT_TOLERANCES = {
    "zero": 1e-10,
    "classification": 1e-6,
    "conformal": 1e-7,
    "umbilicity": 1e-4,
    "identity": 1e-7,
}

DEFAULT_SAMPLES = {
    "conformal_points": 100,
    "identity_pairs": 50,
}

DEFAULT_CONFIG = {
    "seed": 0,
    "grid_resolution": 12,
    "isolation_radius": 0.05,
    "trace_radius": 0.3,
    "trace_grid": 5,
    "trace_max_patches": 2,
    "fd_step": 1e-3,
    "geo_steps": 96,
}


class ManifestError(ValueError):
    """The manifest is malformed or names unusable inputs."""


# ---------------------------------------------------------------------------
# deterministic JSON writing


def _format_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(float(x), ".17g")


def _render(obj, indent: int, out: list):
    pad = "  " * indent
    child = "  " * (indent + 1)
    if obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_format_float(float(obj)))
    elif isinstance(obj, np.ndarray):
        _render(obj.tolist(), indent, out)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for k, (key, value) in enumerate(items):
            if not isinstance(key, str):
                raise TypeError(f"report keys must be strings, got {type(key)}")
            out.append(child + json.dumps(key) + ": ")
            _render(value, indent + 1, out)
            out.append(",\n" if k + 1 < len(items) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for k, value in enumerate(obj):
            out.append(child)
            _render(value, indent + 1, out)
            out.append(",\n" if k + 1 < len(obj) else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj)} into a report")


def render_report(report: dict) -> str:
    out: list = []
    _render(report, 0, out)
    out.append("\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# manifest handling


def _require(cond: bool, message: str):
    if not cond:
        raise ManifestError(message)


def _build_chart(spec) -> Chart:
    _require(isinstance(spec, dict), "manifest 'chart' must be an object")
    if "name" in spec and "metric" not in spec:
        _require(spec["name"] in CHART_BUILDERS,
                 f"unknown chart {spec['name']!r}; see 'confield catalog'")
        dim = spec.get("dim")
        _require(isinstance(dim, int) and dim >= 2,
                 "builtin charts need an integer 'dim' >= 2")
        return make_chart(spec["name"], dim)
    _require("metric" in spec, "chart needs either 'name' or 'metric'")
    metric = spec["metric"]
    _require(isinstance(metric, list) and metric
             and all(isinstance(r, list) for r in metric),
             "'metric' must be a non-empty list of rows")
    dim = len(metric)
    _require(all(len(r) == dim for r in metric), "'metric' must be square")
    _require("lower" in spec and "upper" in spec,
             "inline charts need 'lower' and 'upper' bounds")
    lower, upper = spec["lower"], spec["upper"]
    _require(isinstance(lower, list) and isinstance(upper, list)
             and len(lower) == dim and len(upper) == dim,
             "'lower'/'upper' must be lists matching the metric dimension")
    try:
        rows = tuple(
            tuple(parse(str(entry), dim) for entry in row) for row in metric
        )
    except ExprSyntaxError as exc:
        raise ManifestError(f"bad metric expression: {exc}") from exc
    try:
        chart = Chart(dim=dim, lower=np.asarray(lower, dtype=float),
                      upper=np.asarray(upper, dtype=float), metric=rows,
                      name=str(spec.get("name", "inline_chart")))
        chart.validate_spd(np.random.default_rng(0), samples=10)
    except (ChartError, MetricError, ValueError) as exc:
        raise ManifestError(f"unusable chart: {exc}") from exc
    return chart


def _build_field(chart: Chart, spec) -> FieldSpec:
    _require(isinstance(spec, dict), "manifest 'field' must be an object")
    if "name" in spec and "components" not in spec:
        _require(spec["name"] in FIELD_BUILDERS,
                 f"unknown field {spec['name']!r}; see 'confield catalog'")
        params = spec.get("params", {})
        _require(isinstance(params, dict), "'params' must be an object")
        try:
            return make_field(chart, spec["name"], params)
        except ValueError as exc:
            raise ManifestError(str(exc)) from exc
    _require("components" in spec, "field needs either 'name' or 'components'")
    comps = spec["components"]
    _require(isinstance(comps, list) and len(comps) == chart.dim,
             f"'components' must list {chart.dim} expressions")
    try:
        exprs = tuple(parse(str(c), chart.dim) for c in comps)
    except ExprSyntaxError as exc:
        raise ManifestError(f"bad field expression: {exc}") from exc
    return FieldSpec.vector(chart, exprs, name=str(spec.get("name", "inline_field")))


def _resolve_config(manifest: dict, args) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    tolerances = dict(DEFAULT_TOLERANCES)
    samples = dict(DEFAULT_SAMPLES)
    for key in cfg:
        if key in manifest:
            cfg[key] = manifest[key]
    if "tolerances" in manifest:
        _require(isinstance(manifest["tolerances"], dict),
                 "'tolerances' must be an object")
        for key, value in manifest["tolerances"].items():
            _require(key in tolerances,
                     f"unknown tolerance {key!r}; known: {sorted(tolerances)}")
            tolerances[key] = float(value)
    if "samples" in manifest:
        _require(isinstance(manifest["samples"], dict), "'samples' must be an object")
        for key, value in manifest["samples"].items():
            _require(key in samples,
                     f"unknown sample count {key!r}; known: {sorted(samples)}")
            samples[key] = int(value)

    overrides = {
        "seed": args.seed,
        "grid_resolution": args.grid_resolution,
        "isolation_radius": args.isolation_radius,
        "trace_radius": args.trace_radius,
        "trace_grid": args.trace_grid,
        "fd_step": args.fd_step,
        "geo_steps": args.geo_steps,
    }
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    if args.zero_tol is not None:
        tolerances["zero"] = args.zero_tol
    if args.class_tol is not None:
        tolerances["classification"] = args.class_tol
    if args.conformal_tol is not None:
        tolerances["conformal"] = args.conformal_tol
    if args.umbilicity_tol is not None:
        tolerances["umbilicity"] = args.umbilicity_tol
    if args.identity_tol is not None:
        tolerances["identity"] = args.identity_tol

    cfg["tolerances"] = tolerances
    cfg["samples"] = samples
    _require(isinstance(cfg["seed"], int), "'seed' must be an integer")
    _require(int(cfg["grid_resolution"]) >= 3, "'grid_resolution' must be >= 3")
    _require(int(cfg["trace_grid"]) >= 3 and int(cfg["trace_grid"]) % 2 == 1,
             "'trace_grid' must be an odd integer >= 3")
    return cfg


def _resolve_analyses(manifest: dict) -> list:
    analyses = manifest.get("analyses", ["all"])
    _require(isinstance(analyses, list) and analyses,
             "'analyses' must be a non-empty list")
    resolved = []
    for name in analyses:
        if name == "all":
            resolved.extend(a for a in ANALYSES if a not in resolved)
            continue
        _require(name in ANALYSES,
                 f"unknown analysis {name!r}; known: {list(ANALYSES)} or 'all'")
        if name not in resolved:
            resolved.append(name)
    return resolved


# ---------------------------------------------------------------------------
# analysis execution


class _Session:
    """Shared lazily-computed state threaded through the analyses."""

    def __init__(self, chart, xi, cfg, rng):
        self.chart = chart
        self.xi = xi
        self.cfg = cfg
        self.rng = rng
        self._zeros = None
        self._patches = None

    @property
    def zeros(self):
        if self._zeros is None:
            self._zeros = find_zeros(
                self.chart,
                self.xi,
                grid_resolution=int(self.cfg["grid_resolution"]),
                tol=self.cfg["tolerances"]["zero"],
            )
        return self._zeros

    def patches(self):
        if self._patches is not None:
            return self._patches
        tol = self.cfg["tolerances"]
        built = []
        errors = []
        limit = int(self.cfg["trace_max_patches"])
        for z in self.zeros:
            if len(built) >= limit:
                break
            try:
                patch = trace_component(
                    self.chart,
                    self.xi,
                    z,
                    radius=self.cfg["trace_radius"],
                    grid=int(self.cfg["trace_grid"]),
                    class_tol=tol["classification"],
                    conformal_tol=tol["conformal"],
                    steps_per_unit=float(self.cfg["geo_steps"]),
                    rng=self.rng,
                )
            except PatchError as exc:
                errors.append({"zero": z, "reason": str(exc)})
                continue
            except DomainExitError as exc:
                errors.append({"zero": z, "reason": str(exc)})
                continue
            built.append(patch)
        self._patches = (built, errors)
        return self._patches


def _run_check_conformal(session: _Session) -> dict:
    cfg = session.cfg
    pts = sample_interior(session.chart, cfg["samples"]["conformal_points"], session.rng)
    report = is_conformal(session.chart, session.xi, pts, cfg["tolerances"]["conformal"])
    return {
        "passed": bool(report.conformal),
        "samples": int(len(report.points)),
        "max_residual": report.max_residual,
        "worst_point": report.worst_point,
        "tolerance": report.tolerance,
    }


def _run_zeros(session: _Session) -> dict:
    zeros = session.zeros
    return {
        "passed": True,
        "count": int(len(zeros)),
        "points": zeros,
        "tolerance": session.cfg["tolerances"]["zero"],
        "grid_resolution": int(session.cfg["grid_resolution"]),
    }


def _run_classify(session: _Session) -> dict:
    cfg = session.cfg
    tol = cfg["tolerances"]
    zeros = session.zeros
    entries = []
    verdicts_ok = True
    for z in zeros:
        cls = classify_zero(
            session.chart,
            session.xi,
            z,
            tol=tol["classification"],
            conformal_tol=tol["conformal"],
            rng=session.rng,
        )
        verdicts_ok = verdicts_ok and cls.verdict != VERDICT_INVALID
        entries.append(
            {
                "point": cls.point,
                "verdict": cls.verdict,
                "phi": cls.phi,
                "image_residual": cls.image_residual,
                "kernel_dim": cls.kernel_dim,
                "rank_dxi": cls.rank_dxi,
                "neighborhood_residual": cls.neighborhood_residual,
            }
        )
    audit = None
    if len(zeros):
        audit_result = limit_point_audit(
            session.chart,
            session.xi,
            zeros,
            radius=cfg["isolation_radius"],
            tol=tol["classification"],
            conformal_tol=tol["conformal"],
            rng=session.rng,
        )
        audit = {
            "radius": audit_result.radius,
            "assertions": audit_result.assertions,
            "passed": audit_result.passed,
        }
    passed = verdicts_ok and (audit is None or audit["passed"])
    return {
        "passed": bool(passed),
        "entries": entries,
        "audit": audit,
        "tolerance": tol["classification"],
    }


def _run_verify_identities(session: _Session) -> dict:
    cfg = session.cfg
    tol = cfg["tolerances"]["identity"]
    pairs = cfg["samples"]["identity_pairs"]
    pts = sample_interior(session.chart, pairs, session.rng)
    dirs = session.rng.normal(size=(pairs, session.chart.dim))
    worst = 0.0
    for p, X in zip(pts, dirs):
        worst = max(worst, dxi_identity_residual(session.chart, session.xi, p, X))
    result = {
        "pairs": int(pairs),
        "max_identity_residual": worst,
        "identity_tolerance": tol,
    }
    passed = worst < tol

    taylor = []
    for z in session.zeros[:4]:
        v = session.rng.normal(size=session.chart.dim)
        try:
            scalar = taylor_scalar_check(
                session.chart, session.xi, z, v, fd_step=cfg["fd_step"]
            )
            vector = taylor_vector_check(
                session.chart, session.xi, z, v, fd_step=cfg["fd_step"]
            )
        except DomainExitError as exc:
            taylor.append({"zero": z, "skipped": str(exc)})
            continue
        entry_ok = (
            scalar.derivative_residual < 1e-6
            and vector.first_residual < 1e-6
            and vector.second_residual < 1e-4
        )
        passed = passed and entry_ok
        taylor.append(
            {
                "zero": z,
                "scalar_residual": scalar.derivative_residual,
                "remainder_order": scalar.remainder_order,
                "vector_first_residual": vector.first_residual,
                "vector_second_residual": vector.second_residual,
                "passed": bool(entry_ok),
            }
        )
    result["taylor_at_zeros"] = taylor
    result["passed"] = bool(passed)
    return result


def _run_trace(session: _Session) -> dict:
    built, errors = session.patches()
    patches = []
    for patch in built:
        patches.append(
            {
                "base": patch.base,
                "k": patch.k,
                "codim": patch.codim,
                "max_field_norm": patch.max_field_norm,
                "radius": session.cfg["trace_radius"],
                "grid": int(session.cfg["trace_grid"]),
            }
        )
    skipped = [
        {"zero": e["zero"], "reason": e["reason"]} for e in errors
    ]
    return {
        "passed": True,
        "patches": patches,
        "skipped": skipped,
        "zeros_considered": int(len(built) + len(errors)),
    }


def _run_umbilicity(session: _Session) -> dict:
    built, _ = session.patches()
    tol = session.cfg["tolerances"]["umbilicity"]
    entries = []
    passed = True
    for patch in built:
        report = umbilicity_report(session.chart, patch, tol=tol)
        ok = report.verdict in ("totally_umbilical", "point")
        if patch.k > 0:
            ok = ok and report.codim_even
        passed = passed and ok
        entries.append(
            {
                "base": patch.base,
                "k": patch.k,
                "verdict": report.verdict,
                "max_residual": report.max_residual,
                "codim": report.codim,
                "codim_even": report.codim_even,
                "mean_curvature_norms": report.mean_curvature_norms,
                "passed": bool(ok),
            }
        )
    return {
        "passed": bool(passed),
        "tolerance": tol,
        "patches": entries,
    }


_RUNNERS = {
    "check-conformal": _run_check_conformal,
    "zeros": _run_zeros,
    "classify": _run_classify,
    "verify-identities": _run_verify_identities,
    "trace": _run_trace,
    "umbilicity": _run_umbilicity,
}


def run_manifest(manifest: dict, args) -> tuple[dict, int]:
    """Execute a parsed manifest; returns (report, exit_code)."""
    _require(isinstance(manifest, dict), "manifest root must be a JSON object")
    _require("chart" in manifest, "manifest needs a 'chart' entry")
    _require("field" in manifest, "manifest needs a 'field' entry")
    chart = _build_chart(manifest["chart"])
    xi = _build_field(chart, manifest["field"])
    analyses = _resolve_analyses(manifest)
    cfg = _resolve_config(manifest, args)
    rng = np.random.default_rng(cfg["seed"])
    session = _Session(chart, xi, cfg, rng)

    results = {}
    overall = True
    exit_code = 0
    for name in analyses:
        try:
            outcome = _RUNNERS[name](session)
        except Exception as exc:  # analysis-level failure, not a usage error
            outcome = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        if not outcome.get("passed", False):
            overall = False
            exit_code = 1
        results[name] = outcome

    report = {
        "version": __version__,
        "chart": {
            "name": chart.name,
            "dim": chart.dim,
            "lower": chart.lower,
            "upper": chart.upper,
        },
        "field": {
            "name": xi.name,
            "components": [str(c) for c in xi.components],
        },
        "config": cfg,
        "analyses": results,
        "passed": bool(overall),
    }
    return report, exit_code


# ---------------------------------------------------------------------------
# subcommands


def _schema() -> dict:
    return {
        "type": "object",
        "required": ["chart", "field"],
        "properties": {
            "chart": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["name", "dim"],
                        "properties": {
                            "name": {"enum": sorted(CHART_BUILDERS)},
                            "dim": {"type": "integer", "minimum": 2},
                        },
                    },
                    {
                        "type": "object",
                        "required": ["metric", "lower", "upper"],
                        "properties": {
                            "metric": {
                                "type": "array",
                                "items": {"type": "array", "items": {"type": "string"}},
                            },
                            "lower": {"type": "array", "items": {"type": "number"}},
                            "upper": {"type": "array", "items": {"type": "number"}},
                            "name": {"type": "string"},
                        },
                    },
                ]
            },
            "field": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["name"],
                        "properties": {
                            "name": {"enum": sorted(FIELD_BUILDERS)},
                            "params": {"type": "object"},
                        },
                    },
                    {
                        "type": "object",
                        "required": ["components"],
                        "properties": {
                            "components": {"type": "array", "items": {"type": "string"}},
                            "name": {"type": "string"},
                        },
                    },
                ]
            },
            "analyses": {
                "type": "array",
                "items": {"enum": list(ANALYSES) + ["all"]},
            },
            "tolerances": {
                "type": "object",
                "properties": {k: {"type": "number"} for k in DEFAULT_TOLERANCES},
                "additionalProperties": False,
            },
            "samples": {
                "type": "object",
                "properties": {k: {"type": "integer"} for k in DEFAULT_SAMPLES},
                "additionalProperties": False,
            },
            **{
                key: {"type": "integer" if isinstance(val, int) else "number"}
                for key, val in DEFAULT_CONFIG.items()
                if key not in ("tolerances", "samples")
            },
        },
    }


def _catalog() -> dict:
    return {
        "charts": [
            {"name": "euclidean", "params": ["dim"],
             "about": "flat metric on the box [-2, 2]^dim"},
            {"name": "sphere_stereographic", "params": ["dim"],
             "about": "round sphere, curvature +1, stereographic box [-3, 3]^dim"},
            {"name": "hyperbolic_ball", "params": ["dim"],
             "about": "Poincare ball, curvature -1, box of half-width 0.9/sqrt(dim)"},
        ],
        "fields": [
            {"name": "translation", "params": {"axis": "int, default 1"}},
            {"name": "rotation", "params": {"axis_i": "int, default 1",
                                            "axis_j": "int, default 2"}},
            {"name": "euler", "params": {}},
            {"name": "special_conformal", "params": {"axis": "int, default 1"}},
            {"name": "sphere_killing", "params": {"axis_i": "int, default 1",
                                                  "axis_j": "int, default 2"}},
            {"name": "sphere_translation", "params": {"axis": "int, default 1"}},
        ],
        "analyses": list(ANALYSES),
    }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confield",
        description="analyze conformal vector fields on coordinate charts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an analysis manifest")
    run.add_argument("manifest", help="path to a JSON manifest")
    run.add_argument("--out", help="write the report to this file instead of stdout")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--zero-tol", type=float, default=None)
    run.add_argument("--class-tol", type=float, default=None)
    run.add_argument("--conformal-tol", type=float, default=None)
    run.add_argument("--umbilicity-tol", type=float, default=None)
    run.add_argument("--identity-tol", type=float, default=None)
    run.add_argument("--isolation-radius", type=float, default=None)
    run.add_argument("--grid-resolution", type=int, default=None)
    run.add_argument("--trace-radius", type=float, default=None)
    run.add_argument("--trace-grid", type=int, default=None)
    run.add_argument("--fd-step", type=float, default=None)
    run.add_argument("--geo-steps", type=int, default=None)

    sub.add_parser("schema", help="print the manifest schema as JSON")
    sub.add_parser("catalog", help="print builtin charts, fields, analyses")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "schema":
        sys.stdout.write(render_report(_schema()))
        return 0
    if args.command == "catalog":
        sys.stdout.write(render_report(_catalog()))
        return 0

    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: manifest is not valid JSON: {exc}", file=sys.stderr)
        return 2

    try:
        report, exit_code = run_manifest(manifest, args)
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    text = render_report(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
