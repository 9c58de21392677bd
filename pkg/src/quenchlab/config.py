"""Run configuration: one human-editable INI file per experiment.

Values are JSON fragments (so lists and floats read unambiguously); sections
name the pieces of the run.  Analyses are ordered sections [analysis.NAME]
executed in file order.  Every embedded invariant is validated eagerly so a
bad config fails before any work starts.
"""

import configparser
import hashlib
import json
from dataclasses import dataclass, field as dc_field
from typing import Any, Dict, List, Optional

import numpy as np

from .errors import ValidationError
from .exact import geometric_times
from .grid import GridSpec
from .params import ModelParams
from .solver import BoundaryData, SolverConfig, ANALYTIC_TRACE, CONSTANT, PERIODIC_BC

KNOWN_OPS = (
    "density_estimate",
    "almgren_scan",
    "holder_seminorm",
    "rupture_dimension",
    "apriori_scaling",
    "two_valued_check",
    "comparison_guard",
    "self_similarity",
)

RUN_MODES = ("solve", "synthetic", "load")


@dataclass
class AnalysisRequest:
    name: str
    op: str
    options: Dict[str, Any] = dc_field(default_factory=dict)


@dataclass
class RunConfig:
    mode: str
    model: ModelParams
    grid: GridSpec
    seed: int
    output_dir: str
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    boundary: Optional[BoundaryData] = None
    initial: Dict[str, Any] = dc_field(default_factory=dict)
    synthetic: Dict[str, Any] = dc_field(default_factory=dict)
    times: Dict[str, Any] = dc_field(default_factory=dict)
    field_path: Optional[str] = None
    analyses: List[AnalysisRequest] = dc_field(default_factory=list)
    raw_text: str = ""

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.raw_text.encode()).hexdigest()


def _parse_value(section: str, key: str, raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip()


def _section(parser, name) -> Dict[str, Any]:
    if not parser.has_section(name):
        return {}
    return {k: _parse_value(name, k, v) for k, v in parser.items(name)}


def _require(d: Dict[str, Any], section: str, key: str):
    if key not in d:
        raise ValidationError(f"[{section}] is missing required key {key!r}")
    return d[key]


def build_times(spec: Dict[str, Any]) -> np.ndarray:
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))
    if kind == "geometric":
        return geometric_times(float(spec["start"]), float(spec["stop"]), float(spec["ratio"]))
    if kind == "explicit":
        return np.asarray(spec["values"], dtype=float)
    raise ValidationError(f"[times] unknown kind {kind!r} (uniform|geometric|explicit)")


def _build_boundary(spec: Dict[str, Any], model: ModelParams) -> Optional[BoundaryData]:
    if not spec:
        return None
    kind = spec.get("kind", CONSTANT)
    if kind == CONSTANT:
        return BoundaryData(kind=CONSTANT, value=float(spec.get("value", 1.0)))
    if kind == PERIODIC_BC:
        return BoundaryData(kind=PERIODIC_BC)
    if kind == "ode_trace":
        from .exact import ode_solution
        t_q = float(spec.get("t_quench", 1.0))

        def fn(xs, t, _tq=t_q, _m=model):
            return np.full(xs.shape[0], ode_solution(_m, t - _tq))

        return BoundaryData(kind=ANALYTIC_TRACE, value_fn=fn)
    if kind == "radial_trace":
        from .exact import radial_steady_coeff
        c = radial_steady_coeff(model)
        a = model.alpha

        def fn(xs, t, _c=c, _a=a):
            return _c * np.linalg.norm(xs, axis=-1) ** _a

        return BoundaryData(kind=ANALYTIC_TRACE, value_fn=fn)
    raise ValidationError(
        f"[boundary] unknown kind {kind!r} (constant|periodic|ode_trace|radial_trace)")


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config parse error: {exc}") from exc

    run = _section(parser, "run")
    mode = run.get("mode", "solve")
    if mode not in RUN_MODES:
        raise ValidationError(f"[run] mode must be one of {RUN_MODES}, got {mode!r}")
    seed = int(run.get("seed", 0))
    output_dir = str(run.get("output_dir", "quenchlab-run"))

    msec = _section(parser, "model")
    model = ModelParams(p=float(_require(msec, "model", "p")),
                        n=int(_require(msec, "model", "n")))

    gsec = _section(parser, "grid")
    grid = GridSpec(
        origin=_require(gsec, "grid", "origin"),
        extent=_require(gsec, "grid", "extent"),
        cells=_require(gsec, "grid", "cells"),
        time_start=float(_require(gsec, "grid", "time_start")),
        time_end=float(_require(gsec, "grid", "time_end")),
    )

    ssec = _section(parser, "solver")
    solver = SolverConfig(**{k: (int(v) if k in ("max_steps", "store_stride")
                                 else bool(v) if k == "reaction_enabled" else float(v))
                             for k, v in ssec.items()})

    boundary = _build_boundary(_section(parser, "boundary"), model)
    if mode == "solve" and boundary is None:
        raise ValidationError("[boundary] section is required in solve mode")

    analyses = []
    for name in parser.sections():
        if not name.startswith("analysis"):
            continue
        spec = _section(parser, name)
        op = spec.pop("op", None)
        if op not in KNOWN_OPS:
            raise ValidationError(
                f"[{name}] unknown analysis op {op!r}; known operations: {', '.join(KNOWN_OPS)}")
        analyses.append(AnalysisRequest(name=name, op=op, options=spec))

    cfg = RunConfig(
        mode=mode, model=model, grid=grid, seed=seed, output_dir=output_dir,
        solver=solver, boundary=boundary,
        initial=_section(parser, "initial"),
        synthetic=_section(parser, "synthetic"),
        times=_section(parser, "times"),
        field_path=run.get("field_path"),
        analyses=analyses, raw_text=text,
    )
    if mode == "load" and not cfg.field_path:
        raise ValidationError("[run] field_path is required in load mode")
    if mode == "synthetic" and not cfg.synthetic:
        raise ValidationError("[synthetic] section is required in synthetic mode")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
