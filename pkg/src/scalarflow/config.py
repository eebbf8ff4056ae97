"""YAML run configuration.

A config file has the sections ``metric``, ``grid``, ``f``, ``cutoff``,
``barriers``, ``flow``, ``audit``, ``output`` and ``seed``.  Every optional
key and its default is listed in :data:`SCHEMA`; :meth:`RunConfig.canonical`
returns the fully populated form, which re-parses to the same config.

Example::

    metric: {preset: exp-warp, params: {rate: 1.0}}
    grid: {n: 2, shape: [64, 64], length: 6.283185307179586}
    f: {family: time-profile, params: {amplitude: 1.0, rate: 1.0, center: 1.0}}
    cutoff: {k: 4.0}
    barriers:
      upper: {level: 2.0}
      lower: {level: 0.0}
    flow: {scheme: heun, dt_safety: 0.45, t_max: 60.0}
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .ambient import PRESETS, AmbientMetric, make_metric
from .errors import ConfigError
from .flow import SCHEMES, FlowConfig
from .prescribe import FAMILIES, AuditSpec, CutoffConfig, PrescribedCurvature, make_f
from .surface import GraphFunction, GridChart, read_snapshot_bin

_number = {"type": "number"}
_mode = {
    "type": "object",
    "properties": {
        "axis": {"type": "integer", "minimum": 0},
        "wavenumber": {"type": "integer"},
        "amplitude": _number,
        "phase": {**_number, "default": 0.0},
    },
    "required": ["axis", "wavenumber", "amplitude"],
    "additionalProperties": False,
}
_barrier = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "level": _number,
                "modes": {"type": "array", "items": _mode, "default": []},
            },
            "required": ["level"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"snapshot": {"type": "string"}},
            "required": ["snapshot"],
            "additionalProperties": False,
        },
    ]
}

# barrier fields are level + sum_m amplitude * sin(wavenumber * x[axis] + phase)
SCHEMA = {
    "type": "object",
    "properties": {
        "metric": {
            "type": "object",
            "properties": {
                "preset": {"enum": list(PRESETS)},
                "params": {"type": "object", "additionalProperties": _number, "default": {}},
            },
            "required": ["preset"],
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 2},
                "shape": {"type": "array", "items": {"type": "integer", "minimum": 8}},
                "spacing": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "length": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["n", "shape"],
            "additionalProperties": False,
        },
        "f": {
            "type": "object",
            "properties": {
                "family": {"enum": list(FAMILIES)},
                "params": {"type": "object", "additionalProperties": _number, "default": {}},
                "sqrt_mode": {"type": "boolean", "default": False},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
        "cutoff": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "properties": {"k": {"type": "number", "exclusiveMinimum": 1}},
                    "required": ["k"],
                    "additionalProperties": False,
                },
            ],
            "default": None,
        },
        "barriers": {
            "type": "object",
            "properties": {
                "upper": _barrier,
                "lower": {"oneOf": [{"type": "null"}, _barrier], "default": None},
            },
            "required": ["upper"],
            "additionalProperties": False,
        },
        "flow": {
            "type": "object",
            "properties": {
                "scheme": {"enum": list(SCHEMES), "default": "euler"},
                "dt_safety": {"type": "number", "exclusiveMinimum": 0, "maximum": 1, "default": 0.2},
                "t_max": {"type": "number", "minimum": 0, "default": 50.0},
                "tol_converge": {"type": "number", "exclusiveMinimum": 0, "default": 1e-8},
                "tol_sign": {"type": "number", "minimum": 0, "default": 1e-10},
                "monitor_every": {"type": "integer", "minimum": 1, "default": 1},
                "ceiling_factor": {"type": "number", "exclusiveMinimum": 1, "default": 2.0},
                "vtilde_ceiling": {"type": ["number", "null"], "default": None},
                "kappa_ceiling": {"type": ["number", "null"], "default": None},
                "max_halvings": {"type": "integer", "minimum": 0, "default": 20},
                "max_steps": {"type": ["integer", "null"], "minimum": 0, "default": None},
            },
            "additionalProperties": False,
            "default": {},
        },
        "audit": {
            "type": "object",
            "properties": {
                # null means the band between the barrier extremes
                "x0_range": {"oneOf": [{"type": "null"},
                                       {"type": "array", "items": _number,
                                        "minItems": 2, "maxItems": 2}],
                             "default": None},
                "n_time": {"type": "integer", "minimum": 1, "default": 5},
                "points": {"type": "integer", "minimum": 1, "default": 4},
                "vtilde_levels": {"type": "array", "items": {"type": "number", "minimum": 1},
                                  "default": [1.0, 1.5, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]},
                "directions": {"type": "integer", "minimum": 1, "default": 6},
            },
            "additionalProperties": False,
            "default": {},
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string", "default": "out"}},
            "additionalProperties": False,
            "default": {},
        },
        "seed": {"type": "integer", "minimum": 0, "default": 0},
    },
    "required": ["metric", "grid", "f", "barriers"],
    "additionalProperties": False,
}


def _fill_defaults(schema: dict, node):
    """Recursively insert schema defaults into ``node`` (a parsed mapping)."""
    if not isinstance(node, dict) or "properties" not in schema:
        return node
    for key, sub in schema["properties"].items():
        if key not in node and "default" in sub:
            node[key] = copy.deepcopy(sub["default"])
        if key in node:
            node[key] = _fill_branch(sub, node[key])
    return node


def _fill_branch(schema: dict, node):
    if "oneOf" in schema:
        for alt in schema["oneOf"]:
            if jsonschema.Draft202012Validator(alt).is_valid(node):
                return _fill_branch(alt, node)
        return node
    if schema.get("type") == "array" and isinstance(node, list) and "items" in schema:
        return [_fill_branch(schema["items"], x) for x in node]
    return _fill_defaults(schema, node)


@dataclass
class RunConfig:
    data: dict
    base_dir: Path

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "RunConfig":
        raw = copy.deepcopy(raw)
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        data = _fill_defaults(SCHEMA, raw)
        grid = data["grid"]
        n = grid["n"]
        if len(grid["shape"]) != n:
            raise ConfigError("grid.shape needs one entry per dimension")
        if ("spacing" in grid) == ("length" in grid):
            raise ConfigError("grid needs exactly one of spacing or length")
        if "length" in grid:
            L = float(grid.pop("length"))
            grid["spacing"] = [L / s for s in grid["shape"]]
        if len(grid["spacing"]) != n:
            raise ConfigError("grid.spacing needs one entry per dimension")
        grid["spacing"] = [float(h) for h in grid["spacing"]]
        for side in ("upper", "lower"):
            b = data["barriers"].get(side)
            for m in (b or {}).get("modes", []):
                if m["axis"] >= n:
                    raise ConfigError(f"barrier mode axis {m['axis']} out of range")
        cfg = cls(data, Path(base_dir))
        # fail early on unknown family or metric parameters
        cfg.metric()
        cfg.f()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(raw, path.parent)

    def canonical(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.canonical(), sort_keys=True, default_flow_style=None)

    # --- builders -----------------------------------------------------

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def out_dir(self) -> Path:
        p = Path(self.data["output"]["dir"])
        return p if p.is_absolute() else self.base_dir / p

    def metric(self) -> AmbientMetric:
        m = self.data["metric"]
        try:
            return make_metric(m["preset"], self.data["grid"]["n"], **m["params"])
        except Exception as exc:
            raise ConfigError(f"metric: {exc}") from None

    def chart(self) -> GridChart:
        g = self.data["grid"]
        return GridChart(tuple(g["shape"]), tuple(g["spacing"]))

    def f(self) -> PrescribedCurvature:
        spec = self.data["f"]
        return make_f(spec["family"], **spec["params"])

    def cutoff(self) -> CutoffConfig | None:
        c = self.data["cutoff"]
        return None if c is None else CutoffConfig(c["k"])

    def barrier(self, side: str) -> GraphFunction | None:
        spec = self.data["barriers"].get(side)
        if spec is None:
            return None
        chart = self.chart()
        if "snapshot" in spec:
            p = Path(spec["snapshot"])
            try:
                u = read_snapshot_bin(p if p.is_absolute() else self.base_dir / p)
            except OSError as exc:
                raise ConfigError(f"cannot read barrier snapshot: {exc}") from None
            if u.chart != chart:
                raise ConfigError(f"{side} barrier snapshot grid does not match grid section")
            return u
        X = chart.coords()
        vals = np.full(chart.shape, float(spec["level"]))
        for m in spec["modes"]:
            vals = vals + m["amplitude"] * np.sin(m["wavenumber"] * X[..., m["axis"]] + m["phase"])
        return GraphFunction(chart, vals)

    def flow_config(self) -> FlowConfig:
        fl = self.data["flow"]
        return FlowConfig(upper=self.barrier("upper"), lower=self.barrier("lower"),
                          cutoff=self.cutoff(), sqrt_mode=self.data["f"]["sqrt_mode"], **fl)

    def audit_spec(self) -> AuditSpec:
        a = self.data["audit"]
        band = a["x0_range"]
        if band is None:
            up = self.barrier("upper").values
            low = self.barrier("lower")
            lo = float(np.min(low.values)) if low is not None else float(np.min(up))
            band = (lo, float(np.max(up)))
        L = self.data["grid"]["spacing"][0] * self.data["grid"]["shape"][0]
        return AuditSpec(x0_range=tuple(band), n_time=a["n_time"], points=a["points"],
                         length=L if math.isfinite(L) else 2 * math.pi,
                         vtilde_levels=tuple(a["vtilde_levels"]), directions=a["directions"],
                         seed=self.seed)
