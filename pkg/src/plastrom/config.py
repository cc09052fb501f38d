"""Run configuration: JSON with schema validation, defaults, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from .assembly import BCSpec, LoadSpec
from .errors import ConfigError
from .materials import ElastoplasticParams
from .mesh import Mesh, generate_plate_with_hole, import_msh
from .solvers import NewtonConfig

DEFAULTS: dict = {
    "study": "hf",
    "seed": 0,
    "output_dir": "out",
    "threads": 1,
    "mesh": {"kind": "plate_with_hole", "lx": 10.0, "ly": 10.0, "lz": 1.0,
             "hole_radius": 2.0, "resolution": 2, "order": 1, "path": ""},
    "material": {"E": 200000.0, "nu": 0.3, "sigma_y": 200.0, "n_pui": 3.0,
                 "a_pui": 10.0},
    "parameter_box": {"nu": [0.21, 0.3], "a_pui": [0.1, 1000.0]},
    "load": {"traction": [0.0, 120.0, 0.0], "traction_group": "top",
             "volume_force": [0.0, 0.0, 0.0], "ramp": "linear"},
    "time": {"n_steps": 10, "t_final": 1.0},
    "tolerances": {"eps_newt": 1e-7, "eps_pod_u": 1e-5,
                   "eps_pod_sigma": 1e-8, "delta": 1e-7, "tol_rm": 1e-10},
    "newton": {"max_iters": 30, "tangent_mode": "consistent"},
    "bc": {"tie_component": "y"},
    "reproduce": {"n_u_values": [1, 2, 4, 6, 8], "n_steps": 20,
                  "delta_values": [1e-1, 1e-3, 1e-5, 1e-7]},
    "greedy": {"n_train_nu": 10, "n_train_a_pui": 1, "max_iters": 5,
               "stop_tol": 0.0, "stagnation_rtol": 0.01, "test_grid": 0},
    "online": {"artifacts": "", "mu": [], "hf_references": []},
}

_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3,
         "maxItems": 3}
SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "study": {"enum": ["hf", "reproduce", "greedy1p", "greedy2p",
                           "online"]},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["plate_with_hole", "msh"]},
                "lx": _POS, "ly": _POS, "lz": _POS, "hole_radius": _POS,
                "resolution": {"type": "integer", "minimum": 1},
                "order": {"enum": [1, 2]},
                "path": {"type": "string"},
            },
        },
        "material": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "E": _POS,
                "nu": {"type": "number", "exclusiveMinimum": 0,
                       "exclusiveMaximum": 0.5},
                "sigma_y": _POS,
                "n_pui": {"type": "number", "minimum": 1},
                "a_pui": _POS,
            },
        },
        "parameter_box": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nu": {"type": "array", "items": {"type": "number"},
                       "minItems": 2, "maxItems": 2},
                "a_pui": {"type": "array", "items": {"type": "number"},
                          "minItems": 2, "maxItems": 2},
            },
        },
        "load": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "traction": _VEC3,
                "traction_group": {"type": "string"},
                "volume_force": _VEC3,
                "ramp": {"oneOf": [{"enum": ["linear"]},
                                   {"type": "array",
                                    "items": {"type": "number"}}]},
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_steps": {"type": "integer", "minimum": 1},
                "t_final": _POS,
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _POS for k in
                           ("eps_newt", "eps_pod_u", "eps_pod_sigma",
                            "delta", "tol_rm")},
        },
        "newton": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "tangent_mode": {"enum": ["consistent", "elastic"]},
            },
        },
        "bc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tie_component": {"enum": ["x", "y", "z"]}},
        },
        "reproduce": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_u_values": {"type": "array",
                               "items": {"type": "integer", "minimum": 1}},
                "n_steps": {"type": "integer", "minimum": 1},
                "delta_values": {"type": "array", "items": _POS},
            },
        },
        "greedy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_train_nu": {"type": "integer", "minimum": 1},
                "n_train_a_pui": {"type": "integer", "minimum": 1},
                "max_iters": {"type": "integer", "minimum": 1},
                "stop_tol": {"type": "number", "minimum": 0},
                "stagnation_rtol": {"type": "number", "minimum": 0},
                "test_grid": {"type": "integer", "minimum": 0},
            },
        },
        "online": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "artifacts": {"type": "string"},
                "mu": {"type": "array",
                       "items": {"type": "array",
                                 "items": {"type": "number"},
                                 "minItems": 2, "maxItems": 2}},
                "hf_references": {"type": "array",
                                  "items": {"type": "string"}},
            },
        },
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(source) -> dict:
    """Merge a config (path, JSON text, or dict) over defaults and validate."""
    if isinstance(source, dict):
        user = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() \
            else str(source)
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON configuration: {exc}") from exc
    cfg = _merge(DEFAULTS, user)
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"configuration rejected: {exc.message} "
                          f"(at {'/'.join(str(p) for p in exc.path)})") from exc
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def make_mesh(cfg: dict) -> Mesh:
    mc = cfg["mesh"]
    if mc["kind"] == "plate_with_hole":
        return generate_plate_with_hole(mc["lx"], mc["ly"], mc["lz"],
                                        mc["hole_radius"], mc["resolution"],
                                        mc["order"])
    if not mc["path"]:
        raise ConfigError("mesh.kind=msh requires mesh.path")
    return import_msh(Path(mc["path"]).read_text())


def make_material(cfg: dict) -> ElastoplasticParams:
    return ElastoplasticParams(**cfg["material"])


def make_centroid(cfg: dict) -> ElastoplasticParams:
    box = cfg["parameter_box"]
    return make_material(cfg).with_values(
        nu=0.5 * (box["nu"][0] + box["nu"][1]),
        a_pui=0.5 * (box["a_pui"][0] + box["a_pui"][1]))


def make_load(cfg: dict) -> LoadSpec:
    lc = cfg["load"]
    return LoadSpec(traction=tuple(lc["traction"]),
                    traction_group=lc["traction_group"],
                    volume_force=tuple(lc["volume_force"]))


def make_bc(cfg: dict) -> BCSpec:
    return BCSpec(tie_component=cfg["bc"]["tie_component"])


def make_newton(cfg: dict) -> NewtonConfig:
    return NewtonConfig(eps_newt=cfg["tolerances"]["eps_newt"],
                        max_iters=cfg["newton"]["max_iters"],
                        tangent_mode=cfg["newton"]["tangent_mode"],
                        tol_rm=cfg["tolerances"]["tol_rm"])


def make_time_grid(cfg: dict, n_steps: int | None = None):
    """Uniform time grid on (0, t_final] and its load-scale ramp."""
    tc = cfg["time"]
    K = n_steps if n_steps is not None else tc["n_steps"]
    t_final = tc["t_final"]
    times = t_final * np.arange(1, K + 1) / K
    ramp = cfg["load"]["ramp"]
    if ramp == "linear":
        scales = times / t_final
    else:
        scales = np.asarray(ramp, dtype=float)
        if scales.size != K:
            raise ConfigError(
                f"ramp table has {scales.size} entries for {K} steps")
    return times, scales
