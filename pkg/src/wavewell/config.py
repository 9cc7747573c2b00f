"""Run configuration: TOML or JSON files with fixed sections and strict keys."""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .classify import ExperimentPlan, Recipe
from .domain import Grid
from .dynamics import Monitors
from .errors import InputError
from .nonlinearity import ConditionParams, NonlinearitySpec

DEFAULTS = {
    "grid": {"dim": 1, "L": math.pi, "Ly": None, "n": 200, "ny": None},
    "nonlinearity": {"family": "odd-power", "p": 3.0, "case": None},
    "condition": {"alpha": 4.0, "beta": 0.0, "sigma": 0.0, "gamma": 4.0, "U_max": 2.0, "samples": 20001, "probe_u": 2.0},
    "initial": {
        "u0_kind": "modes",
        "u0_amplitude": 1.0,
        "u0_modes": [1],
        "u0_weights": None,
        "u1_kind": "zero",
        "u1_amplitude": 1.0,
        "u1_modes": [1],
        "u1_weights": None,
        "n_modes": 12,
        "decay": 2.0,
    },
    "integrator": {
        "dt": None,
        "t_end": 10.0,
        "cfl": 0.9,
        "sample_stride": None,
        "drift_fail": 1e-2,
        "blowup_factor": 1e6,
        "amplitude_limit": 1e154,
        "refine": True,
    },
    "search": {
        "seed": 0,
        "budget": 64,
        "descent_starts": 4,
        "deltas": None,
        "curve_points": 20,
        "curve_budget": 8,
        "e": None,
        "critical": None,
        "n_starts": 8,
        "eps_min": 0.01,
        "eps_max": 3.0,
        "eps_points": 301,
    },
    "output": {"dir": "runs", "refinements": [50, 100, 200]},
    "sweep": {"parameter": "initial.u0_amplitude", "values": None, "start": None, "stop": None, "num": None, "spacing": "linear"},
}


def _merge(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise InputError("config must be a table of sections")
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in cfg:
            raise InputError(f"unknown config section [{section}]; expected one of {sorted(cfg)}")
        if not isinstance(body, dict):
            raise InputError(f"config section [{section}] must be a table")
        for key, value in body.items():
            if key not in cfg[section]:
                raise InputError(f"unknown key {key!r} in section [{section}]; expected one of {sorted(cfg[section])}")
            cfg[section][key] = value
    return cfg


def load(path) -> dict:
    """Read a config file (``.json`` or TOML) and fill in defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    return _merge(raw)


def resolve(raw: dict | None = None) -> dict:
    return _merge(raw or {})


def _num(cfg, section, key, kind=float):
    value = cfg[section][key]
    try:
        if kind is int and (isinstance(value, bool) or int(value) != value):
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise InputError(f"key {key!r} in section [{section}] must be {kind.__name__}, got {value!r}") from None


def build_grid(cfg) -> Grid:
    g = cfg["grid"]
    dim = _num(cfg, "grid", "dim", int)
    L, n = _num(cfg, "grid", "L"), _num(cfg, "grid", "n", int)
    if dim == 1:
        return Grid.interval(L, n)
    if dim == 2:
        Ly = L if g["Ly"] is None else _num(cfg, "grid", "Ly")
        ny = n if g["ny"] is None else _num(cfg, "grid", "ny", int)
        return Grid.rectangle(L, Ly, n, ny)
    raise InputError(f"key 'dim' in section [grid] must be 1 or 2, got {dim}")


def build_spec(cfg) -> NonlinearitySpec:
    s = cfg["nonlinearity"]
    return NonlinearitySpec(str(s["family"]), _num(cfg, "nonlinearity", "p"), s["case"])


def build_params(cfg) -> ConditionParams:
    c = cfg["condition"]
    return ConditionParams(
        alpha=_num(cfg, "condition", "alpha"),
        beta=_num(cfg, "condition", "beta"),
        sigma=_num(cfg, "condition", "sigma"),
        gamma=_num(cfg, "condition", "gamma"),
        u_max=_num(cfg, "condition", "U_max"),
        samples=_num(cfg, "condition", "samples", int),
    )


def _recipe(cfg, which) -> Recipe:
    i = cfg["initial"]
    modes = i[f"{which}_modes"]
    weights = i[f"{which}_weights"]
    return Recipe(
        kind=str(i[f"{which}_kind"]),
        amplitude=_num(cfg, "initial", f"{which}_amplitude"),
        modes=tuple(tuple(m) if isinstance(m, list) else int(m) for m in modes),
        weights=None if weights is None else tuple(float(w) for w in weights),
        n_modes=_num(cfg, "initial", "n_modes", int),
        decay=_num(cfg, "initial", "decay"),
    )


def build_monitors(cfg, alpha: float) -> Monitors:
    it = cfg["integrator"]
    return Monitors(
        sample_stride=None if it["sample_stride"] is None else _num(cfg, "integrator", "sample_stride", int),
        drift_fail=_num(cfg, "integrator", "drift_fail"),
        blowup_factor=_num(cfg, "integrator", "blowup_factor"),
        amplitude_limit=_num(cfg, "integrator", "amplitude_limit"),
        refine=bool(it["refine"]),
        alpha=alpha,
        cfl=_num(cfg, "integrator", "cfl"),
    )


def build_plan(cfg) -> ExperimentPlan:
    params = build_params(cfg)
    s = cfg["search"]
    dt = cfg["integrator"]["dt"]
    return ExperimentPlan(
        grid=build_grid(cfg),
        spec=build_spec(cfg),
        params=params,
        u0=_recipe(cfg, "u0"),
        u1=_recipe(cfg, "u1"),
        dt=None if dt is None else _num(cfg, "integrator", "dt"),
        t_end=_num(cfg, "integrator", "t_end"),
        e=None if s["e"] is None else _num(cfg, "search", "e"),
        budget=_num(cfg, "search", "budget", int),
        seed=_num(cfg, "search", "seed", int),
        descent_starts=_num(cfg, "search", "descent_starts", int),
        curve_points=_num(cfg, "search", "curve_points", int),
        curve_budget=_num(cfg, "search", "curve_budget", int),
        critical=s["critical"],
        monitors=build_monitors(cfg, params.alpha),
    )


def sweep_values(cfg) -> list:
    sw = cfg["sweep"]
    if sw["values"] is not None:
        vals = list(sw["values"])
    elif None not in (sw["start"], sw["stop"], sw["num"]):
        num = _num(cfg, "sweep", "num", int)
        a, b = _num(cfg, "sweep", "start"), _num(cfg, "sweep", "stop")
        if sw["spacing"] == "log":
            vals = list(np.geomspace(a, b, num))
        elif sw["spacing"] == "linear":
            vals = list(np.linspace(a, b, num))
        else:
            raise InputError(f"key 'spacing' in section [sweep] must be 'linear' or 'log', got {sw['spacing']!r}")
    else:
        raise InputError("section [sweep] needs 'values' or 'start', 'stop' and 'num'")
    if not vals:
        raise InputError("section [sweep] produced no values")
    return [float(v) if isinstance(v, (int, float, np.floating)) else v for v in vals]


def with_override(cfg, dotted: str, value) -> dict:
    try:
        section, key = dotted.split(".")
    except ValueError:
        raise InputError(f"sweep parameter must look like 'section.key', got {dotted!r}") from None
    if section not in cfg or key not in cfg[section] or section == "sweep":
        raise InputError(f"unknown key {key!r} in section [{section}] for sweep parameter")
    out = copy.deepcopy(cfg)
    out[section][key] = value
    return out
