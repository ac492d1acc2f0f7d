"""Config-driven experiment runner behind the sgdflow console script.

Three subcommands. run loads a JSON config, simulates one ensemble, and
writes CSV curves, a plot stub, and summary.json into the config's output
directory. verify replays the acceptance checks and writes verdicts.json.
schema prints the config schema. Exit codes: 0 clean, 2 when a scientific
check failed (bound violations, failed verdicts), 1 for config or runtime
errors.

CSV bodies depend only on the config, never on wall-clock time, so rerunning
a config reproduces them byte for byte; summary.json is the one file with a
timestamp.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from . import acceptance
from .analysis import (
    BoundReport,
    MeanSqDistTo,
    MeanSqSigmaDist,
    bound_ergodic_average,
    bound_invariant_second_moment,
    bound_parametric_noiseless,
    bound_stepsize_decay,
    bound_w2_noisy,
    build_bound_report,
    moment_prefix_counts,
    nonparametric_envelope,
    quartic_form_constant,
    tail_report,
    violations_from_columns,
    w2_sliced_detail,
)
from .datagen import (
    GeneratorSpec,
    NoiseModel,
    Spectrum,
    generate_empirical,
    generate_population,
)
from .dynamics import (
    DynamicsKind,
    SimulationPlan,
    StepSchedule,
    simulate_ensemble,
)
from .exports import format_float, write_curve_csv, write_report_csv
from .problems import (
    Regime,
    classify_regime,
    empirical_instance,
    interpolator,
    population_instance,
    spectral_summary,
)

ANALYSIS_NAMES = ("parametric", "nonparametric", "w2", "localization",
                  "ergodic", "decay", "tails", "quartic")

# Analyses whose bounds assume a constant step size.
_CONSTANT_ONLY = ("parametric", "nonparametric", "w2", "localization", "ergodic")

_DYNAMICS_NAMES = ("discrete_sgd", "sde_empirical", "sde_population",
                   "sde_gaussian_proxy")

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "sgdflow experiment config",
    "type": "object",
    "required": ["generator", "gamma", "plan", "analyses", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "generator": {
            "type": "object",
            "required": ["regime", "n", "d", "spectrum", "noise", "seed"],
            "additionalProperties": False,
            "properties": {
                "regime": {"enum": ["empirical", "population"]},
                "n": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 1},
                "spectrum": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["power_law", "flat", "explicit"]},
                        "exponent": {"type": "number", "exclusiveMinimum": 0,
                                     "description": "power_law only: lambda_j = j^-exponent"},
                        "values": {"type": "array",
                                   "items": {"type": "number", "minimum": 0},
                                   "description": "explicit only: eigenvalues, length d"},
                    },
                },
                "noise": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["interpolating", "additive"]},
                        "sigma_sq": {"type": "number", "minimum": 0,
                                     "description": "additive only: the loss floor;"
                                                    " labels get variance 2 sigma_sq"},
                    },
                },
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "gamma": {
            "type": "object",
            "additionalProperties": False,
            "description": "constant step size: exactly one of the two keys",
            "properties": {
                "value": {"type": "number", "exclusiveMinimum": 0},
                "fraction_of_stability": {
                    "type": "number", "exclusiveMinimum": 0,
                    "description": "multiple of the stability threshold 1/(3K)",
                },
            },
        },
        "theta0": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "description": "start point; omit for the origin",
            "properties": {
                "kind": {"enum": ["zeros", "unit_offset", "explicit"]},
                "scale": {"type": "number",
                          "description": "unit_offset only: distance from the optimum"},
                "seed": {"type": "integer", "minimum": 0,
                         "description": "unit_offset only: seed for the direction"},
                "values": {"type": "array", "items": {"type": "number"},
                           "description": "explicit only: coordinates, length d"},
            },
        },
        "plan": {
            "type": "object",
            "required": ["dynamics", "t_end", "ensemble_size", "seed"],
            "additionalProperties": False,
            "properties": {
                "dynamics": {"enum": list(_DYNAMICS_NAMES)},
                "t_end": {
                    "description": "horizon: a number, {\"over_mu\": x} for x/mu, or"
                                   " {\"over_mu_effective\": x} for x/(mu (2 - K gamma))"
                                   " (constant schedule only)",
                    "oneOf": [
                        {"type": "number", "exclusiveMinimum": 0},
                        {"type": "object", "additionalProperties": False,
                         "required": ["over_mu"],
                         "properties": {"over_mu": {"type": "number",
                                                    "exclusiveMinimum": 0}}},
                        {"type": "object", "additionalProperties": False,
                         "required": ["over_mu_effective"],
                         "properties": {"over_mu_effective": {"type": "number",
                                                              "exclusiveMinimum": 0}}},
                    ],
                },
                "dt": {"type": "number", "exclusiveMinimum": 0,
                       "description": "integrator step; default min(gamma/10,"
                                      " 1/(10 lambda_max)); ignored by discrete_sgd"},
                "ensemble_size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "save_points": {"type": "integer", "minimum": 2,
                                "description": "size of the log-spaced save grid"
                                               " after t=0; default 100"},
                "save_stride": {"type": "integer", "minimum": 1,
                                "description": "save every k-th grid point instead"
                                               " of the log-spaced grid"},
                "time_averages": {"type": "boolean", "default": False},
                "proxy_sigma": {"type": "number", "minimum": 0,
                                "description": "sde_gaussian_proxy only: noise scale;"
                                               " default sqrt(loss floor)"},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "description": "step-size schedule; omit for constant",
            "properties": {
                "kind": {"enum": ["constant", "polynomial_decay"]},
                "alpha": {"type": "number", "exclusiveMinimum": 1,
                          "description": "polynomial_decay only:"
                                         " gamma_t = 1/(2K + t^alpha)"},
            },
        },
        "analyses": {
            "type": "array",
            "description": "each entry writes one CSV named after the analysis",
            "items": {
                "type": "object",
                "required": ["name"],
                "additionalProperties": False,
                "properties": {
                    "name": {"enum": list(ANALYSIS_NAMES)},
                    "projections": {"type": "integer", "minimum": 1,
                                    "description": "w2 only; default 128"},
                    "alpha": {"type": "number", "exclusiveMinimum": 1,
                              "description": "decay only; default 2.0"},
                    "probes": {"type": "integer", "minimum": 1,
                               "description": "quartic only; default 1500"},
                },
            },
        },
        "output_dir": {"type": "string", "minLength": 1,
                       "description": "created if missing; relative paths resolve"
                                      " against the working directory"},
    },
}


class ConfigError(Exception):
    """Invalid config; carries one message per problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated config, normalized and ready to execute."""

    raw: dict
    regime: str
    spec: GeneratorSpec
    gamma_value: float | None
    gamma_fraction: float | None
    theta0_kind: str
    theta0_scale: float | None
    theta0_seed: int | None
    theta0_values: tuple | None
    dynamics: str
    t_end_mode: str
    t_end_value: float
    dt: float | None
    ensemble_size: int
    plan_seed: int
    save_points: int | None
    save_stride: int | None
    time_averages: bool
    proxy_sigma: float | None
    schedule_kind: str
    schedule_alpha: float | None
    analyses: tuple
    output_dir: str


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


class _Errors:
    """Flat list of path-tagged validation messages."""

    def __init__(self):
        self.messages = []

    def add(self, path, msg):
        self.messages.append(f"{path}: {msg}")

    def __bool__(self):
        return bool(self.messages)


def _check_keys(node, path, errs, required, optional=()) -> bool:
    if not isinstance(node, dict):
        errs.add(path, "expected an object")
        return False
    ok = True
    for key in required:
        if key not in node:
            errs.add(f"{path}.{key}", "missing required key")
            ok = False
    allowed = sorted(set(required) | set(optional))
    for key in node:
        if key not in allowed:
            errs.add(f"{path}.{key}", f"unknown key (allowed: {', '.join(allowed)})")
            ok = False
    return ok


def _check_pos_int(node, key, path, errs, minimum=1):
    v = node.get(key)
    if v is None:
        return None
    if not _is_int(v) or v < minimum:
        errs.add(f"{path}.{key}", f"expected an integer >= {minimum}")
        return None
    return int(v)


def _check_number(node, key, path, errs, minimum=None, exclusive=None):
    v = node.get(key)
    if v is None:
        return None
    if not _is_num(v):
        errs.add(f"{path}.{key}", "expected a number")
        return None
    if minimum is not None and v < minimum:
        errs.add(f"{path}.{key}", f"expected a number >= {minimum}")
        return None
    if exclusive is not None and v <= exclusive:
        errs.add(f"{path}.{key}", f"expected a number > {exclusive}")
        return None
    return float(v)


def _parse_spectrum(node, path, errs, d):
    if not isinstance(node, dict):
        errs.add(path, "expected an object")
        return None
    kind = node.get("kind")
    if kind == "power_law":
        if not _check_keys(node, path, errs, ("kind", "exponent")):
            return None
        exponent = _check_number(node, "exponent", path, errs, exclusive=0.0)
        return None if exponent is None else Spectrum.power_law(exponent)
    if kind == "flat":
        if not _check_keys(node, path, errs, ("kind",)):
            return None
        return Spectrum.flat()
    if kind == "explicit":
        if not _check_keys(node, path, errs, ("kind", "values")):
            return None
        values = node.get("values")
        if (not isinstance(values, list) or not values
                or not all(_is_num(v) and v >= 0 for v in values)):
            errs.add(f"{path}.values", "expected a nonempty array of numbers >= 0")
            return None
        if d is not None and len(values) != d:
            errs.add(f"{path}.values", f"length {len(values)} does not match d={d}")
            return None
        return Spectrum.explicit(tuple(float(v) for v in values))
    errs.add(f"{path}.kind", "must be one of power_law, flat, explicit")
    return None


def _parse_noise(node, path, errs):
    if not isinstance(node, dict):
        errs.add(path, "expected an object")
        return None
    kind = node.get("kind")
    if kind == "interpolating":
        if not _check_keys(node, path, errs, ("kind",)):
            return None
        return NoiseModel.interpolating()
    if kind == "additive":
        if not _check_keys(node, path, errs, ("kind", "sigma_sq")):
            return None
        sigma_sq = _check_number(node, "sigma_sq", path, errs, minimum=0.0)
        return None if sigma_sq is None else NoiseModel.additive(sigma_sq)
    errs.add(f"{path}.kind", "must be one of interpolating, additive")
    return None


def _parse_generator(node, errs):
    path = "$.generator"
    if not _check_keys(node, path, errs,
                       ("regime", "n", "d", "spectrum", "noise", "seed")):
        return None, None
    regime = node.get("regime")
    if regime not in ("empirical", "population"):
        errs.add(f"{path}.regime", "must be empirical or population")
        regime = None
    n = _check_pos_int(node, "n", path, errs)
    d = _check_pos_int(node, "d", path, errs)
    seed = _check_pos_int(node, "seed", path, errs, minimum=0)
    spectrum = _parse_spectrum(node.get("spectrum"), f"{path}.spectrum", errs, d)
    noise = _parse_noise(node.get("noise"), f"{path}.noise", errs)
    if None in (regime, n, d, seed, spectrum, noise):
        return None, regime
    return GeneratorSpec(n=n, d=d, spectrum=spectrum, noise_model=noise,
                         seed=seed), regime


def _parse_gamma(node, errs):
    path = "$.gamma"
    if not isinstance(node, dict):
        errs.add(path, "expected an object")
        return None, None
    keys = set(node)
    if keys == {"value"}:
        return _check_number(node, "value", path, errs, exclusive=0.0), None
    if keys == {"fraction_of_stability"}:
        return None, _check_number(node, "fraction_of_stability", path, errs,
                                   exclusive=0.0)
    errs.add(path, "expected exactly one of value, fraction_of_stability")
    return None, None


def _parse_theta0(node, errs, d):
    path = "$.theta0"
    default = ("zeros", None, None, None)
    if node is None:
        return default
    if not isinstance(node, dict):
        errs.add(path, "expected an object")
        return default
    kind = node.get("kind")
    if kind == "zeros":
        _check_keys(node, path, errs, ("kind",))
        return default
    if kind == "unit_offset":
        if not _check_keys(node, path, errs, ("kind", "scale", "seed")):
            return default
        scale = _check_number(node, "scale", path, errs)
        seed = _check_pos_int(node, "seed", path, errs, minimum=0)
        return ("unit_offset", scale, seed, None)
    if kind == "explicit":
        if not _check_keys(node, path, errs, ("kind", "values")):
            return default
        values = node.get("values")
        if not isinstance(values, list) or not all(_is_num(v) for v in values):
            errs.add(f"{path}.values", "expected an array of numbers")
            return default
        if d is not None and len(values) != d:
            errs.add(f"{path}.values", f"length {len(values)} does not match d={d}")
            return default
        return ("explicit", None, None, tuple(float(v) for v in values))
    errs.add(f"{path}.kind", "must be one of zeros, unit_offset, explicit")
    return default


def _parse_t_end(node, errs):
    path = "$.plan.t_end"
    if _is_num(node):
        if node <= 0:
            errs.add(path, "expected a number > 0")
            return None, None
        return "absolute", float(node)
    if isinstance(node, dict):
        if set(node) == {"over_mu"}:
            return "over_mu", _check_number(node, "over_mu", path, errs,
                                            exclusive=0.0)
        if set(node) == {"over_mu_effective"}:
            return "over_mu_effective", _check_number(node, "over_mu_effective",
                                                      path, errs, exclusive=0.0)
        errs.add(path, "expected exactly one of over_mu, over_mu_effective")
        return None, None
    errs.add(path, "expected a number or an object with over_mu or"
                   " over_mu_effective")
    return None, None


def _parse_plan(node, errs):
    path = "$.plan"
    if not _check_keys(node, path, errs,
                       ("dynamics", "t_end", "ensemble_size", "seed"),
                       ("dt", "save_points", "save_stride", "time_averages",
                        "proxy_sigma")):
        return None
    dynamics = node.get("dynamics")
    if dynamics not in _DYNAMICS_NAMES:
        errs.add(f"{path}.dynamics",
                 f"must be one of {', '.join(_DYNAMICS_NAMES)}")
        dynamics = None
    t_end_mode, t_end_value = _parse_t_end(node.get("t_end"), errs)
    ensemble_size = _check_pos_int(node, "ensemble_size", path, errs)
    seed = _check_pos_int(node, "seed", path, errs, minimum=0)
    dt = _check_number(node, "dt", path, errs, exclusive=0.0)
    save_points = _check_pos_int(node, "save_points", path, errs, minimum=2)
    save_stride = _check_pos_int(node, "save_stride", path, errs)
    if "save_points" in node and "save_stride" in node:
        errs.add(path, "save_points and save_stride are mutually exclusive")
    time_averages = node.get("time_averages", False)
    if not isinstance(time_averages, bool):
        errs.add(f"{path}.time_averages", "expected a boolean")
        time_averages = False
    proxy_sigma = _check_number(node, "proxy_sigma", path, errs, minimum=0.0)
    if "proxy_sigma" in node and dynamics is not None \
            and dynamics != "sde_gaussian_proxy":
        errs.add(f"{path}.proxy_sigma", "only meaningful for sde_gaussian_proxy")
    if None in (dynamics, t_end_mode, ensemble_size, seed):
        return None
    return dict(dynamics=dynamics, t_end_mode=t_end_mode, t_end_value=t_end_value,
                dt=dt, ensemble_size=ensemble_size, seed=seed,
                save_points=save_points, save_stride=save_stride,
                time_averages=time_averages, proxy_sigma=proxy_sigma)


def _parse_schedule(node, errs):
    path = "$.schedule"
    if node is None:
        return "constant", None
    if not isinstance(node, dict):
        errs.add(path, "expected an object")
        return "constant", None
    kind = node.get("kind")
    if kind == "constant":
        _check_keys(node, path, errs, ("kind",))
        return "constant", None
    if kind == "polynomial_decay":
        if not _check_keys(node, path, errs, ("kind", "alpha")):
            return "constant", None
        alpha = _check_number(node, "alpha", path, errs, exclusive=1.0)
        return "polynomial_decay", alpha
    errs.add(f"{path}.kind", "must be constant or polynomial_decay")
    return "constant", None


_ANALYSIS_PARAMS = {
    "parametric": (),
    "nonparametric": (),
    "w2": ("projections",),
    "localization": (),
    "ergodic": (),
    "decay": ("alpha",),
    "tails": (),
    "quartic": ("probes",),
}


def _parse_analyses(node, errs):
    path = "$.analyses"
    if not isinstance(node, list):
        errs.add(path, "expected an array")
        return ()
    out = []
    seen = set()
    for i, entry in enumerate(node):
        here = f"{path}[{i}]"
        if not isinstance(entry, dict):
            errs.add(here, "expected an object")
            continue
        name = entry.get("name")
        if name not in ANALYSIS_NAMES:
            errs.add(f"{here}.name",
                     f"must be one of {', '.join(ANALYSIS_NAMES)}")
            continue
        if name in seen:
            errs.add(here, f"duplicate analysis {name}")
            continue
        seen.add(name)
        if not _check_keys(entry, here, errs, ("name",), _ANALYSIS_PARAMS[name]):
            continue
        params = {}
        if name == "w2" and "projections" in entry:
            v = _check_pos_int(entry, "projections", here, errs)
            if v is not None:
                params["projections"] = v
        if name == "decay" and "alpha" in entry:
            v = _check_number(entry, "alpha", here, errs, exclusive=1.0)
            if v is not None:
                params["alpha"] = v
        if name == "quartic" and "probes" in entry:
            v = _check_pos_int(entry, "probes", here, errs)
            if v is not None:
                params["probes"] = v
        out.append((name, params))
    return tuple(out)


def parse_config(raw) -> ExperimentConfig:
    """Validate a raw config dict, collecting every problem before raising."""
    errs = _Errors()
    if not isinstance(raw, dict):
        raise ConfigError(["$: expected a JSON object"])
    _check_keys(raw, "$", errs,
                ("generator", "gamma", "plan", "analyses", "output_dir"),
                ("theta0", "schedule"))
    spec, regime = _parse_generator(raw["generator"], errs) \
        if "generator" in raw else (None, None)
    gamma_value, gamma_fraction = _parse_gamma(raw["gamma"], errs) \
        if "gamma" in raw else (None, None)
    d = spec.d if spec is not None else None
    theta0_kind, theta0_scale, theta0_seed, theta0_values = \
        _parse_theta0(raw.get("theta0"), errs, d)
    plan = _parse_plan(raw["plan"], errs) if "plan" in raw else None
    schedule_kind, schedule_alpha = _parse_schedule(raw.get("schedule"), errs)
    analyses = _parse_analyses(raw.get("analyses"), errs) \
        if "analyses" in raw else ()
    output_dir = raw.get("output_dir")
    if "output_dir" in raw and (not isinstance(output_dir, str) or not output_dir):
        errs.add("$.output_dir", "expected a nonempty string")
        output_dir = None

    # Cross-cutting rules; only checked once the pieces parsed.
    names = [name for name, _ in analyses]
    if plan is not None and regime is not None:
        if plan["dynamics"] == "sde_empirical" and regime != "empirical":
            errs.add("$.plan.dynamics", "sde_empirical needs an empirical generator")
        if plan["dynamics"] == "sde_population" and regime != "population":
            errs.add("$.plan.dynamics",
                     "sde_population needs a population generator")
        if plan["dynamics"] == "discrete_sgd" and regime != "empirical":
            errs.add("$.plan.dynamics", "discrete_sgd needs an empirical generator")
    if plan is not None and plan["t_end_mode"] == "over_mu_effective" \
            and schedule_kind != "constant":
        errs.add("$.plan.t_end", "over_mu_effective needs a constant schedule")
    if plan is not None and "ergodic" in names and not plan["time_averages"]:
        errs.add("$.analyses", "ergodic needs plan.time_averages set")
    if schedule_kind != "constant":
        for bad in [n for n in names if n in _CONSTANT_ONLY]:
            errs.add("$.analyses",
                     f"{bad} assumes a constant schedule; use decay instead")
    if regime == "population":
        for bad in [n for n in names if n in ("tails", "quartic")]:
            errs.add("$.analyses", f"{bad} needs an empirical generator")
    if spec is not None and "quartic" in names and regime == "empirical" \
            and spec.n < 2 * spec.d:
        errs.add("$.analyses", f"quartic needs n >= 2d (got n={spec.n},"
                               f" d={spec.d})")
    if errs:
        raise ConfigError(errs.messages)
    return ExperimentConfig(
        raw=raw, regime=regime, spec=spec, gamma_value=gamma_value,
        gamma_fraction=gamma_fraction, theta0_kind=theta0_kind,
        theta0_scale=theta0_scale, theta0_seed=theta0_seed,
        theta0_values=theta0_values, dynamics=plan["dynamics"],
        t_end_mode=plan["t_end_mode"], t_end_value=plan["t_end_value"],
        dt=plan["dt"], ensemble_size=plan["ensemble_size"],
        plan_seed=plan["seed"], save_points=plan["save_points"],
        save_stride=plan["save_stride"], time_averages=plan["time_averages"],
        proxy_sigma=plan["proxy_sigma"], schedule_kind=schedule_kind,
        schedule_alpha=schedule_alpha, analyses=analyses, output_dir=output_dir)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"$: cannot read {p}: {exc}"]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON: {exc}"]) from exc
    return parse_config(raw)


def _with_theta0(inst, theta0):
    if inst.regime is Regime.EMPIRICAL:
        return empirical_instance(inst.X, inst.y, theta0=theta0, gamma=inst.gamma)
    return population_instance(inst.population_model, theta0=theta0,
                               gamma=inst.gamma, n=inst.n)


def _build_instance(cfg: ExperimentConfig):
    t0 = None
    if cfg.theta0_kind == "explicit":
        t0 = np.asarray(cfg.theta0_values, dtype=float)
    if cfg.regime == "empirical":
        inst = generate_empirical(cfg.spec, gamma=cfg.gamma_value,
                                  gamma_fraction=cfg.gamma_fraction, theta0=t0)
    else:
        inst = generate_population(cfg.spec, gamma=cfg.gamma_value,
                                   gamma_fraction=cfg.gamma_fraction, theta0=t0,
                                   n=cfg.spec.n)
    if cfg.theta0_kind == "unit_offset":
        star = interpolator(inst)
        u = np.random.default_rng(cfg.theta0_seed).standard_normal(cfg.spec.d)
        u /= np.linalg.norm(u)
        inst = _with_theta0(inst, star + cfg.theta0_scale * u)
    return inst


def _build_schedule(cfg: ExperimentConfig, inst, summary) -> StepSchedule:
    if cfg.schedule_kind == "constant":
        return StepSchedule.constant(inst.gamma)
    return StepSchedule.polynomial_decay(cfg.schedule_alpha, summary.K)


def _resolve_t_end(cfg: ExperimentConfig, summary, gamma0: float) -> float:
    if cfg.t_end_mode == "absolute":
        return cfg.t_end_value
    if cfg.t_end_mode == "over_mu":
        return cfg.t_end_value / summary.mu
    rate = summary.mu * (2.0 - summary.K * gamma0)
    if rate <= 0:
        raise RuntimeError("over_mu_effective needs gamma below 2/K")
    return cfg.t_end_value / rate


def _build_plan(cfg: ExperimentConfig, t_end: float) -> SimulationPlan:
    common = dict(t_end=t_end, ensemble_size=cfg.ensemble_size,
                  seed=cfg.plan_seed, dynamics=DynamicsKind(cfg.dynamics),
                  dt=cfg.dt, time_averages=cfg.time_averages,
                  proxy_sigma=cfg.proxy_sigma)
    if cfg.save_stride is not None:
        return SimulationPlan(save_stride=cfg.save_stride, **common)
    n_pts = 100 if cfg.save_points is None else cfg.save_points
    lower = 5.0 * cfg.dt if cfg.dt is not None else t_end * 1e-3
    if not 0.0 < lower < t_end:
        lower = t_end * 1e-3
    saves = (0.0,) + tuple(np.geomspace(lower, t_end, n_pts))
    return SimulationPlan(save_times=saves, **common)


def _write_rows(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


@dataclass
class _RunState:
    """Everything the analysis executors share for one run."""

    cfg: ExperimentConfig
    inst: object
    summary: object
    floor: float
    star: np.ndarray
    schedule: StepSchedule
    gamma0: float
    d0_sq: float
    plan: SimulationPlan
    ens: object
    outdir: Path


def _an_parametric(st: _RunState, params):
    rep = build_bound_report(
        st.ens,
        lambda t: bound_parametric_noiseless(t, st.inst.theta0, st.star,
                                             st.summary.mu, st.summary.K,
                                             st.gamma0),
        MeanSqDistTo(st.star), label="parametric")
    write_report_csv(st.outdir / "parametric.csv", rep)
    frag = {"violations": rep.violations,
            "rate": st.summary.mu * (2.0 - st.summary.K * st.gamma0)}
    return rep.violations, frag, ["parametric.csv"]


def _an_nonparametric(st: _RunState, params):
    rep = build_bound_report(
        st.ens,
        lambda t: nonparametric_envelope(t, st.inst.theta0, st.star,
                                         st.summary.Sigma, st.summary.k_alpha,
                                         st.summary.K, st.gamma0),
        MeanSqDistTo(st.star), label="nonparametric")
    write_report_csv(st.outdir / "nonparametric.csv", rep)
    frag = {"violations": rep.violations,
            "alphas": sorted(st.summary.k_alpha)}
    return rep.violations, frag, ["nonparametric.csv"]


def _an_w2(st: _RunState, params):
    eta0 = st.inst.theta0 - st.star
    if float(eta0 @ eta0) <= 1e-12 * (1.0 + float(st.star @ st.star)):
        raise RuntimeError("w2 analysis needs theta0 away from the optimum;"
                           " use a unit_offset start")
    mirror = st.star - eta0
    ens_b = simulate_ensemble(_with_theta0(st.inst, mirror),
                              replace(st.plan, seed=st.plan.seed + 7777,
                                      time_averages=False),
                              st.schedule)
    projections = params.get("projections", 128)
    rng = np.random.default_rng(9)
    A = st.ens.states[st.ens.alive]
    B = ens_b.states[ens_b.alive]
    times = st.ens.times
    vals = np.empty(times.size)
    ses = np.empty(times.size)
    for j in range(times.size):
        sq = w2_sliced_detail(A[:, j], B[:, j], projections, rng)
        vals[j] = sq.mean()
        ses[j] = sq.std(ddof=1) / np.sqrt(projections) if projections > 1 else 0.0
    w2_0 = float(4.0 * (eta0 @ eta0))
    bound = bound_w2_noisy(times, w2_0, st.summary.mu, st.summary.K, st.gamma0)
    viol = violations_from_columns(vals, ses, bound)
    rep = BoundReport(times=times.copy(), empirical=vals, stderr=ses,
                      bound=np.asarray(bound, float), violations=viol, label="w2")
    write_report_csv(st.outdir / "w2.csv", rep)
    frag = {"violations": viol, "w2_0": w2_0, "projections": projections,
            "rate": 2.0 * st.summary.mu * (1.0 - 2.0 * st.gamma0 * st.summary.K),
            "n_diverged_mirror": int(np.sum(ens_b.diverged))}
    return viol, frag, ["w2.csv"]


def _an_localization(st: _RunState, params):
    ceiling = bound_invariant_second_moment(st.gamma0, st.summary.K, st.floor,
                                            st.summary.mu)
    emp, se = MeanSqDistTo(st.star)(st.ens)
    times = st.ens.times
    bound = np.full(times.size, ceiling)
    burn_in = 10.0 / st.summary.mu
    sel = times >= burn_in - 1e-9
    viol = int(violations_from_columns(emp[sel], se[sel], bound[sel])) \
        if sel.any() else 0
    rep = BoundReport(times=times.copy(), empirical=emp, stderr=se, bound=bound,
                      violations=viol, label="localization")
    write_report_csv(st.outdir / "localization.csv", rep)
    frag = {"violations": viol, "ceiling": ceiling, "burn_in_time": burn_in,
            "times_checked": int(sel.sum())}
    return viol, frag, ["localization.csv"]


def _an_ergodic(st: _RunState, params):
    emp, se = MeanSqSigmaDist(st.summary.Sigma, st.star)(st.ens)
    times = st.ens.times
    pos = times > 0
    bound = bound_ergodic_average(times[pos], st.gamma0, st.summary.K, st.floor,
                                  st.d0_sq)
    viol = violations_from_columns(emp[pos], se[pos], bound)
    rep = BoundReport(times=times[pos].copy(), empirical=emp[pos], stderr=se[pos],
                      bound=np.asarray(bound, float), violations=viol,
                      label="ergodic")
    write_report_csv(st.outdir / "ergodic.csv", rep)
    frag = {"violations": viol, "times_checked": int(pos.sum())}
    return viol, frag, ["ergodic.csv"]


def _an_decay(st: _RunState, params):
    alpha = params.get("alpha", 2.0)
    schedule = StepSchedule.polynomial_decay(alpha, st.summary.K)
    dynamics = DynamicsKind.SDE_EMPIRICAL if st.inst.regime is Regime.EMPIRICAL \
        else DynamicsKind.SDE_POPULATION
    plan = replace(st.plan, seed=st.plan.seed + 1000, dynamics=dynamics,
                   time_averages=False, proxy_sigma=None)
    ens = simulate_ensemble(st.inst, plan, schedule)
    emp, se = MeanSqDistTo(st.star)(ens)
    pos = ens.times > 0
    bound = bound_stepsize_decay(ens.times[pos], alpha, st.summary.mu,
                                 st.summary.K, st.floor, st.d0_sq)
    viol = violations_from_columns(emp[pos], se[pos], bound)
    rep = BoundReport(times=ens.times[pos].copy(), empirical=emp[pos],
                      stderr=se[pos], bound=np.asarray(bound, float),
                      violations=viol, label="decay")
    write_report_csv(st.outdir / "decay.csv", rep)
    frag = {"violations": viol, "alpha": alpha, "dynamics": dynamics.value,
            "n_diverged": int(np.sum(ens.diverged))}
    return viol, frag, ["decay.csv"]


def _an_tails(st: _RunState, params):
    lam_top = float(st.summary.eigenvalues[0])
    rows = []
    frag = {"violations": 0}
    for tag, fraction, seed_shift in (("large", 0.9, 2000), ("small", 0.05, 3000)):
        gamma = fraction / (3.0 * lam_top)
        inst = empirical_instance(st.inst.X, st.inst.y, theta0=st.inst.theta0,
                                  gamma=gamma)
        plan = SimulationPlan(t_end=st.plan.t_end,
                              ensemble_size=st.plan.ensemble_size,
                              seed=st.plan.seed + seed_shift,
                              dynamics=DynamicsKind.SDE_EMPIRICAL,
                              dt=st.plan.dt, save_times=(st.plan.t_end,))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ens = simulate_ensemble(inst, plan, StepSchedule.constant(gamma))
        final = ens.states[ens.alive][:, -1]
        radii = np.linalg.norm(final - st.star, axis=1)
        rep = tail_report(radii, gamma)
        counts = moment_prefix_counts(radii.size)
        top = rep.moment_growth[max(rep.moment_growth)]
        rows += [(gamma, float(c), float(m)) for c, m in zip(counts, top)]
        frag[f"gamma_{tag}"] = gamma
        frag[f"verdict_{tag}"] = rep.verdict.value
        frag[f"hill_{tag}"] = {str(k): v for k, v in sorted(rep.hill_indices.items())}
        frag[f"n_diverged_{tag}"] = int(np.sum(ens.diverged))
    _write_rows(st.outdir / "tails.csv",
                ("gamma", "prefix_count", "order8_partial_moment"), rows)
    return 0, frag, ["tails.csv"]


def _an_quartic(st: _RunState, params):
    probes = params.get("probes", 1500)
    rep = quartic_form_constant(st.inst.X, st.inst.y, st.star, probes,
                                np.random.default_rng(st.plan.seed + 4000))
    viol = 0 if rep.c_hat > 0 else 1
    _write_rows(st.outdir / "quartic.csv", ("probes", "c_hat"),
                [(float(rep.probes), rep.c_hat)])
    frag = {"violations": viol, "c_hat": rep.c_hat, "probes": rep.probes}
    return viol, frag, ["quartic.csv"]


_EXECUTORS = {
    "parametric": _an_parametric,
    "nonparametric": _an_nonparametric,
    "w2": _an_w2,
    "localization": _an_localization,
    "ergodic": _an_ergodic,
    "decay": _an_decay,
    "tails": _an_tails,
    "quartic": _an_quartic,
}

_PLOT_STUB = '''"""Quick look at the CSV curves in this directory. Needs matplotlib."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).parent
FILES = {files}


def columns(name):
    with open(HERE / name, newline="") as fh:
        rows = list(csv.reader(fh))
    head, data = rows[0], rows[1:]
    return {{h: [float(r[i]) for r in data] for i, h in enumerate(head)}}


fig, ax = plt.subplots(figsize=(7.0, 5.0))
for name in FILES:
    cols = columns(name)
    label = name.removesuffix(".csv")
    ax.plot(cols["t"], cols.get("value", cols.get("empirical")), label=label)
    if "bound" in cols:
        ax.plot(cols["t"], cols["bound"], linestyle="--", label=label + " bound")
ax.set_xlabel("t")
ax.set_yscale("log")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(HERE / "curves.png", dpi=150)
print("wrote", HERE / "curves.png")
'''


def _write_plot_stub(outdir: Path, artifacts) -> None:
    curves = [a for a in artifacts if a.endswith(".csv")
              and a not in ("tails.csv", "quartic.csv")]
    (outdir / "plot.py").write_text(_PLOT_STUB.format(files=repr(curves)),
                                    encoding="ascii")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _ta_mean_sq_dist(ens, star):
    bars = ens.time_averages[ens.alive]
    vals = np.sum((bars - star) ** 2, axis=2)
    emp = vals.mean(axis=0)
    M = vals.shape[0]
    se = vals.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros_like(emp)
    return emp, se


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    inst = _build_instance(cfg)
    summary = spectral_summary(inst)
    regime_report = classify_regime(inst)
    star = interpolator(inst)
    schedule = _build_schedule(cfg, inst, summary)
    gamma0 = schedule.gamma_at(0.0)
    t_end = _resolve_t_end(cfg, summary, gamma0)
    plan = _build_plan(cfg, t_end)
    print(f"instance: regime={cfg.regime} n={inst.n} d={inst.d}"
          f" gamma={format_float(inst.gamma)} mu={format_float(summary.mu)}"
          f" K={format_float(summary.K)}")
    print(f"plan: dynamics={cfg.dynamics} t_end={format_float(t_end)}"
          f" ensemble_size={plan.ensemble_size}")
    ens = simulate_ensemble(inst, plan, schedule)
    n_diverged = int(np.sum(ens.diverged))
    if n_diverged:
        print(f"warning: {n_diverged} of {plan.ensemble_size} trajectories"
              " diverged", file=sys.stderr)
    artifacts = []
    emp, se = MeanSqDistTo(star)(ens)
    write_curve_csv(outdir / "trajectory.csv", ens.times, emp, se)
    artifacts.append("trajectory.csv")
    if plan.time_averages:
        ta_emp, ta_se = _ta_mean_sq_dist(ens, star)
        write_curve_csv(outdir / "ta_trajectory.csv", ens.times, ta_emp, ta_se)
        artifacts.append("ta_trajectory.csv")
    state = _RunState(
        cfg=cfg, inst=inst, summary=summary, floor=regime_report.sigma_sq_floor,
        star=star, schedule=schedule, gamma0=gamma0,
        d0_sq=float(np.sum((inst.theta0 - star) ** 2)), plan=plan, ens=ens,
        outdir=outdir)
    total = 0
    fragments = {}
    for name, params in cfg.analyses:
        viol, frag, files = _EXECUTORS[name](state, params)
        total += viol
        fragments[name] = frag
        artifacts += files
        print(f"analysis {name}: {viol} violation{'s' if viol != 1 else ''}")
    _write_plot_stub(outdir, artifacts)
    artifacts.append("plot.py")
    doc = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.raw,
        "instance": {
            "regime": cfg.regime, "n": inst.n, "d": inst.d, "gamma": inst.gamma,
            "mu": summary.mu, "K": summary.K,
            "lambda_top": summary.eigenvalues[0], "rank": summary.rank,
            "sigma_sq_floor": regime_report.sigma_sq_floor,
            "interpolator_exists": regime_report.interpolator_exists,
            "kernel_dim": regime_report.kernel_dim, "dist0_sq": state.d0_sq,
        },
        "plan": {
            "dynamics": cfg.dynamics, "t_end": plan.t_end, "dt": plan.dt,
            "ensemble_size": plan.ensemble_size, "seed": plan.seed,
            "saved_points": int(ens.times.size),
            "time_averages": plan.time_averages,
        },
        "schedule": {"kind": cfg.schedule_kind, "gamma_at_0": gamma0,
                     "alpha": cfg.schedule_alpha},
        "ensemble": {"n_diverged": n_diverged},
        "analyses": fragments,
        "total_violations": total,
        "artifacts": artifacts + ["summary.json"],
    }
    (outdir / "summary.json").write_text(
        json.dumps(_jsonable(doc), indent=2) + "\n", encoding="ascii")
    artifacts.append("summary.json")
    print(f"wrote {len(artifacts)} files to {outdir}"
          f" (total violations: {total})")
    return 2 if total > 0 else 0


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    results = acceptance.run_all(tamper=args.tamper, numbers=args.only,
                                 echo=print)
    all_passed = all(r.passed for r in results)
    doc = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "tamper": args.tamper,
        "criteria": [
            {"number": r.number, "name": r.name, "passed": r.passed,
             "detail": r.detail, "runtime_seconds": r.runtime_seconds}
            for r in results
        ],
        "all_passed": all_passed,
    }
    (outdir / "verdicts.json").write_text(json.dumps(doc, indent=2) + "\n",
                                          encoding="ascii")
    print(f"verdicts written to {outdir / 'verdicts.json'}")
    return 0 if all_passed else 2


def _criterion_numbers(text: str):
    try:
        numbers = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma-separated criterion numbers") from None
    if not numbers:
        raise argparse.ArgumentTypeError("expected at least one number")
    return numbers


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgdflow",
        description="simulate single-sample SGD and its SDE models, check the"
                    " convergence bounds, and export the curves")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="path to a JSON config (see schema)")
    p_verify = sub.add_parser("verify", help="replay the acceptance checks")
    p_verify.add_argument("config",
                          help="config whose output_dir receives verdicts.json")
    p_verify.add_argument("--tamper", type=float, default=1.0,
                          help="multiply every bound by this factor first;"
                               " 0.5 must make the checks fail (default 1.0)")
    p_verify.add_argument("--only", type=_criterion_numbers, default=None,
                          metavar="N[,N...]",
                          help="run only these criterion numbers")
    sub.add_parser("schema", help="print the config schema as JSON")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 is reserved for failed checks.
        return 0 if not exc.code else 1
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return _cmd_verify(args)
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return 0
    except ConfigError as exc:
        for message in exc.errors:
            print(f"config error at {message}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - one honest diagnostic, then exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
