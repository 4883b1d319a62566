"""Run configuration: one strict JSON document wired to typed objects.

Unknown keys are rejected everywhere -- a silently ignored typo in a
parameter name would corrupt a calibration invisibly.  Every diagnostic
names the offending field by its dotted path.
"""

import copy
import json
from dataclasses import dataclass

import numpy as np

from .calibrate import PriorBox
from .data import NoiseModel
from .errors import ConfigError
from .forward import (
    PARAM_NAMES,
    FixedParams,
    LoadProgram,
    ParameterVector,
    Specimen,
    default_cyclic_program,
)
from .material import MaterialParams
from .tmcmc import TmcmcConfig

_MATERIAL_KEYS = (
    "kappa",
    "shear",
    "sigma_y",
    "n_exp",
    "k_drag",
    "b_r",
    "h_r",
    "b_chi",
    "h_chi",
)
_LOAD_KEYS = ("peak", "period", "cycles", "dt", "knots")
_SPECIMEN_KEYS = ("edge_length", "monitored_node")
_NOISE_KEYS = ("kind", "sigma_abs", "sigma_rel")
_OBSERVE_KEYS = ("every",)
_PRIOR_KEYS = ("relative_width",) + PARAM_NAMES
_TMCMC_KEYS = (
    "n_samples",
    "cov_target",
    "beta_scale",
    "burn_in",
    "burn_in_final",
    "accept_lo",
    "accept_hi",
    "max_stages",
)
_TOP_KEYS = ("material", "load", "specimen", "noise", "observe", "prior", "tmcmc", "output", "seed")


def _check_keys(section, allowed, path):
    if not isinstance(section, dict):
        raise ConfigError(path, "must be an object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}", "unknown key")


def _number(section, key, path, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required value")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", "must be a number")
    return float(v)


def _integer(section, key, path, default=None):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", "must be an integer")
    return v


@dataclass
class RunConfig:
    """Validated configuration plus the raw document for the manifest."""

    material: MaterialParams
    q_true: ParameterVector
    fixed: FixedParams
    program: LoadProgram
    specimen: Specimen
    noise: NoiseModel
    sample_times: np.ndarray
    prior: PriorBox
    tmcmc: TmcmcConfig
    output: str
    seed: int
    raw: dict


def _build_material(doc):
    sec = doc.get("material")
    if sec is None:
        raise ConfigError("material", "missing required section")
    _check_keys(sec, _MATERIAL_KEYS, "material")
    vals = {k: _number(sec, k, "material", required=True) for k in _MATERIAL_KEYS}
    try:
        mat = MaterialParams(**vals)
    except ValueError as exc:
        raise ConfigError("material", str(exc)) from None
    q = ParameterVector(
        kappa=mat.kappa,
        shear=mat.shear,
        b_r=mat.b_r,
        b_chi=mat.b_chi,
        sigma_y=mat.sigma_y,
    )
    fixed = FixedParams(
        n_exp=mat.n_exp, k_drag=mat.k_drag, h_r=mat.h_r, h_chi=mat.h_chi
    )
    return mat, q, fixed


def _build_program(doc):
    sec = doc.get("load", {})
    _check_keys(sec, _LOAD_KEYS, "load")
    dt = _number(sec, "dt", "load", default=0.01)
    cycles = _integer(sec, "cycles", "load", default=3)
    try:
        if "knots" in sec:
            if "peak" in sec or "period" in sec:
                raise ConfigError("load.knots", "knots exclude peak/period")
            knots = tuple(
                (float(t), tuple(float(x) for x in v)) for t, v in sec["knots"]
            )
            return LoadProgram(knots=knots, cycles=cycles, dt=dt)
        peak = _number(sec, "peak", "load", default=2.4e8)
        period = _number(sec, "period", "load", default=4.0)
        return default_cyclic_program(peak=peak, period=period, cycles=cycles, dt=dt)
    except (ValueError, TypeError) as exc:
        raise ConfigError("load", str(exc)) from None


def _build_prior(doc, q_true):
    sec = doc.get("prior", {})
    _check_keys(sec, _PRIOR_KEYS, "prior")
    explicit = [k for k in PARAM_NAMES if k in sec]
    try:
        if explicit:
            if len(explicit) != len(PARAM_NAMES):
                missing = set(PARAM_NAMES) - set(explicit)
                raise ConfigError("prior", f"missing bounds for {sorted(missing)}")
            lows, highs = [], []
            for k in PARAM_NAMES:
                pair = sec[k]
                if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                    raise ConfigError(f"prior.{k}", "must be a [low, high] pair")
                lows.append(float(pair[0]))
                highs.append(float(pair[1]))
            return PriorBox(lows=tuple(lows), highs=tuple(highs))
        width = _number(sec, "relative_width", "prior", default=0.5)
        return PriorBox.around(q_true, rel_width=width)
    except ValueError as exc:
        raise ConfigError("prior", str(exc)) from None


def validate(doc):
    """Validate a raw config document and build the typed RunConfig."""
    _check_keys(doc, _TOP_KEYS, "config")
    material, q_true, fixed = _build_material(doc)
    program = _build_program(doc)
    n_grid_f = program.duration / program.dt
    if abs(n_grid_f - round(n_grid_f)) > 1e-9 * max(n_grid_f, 1.0):
        raise ConfigError("load.dt", "program duration must be an integer multiple of dt")

    sec = doc.get("specimen", {})
    _check_keys(sec, _SPECIMEN_KEYS, "specimen")
    try:
        specimen = Specimen(
            edge_length=_number(sec, "edge_length", "specimen", default=1.0),
            monitored_node=sec.get("monitored_node", "E"),
        )
    except ValueError as exc:
        raise ConfigError("specimen", str(exc)) from None

    sec = doc.get("noise", {})
    _check_keys(sec, _NOISE_KEYS, "noise")
    try:
        kwargs = {}
        if "sigma_abs" in sec:
            kwargs["sigma_abs"] = _number(sec, "sigma_abs", "noise")
        if "sigma_rel" in sec or not kwargs:
            kwargs["sigma_rel"] = _number(sec, "sigma_rel", "noise", default=0.01)
        noise = NoiseModel(kind=sec.get("kind", "gaussian"), **kwargs)
    except ValueError as exc:
        raise ConfigError("noise", str(exc)) from None

    sec = doc.get("observe", {})
    _check_keys(sec, _OBSERVE_KEYS, "observe")
    every = _number(sec, "every", "observe", default=0.04)
    if not every > 0.0:
        raise ConfigError("observe.every", "must be positive")
    ratio = every / program.dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError("observe.every", "must be an integer multiple of load.dt")
    stride = int(round(ratio))
    n_grid = int(round(program.duration / program.dt))
    sample_times = np.arange(stride, n_grid + 1, stride) * program.dt
    if sample_times.size == 0:
        raise ConfigError("observe.every", "no sample times inside the program")

    prior = _build_prior(doc, q_true)

    sec = doc.get("tmcmc", {})
    _check_keys(sec, _TMCMC_KEYS, "tmcmc")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")
    try:
        tm = TmcmcConfig(
            n_samples=_integer(sec, "n_samples", "tmcmc", default=1000),
            cov_target=_number(sec, "cov_target", "tmcmc", default=1.0),
            beta_scale=_number(sec, "beta_scale", "tmcmc", default=0.2),
            burn_in=_integer(sec, "burn_in", "tmcmc", default=200),
            burn_in_final=_integer(sec, "burn_in_final", "tmcmc", default=500),
            accept_lo=_number(sec, "accept_lo", "tmcmc", default=0.2),
            accept_hi=_number(sec, "accept_hi", "tmcmc", default=0.3),
            max_stages=_integer(sec, "max_stages", "tmcmc", default=50),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("tmcmc", str(exc)) from None

    output = doc.get("output", "out")
    if not isinstance(output, str):
        raise ConfigError("output", "must be a path string")

    return RunConfig(
        material=material,
        q_true=q_true,
        fixed=fixed,
        program=program,
        specimen=specimen,
        noise=noise,
        sample_times=sample_times,
        prior=prior,
        tmcmc=tm,
        output=output,
        seed=seed,
        raw=copy.deepcopy(doc),
    )


def load(path, overrides=()):
    """Parse, apply dotted-path overrides, validate."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be an object")
    for item in overrides:
        apply_override(doc, item)
    return validate(doc)


def apply_override(doc, item):
    """Apply one `a.b.c=value` override; values parse as JSON literals."""
    if "=" not in item:
        raise ConfigError("--set", f"expected KEY=VALUE, got {item!r}")
    key, _, raw = item.partition("=")
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError("--set", f"malformed key {key!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "path collides with a non-object value")
    node[parts[-1]] = value
