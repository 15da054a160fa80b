"""JSON run configuration.

A config file is one JSON object whose keys are :class:`RunConfig` field
names, for example::

    {"domain": "tshape", "scheme": "full", "estimator": "eta",
     "refinement": "adaptive", "max_iterations": 20, "dof_cap": 350000}

Missing keys take the defaults (full scheme, eta estimator, mu = 0.5).
"""
from __future__ import annotations

import json
from dataclasses import fields

from .adaptivity import RunConfig

_TYPES = {
    "domain": str, "scheme": str, "refinement": str, "estimator": str, "out": str,
    "mu": float, "shift": float, "tol": float, "lambda_ref": float, "fraction": float,
    "n0": int, "max_iterations": int, "nev": int, "dof_cap": int, "seed": int,
}
_NULLABLE = {"n0", "lambda_ref", "out"}


class ConfigError(ValueError):
    """Schema violation; the message names the offending field."""


def _coerce(name, value):
    if value is None:
        if name in _NULLABLE:
            return None
        raise ConfigError(f"{name}: may not be null")
    kind = _TYPES[name]
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind is str and isinstance(value, str):
        return value
    raise ConfigError(f"{name}: expected {kind.__name__}, got {type(value).__name__} {value!r}")


def parse_config(path=None, overrides=None):
    """Build a validated :class:`RunConfig` from a JSON file and/or overrides.

    Values in ``overrides`` (for instance command-line flags) take
    precedence over the file; ``None`` overrides are ignored.
    """
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
    data = dict(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field (allowed: {', '.join(sorted(known))})")
    kwargs = {k: _coerce(k, v) for k, v in data.items()}
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
