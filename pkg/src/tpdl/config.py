"""Flat key/value configuration with strict key checking.

A config file holds ``key = value`` lines (an optional ``[tpdl]`` section
header is accepted). Unknown keys are an error. Any key can be overridden
from the environment as ``TPDL_<KEY>`` (upper case, dots as ``__``).

Time grids are written as ``geometric:<t0>:<t1>:<count>``,
``linear:<t0>:<t1>:<count>`` or an explicit comma-separated list.
"""
import configparser
import math
import os
from dataclasses import fields, replace

import numpy as np

from .closure import RawParams
from .decay import ConfigError, ExperimentConfig

SECTION = "tpdl"
ENV_PREFIX = "TPDL_"

# keys of the CLI itself, next to the experiment and parameter keys
CLI_KEYS = {"samples": int, "r_min": float, "r_max": float, "snapshots": bool}

PARAM_KEYS = {f.name: float for f in fields(RawParams)}
EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {"params"}


def parse_times(text):
    text = str(text).strip()
    if ":" in text:
        kind, *rest = text.split(":")
        if kind not in ("geometric", "linear") or len(rest) != 3:
            raise ConfigError(f"bad time grid {text!r}; use geometric:<t0>:<t1>:<count>")
        t0, t1, n = float(rest[0]), float(rest[1]), int(rest[2])
        if n < 2 or not t1 > t0:
            raise ConfigError(f"bad time grid {text!r}: need count >= 2 and t1 > t0")
        if kind == "geometric":
            if not t0 > 0:
                raise ConfigError("geometric time grid needs t0 > 0")
            return tuple(float(t) for t in np.geomspace(t0, t1, n))
        return tuple(float(t) for t in np.linspace(t0, t1, n))
    return _floats(text)


def _floats(text):
    out = []
    for tok in str(text).replace(";", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        low = tok.lower()
        if low in ("inf", "infinity"):
            out.append(math.inf)
        elif low in ("pi",):
            out.append(math.pi)
        else:
            out.append(float(tok))
    return tuple(out)


def _number(text):
    t = str(text).strip().lower().replace(" ", "")
    # box lengths are naturally written as multiples of pi
    if t.endswith("pi"):
        head = t[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _convert(key, value, template):
    try:
        if key == "times":
            return parse_times(value)
        if key in ("window", "ells", "ps", "bump_widths"):
            vals = _floats(value)
            if key == "ells":
                return tuple(int(v) if float(v).is_integer() else v for v in vals)
            return vals
        if key == "groups":
            return tuple(s.strip() for s in str(value).split(",") if s.strip())
        if key in PARAM_KEYS or isinstance(getattr(template, key, None), float):
            return _number(value)
        if isinstance(getattr(template, key, None), bool) or CLI_KEYS.get(key) is bool:
            return _bool(value)
        if isinstance(getattr(template, key, None), int) or CLI_KEYS.get(key) is int:
            return int(value)
        if CLI_KEYS.get(key) is float:
            return _number(value)
        return str(value).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None


def known_keys():
    return set(EXPERIMENT_KEYS) | set(PARAM_KEYS) | set(CLI_KEYS)


def read_flat(path):
    """Raw ``{key: string}`` from a config file."""
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = f"[{SECTION}]\n" + text
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    extra = [s for s in cp.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"unknown section(s) {extra}; only [{SECTION}] is allowed")
    return dict(cp[SECTION]) if cp.has_section(SECTION) else {}


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for key in known_keys():
        name = ENV_PREFIX + key.upper().replace(".", "__")
        if name in environ:
            out[key] = environ[name]
    return out


def build(defaults, raw):
    """Apply string overrides to a default ExperimentConfig.

    Returns ``(ExperimentConfig, cli_options)``.
    """
    unknown = sorted(set(raw) - known_keys())
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    exp, params, cli = {}, {}, {}
    for key, value in raw.items():
        if key in PARAM_KEYS:
            params[key] = _convert(key, value, defaults.params)
        elif key in CLI_KEYS:
            cli[key] = _convert(key, value, None)
        else:
            exp[key] = _convert(key, value, defaults)
    p = replace(defaults.params, **params)
    try:
        p.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return replace(defaults, params=p, **exp), cli


def load(defaults, path=None, environ=None):
    raw = read_flat(path) if path else {}
    raw.update(env_overrides(environ))
    return build(defaults, raw)
