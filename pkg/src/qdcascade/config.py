"""Strict, schema-checked scenario configuration.

Configs are YAML mappings.  Parsing is strict: unknown keys are errors (with
the dotted path and a close-match suggestion), as are type and range
violations; error messages carry the physical unit of the offending key.
Every run writes the fully resolved configuration next to its outputs, and
re-running from that echo reproduces the outputs byte for byte.
"""

from __future__ import annotations

import difflib
import hashlib
from dataclasses import dataclass

import yaml

from .cascade import BackgroundSpec, ChannelSpec
from .detection import DetectorSpec
from .emitters import OverhauserModel, SourceDotSpec, TargetDotSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    default: object
    kind: type
    unit: str = ""
    low: float | None = None
    high: float | None = None
    choices: tuple | None = None


def _positive(default, unit):
    return Field(default, float, unit, low=0.0)


def _fraction(default, unit="dimensionless"):
    return Field(default, float, unit, low=0.0, high=1.0)


SHARED_SCHEMA = {
    "master_seed": Field(12345, int, "64-bit seed"),
    "source": {
        "fss_ghz": Field(4.9, float, "GHz", low=1e-9),
        "lifetime_ns": Field(0.6, float, "ns", low=1e-6),
        "detuning_offset_ghz": Field(0.0, float, "GHz"),
        "stark_slope_ghz_per_v": Field(20.0, float, "GHz/V"),
        "v0": Field(0.0, float, "V"),
    },
    "target": {
        "delta_e_ghz": _positive(2.45, "GHz"),
        "delta_h_ghz": _positive(2.45, "GHz"),
        "lifetime_ns": Field(0.6, float, "ns", low=1e-6),
        "branching_vertical": _fraction(0.5),
        "stark_slope_ghz_per_v": Field(20.0, float, "GHz/V"),
        "v0": Field(0.0, float, "V"),
    },
    "channel": {
        "eta_ch": _fraction(0.003 * 0.20),
        "eta_collect": _fraction(0.20),
        "eta_pol": _fraction(0.5),
        "eta_filter": _fraction(0.85),
        "eta_det": _fraction(0.80),
    },
    "background": {
        "dark_rate": _positive(1.0, "1/s"),
        "ambient_rate": _positive(1.0, "1/s"),
        "eom_extinction": Field(1e6, float, "on/off ratio", low=1.0),
        "tpe_amplitude": _positive(0.0, "1/ns"),
        "tpe_short_tau": Field(0.6, float, "ns", low=1e-6),
        "tpe_long_tau": Field(5.0, float, "ns", low=1e-6),
    },
    "detector": {
        "efficiency": _fraction(1.0),
        "jitter_sigma_ps": _positive(30.0, "ps"),
        "dead_time_ns": _positive(25.0, "ns"),
        "dark_rate": _positive(0.0, "1/s"),
    },
    "overhauser": {
        "sigma_ghz": _positive(0.0, "GHz"),
    },
}


def _walk_schema(schema, data, path, out):
    for key, val in data.items():
        if key not in schema:
            known = list(schema)
            hint = difflib.get_close_matches(str(key), [str(k) for k in known], n=3)
            loc = ".".join(path + [str(key)])
            msg = f"unknown key '{loc}'"
            if hint:
                msg += f"; did you mean: {', '.join(hint)}?"
            raise ConfigError(msg)
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{'.'.join(path + [str(key)])}' must be a mapping")
            _walk_schema(spec, val, path + [str(key)], out.setdefault(key, {}))
        else:
            out[key] = _check_leaf(spec, val, ".".join(path + [str(key)]))


def _check_leaf(spec: Field, val, loc):
    if spec.kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if spec.kind is int and isinstance(val, bool):
        raise ConfigError(f"'{loc}' must be an integer, got a boolean")
    if not isinstance(val, spec.kind):
        raise ConfigError(f"'{loc}' must be {spec.kind.__name__} ({spec.unit}), got {type(val).__name__}")
    if spec.choices is not None and val not in spec.choices:
        raise ConfigError(f"'{loc}' must be one of {list(spec.choices)}, got {val!r}")
    if spec.low is not None and val < spec.low:
        raise ConfigError(f"'{loc}' must be >= {spec.low} ({spec.unit}), got {val}")
    if spec.high is not None and val > spec.high:
        raise ConfigError(f"'{loc}' must be <= {spec.high} ({spec.unit}), got {val}")
    return val


def _defaults(schema):
    out = {}
    for key, spec in schema.items():
        out[key] = _defaults(spec) if isinstance(spec, dict) else spec.default
    return out


def resolve(schema: dict, overrides: dict) -> dict:
    """Defaults overlaid with overrides, strictly validated."""
    resolved = _defaults(schema)
    checked: dict = {}
    _walk_schema(schema, overrides, [], checked)

    def merge(dst, src):
        for k, v in src.items():
            if isinstance(v, dict):
                merge(dst[k], v)
            else:
                dst[k] = v

    merge(resolved, checked)
    return resolved


def apply_dotted(overrides: dict, dotted: str, raw_value: str):
    """Apply a --set key=value style override (value parsed as YAML)."""
    keys = dotted.split(".")
    node = overrides
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot descend into non-mapping at '{dotted}'")
    node[keys[-1]] = yaml.safe_load(raw_value)


def dump_resolved(resolved: dict) -> str:
    return yaml.safe_dump(resolved, sort_keys=True, default_flow_style=False)


def config_digest(resolved: dict) -> str:
    return hashlib.sha256(dump_resolved(resolved).encode()).hexdigest()[:16]


# -- spec builders ---------------------------------------------------------------


def source_from(cfg: dict) -> SourceDotSpec:
    s = cfg["source"]
    return SourceDotSpec(
        fss_ghz=s["fss_ghz"],
        gamma1=1.0 / s["lifetime_ns"],
        detuning_offset_ghz=s["detuning_offset_ghz"],
        stark_slope_ghz_per_v=s["stark_slope_ghz_per_v"],
        v0=s["v0"],
    )


def target_from(cfg: dict) -> TargetDotSpec:
    t = cfg["target"]
    bv = t["branching_vertical"]
    return TargetDotSpec(
        delta_e_ghz=t["delta_e_ghz"],
        delta_h_ghz=t["delta_h_ghz"],
        gamma2=1.0 / t["lifetime_ns"],
        branching=(bv, 1.0 - bv),
        stark_slope_ghz_per_v=t["stark_slope_ghz_per_v"],
        v0=t["v0"],
    )


def channel_from(cfg: dict) -> ChannelSpec:
    return ChannelSpec(**cfg["channel"])


def background_from(cfg: dict) -> BackgroundSpec:
    return BackgroundSpec(**cfg["background"])


def detector_from(cfg: dict) -> DetectorSpec:
    return DetectorSpec(**cfg["detector"])


def overhauser_from(cfg: dict) -> OverhauserModel:
    return OverhauserModel(sigma_ghz=cfg["overhauser"]["sigma_ghz"])
