"""INI-style scenario files.

Keys carry their unit in the name (``ts_us``, ``vdc_v``). A ``controller``
entry may list several controllers separated by commas; each one becomes its
own scenario sharing everything else. Example::

    [scenario]
    name = steady_state
    duration_s = 0.2
    controller = PI+MPCC, PI+IMMPCC
    speed_profile_rpm = 0:1000
    load_profile_nm = 0:0, 0.09:5

    [machine]
    vdc_v = 311
"""
from __future__ import annotations

import configparser
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable

from .analysis import MetricSpec
from .machine import MachineParams
from .mpcc import CostConfig
from .sim import DcConfig, ScenarioConfig
from .speed_loop import PiGains

BUNDLED = ("steady_state", "thd_table", "load_step", "current_limit")
SUITES = {"paper_tables": ("thd_table", "load_step")}


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _profile(text: str) -> tuple[tuple[float, float], ...]:
    points = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        t, v = item.split(":")
        points.append((float(t), float(v)))
    return tuple(points)


def _span(text: str) -> tuple[float, float]:
    a, b = text.split(":")
    return float(a), float(b)


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# section -> key -> (target field, parser)
SCHEMA: dict[str, dict[str, tuple[str, Callable]]] = {
    "scenario": {
        "name": ("name", str.strip),
        "duration_s": ("duration", float),
        "ts_us": ("Ts", lambda s: float(s) * 1e-6),
        "substeps": ("substeps", int),
        "controller": ("controller", str.strip),
        "horizon": ("horizon", int),
        "accumulate": ("accumulate", _bool),
        "delay_model": ("delay_model", str.strip),
        "id_ref_a": ("id_ref", float),
        "speed_profile_rpm": ("speed_profile", _profile),
        "load_profile_nm": ("load_profile", _profile),
        "noise_a": ("noise", float),
        "seed": ("seed", int),
    },
    "machine": {
        "rs_ohm": ("Rs", float),
        "ld_h": ("Ld", float),
        "lq_h": ("Lq", float),
        "psi_f_wb": ("psi_f", float),
        "pole_pairs": ("p_n", int),
        "j_kgm2": ("J", float),
        "b_nms": ("B", float),
        "vdc_v": ("Vdc", float),
    },
    "cost": {
        "i_max_a": ("i_max", float),
        "penalty": ("penalty", float),
    },
    "pi": {
        "kp_a_per_rad_s": ("Kp", float),
        "ki_a_per_rad": ("Ki", float),
        "limit_a": ("limit", float),
    },
    "dc": {
        "kp_a_per_rad_s": ("kp", float),
        "beta1_per_s": ("beta1", float),
        "beta2_per_s2": ("beta2", float),
        "jn_kgm2": ("J_n", _opt_float),
        "limit_a": ("limit", float),
    },
    "analysis": {
        "thd_window_s": ("thd_window", _span),
        "ripple_window_s": ("ripple_window", _span),
        "t_disturb_s": ("t_disturb", float),
        "t_end_s": ("t_end", float),
        "band_fraction": ("band_fraction", float),
    },
}


def _new_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    return cp


def resolve_key(dotted: str) -> tuple[str, str]:
    """Map ``section.key`` or a bare key that is unique across sections."""
    if "." in dotted:
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {dotted!r}")
        return section, key
    hits = [s for s, keys in SCHEMA.items() if dotted in keys]
    if not hits:
        raise ConfigError(f"unknown config key {dotted!r}")
    if len(hits) > 1:
        raise ConfigError(f"ambiguous key {dotted!r}; qualify it with one of {hits}")
    return hits[0], dotted


def parse_overrides(items: Iterable[str]) -> list[tuple[str, str, str]]:
    out = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        section, k = resolve_key(key.strip())
        out.append((section, k, value.strip()))
    return out


def read_sections(text: str, source: str = "<string>",
                  overrides: Iterable[str] = ()) -> dict[str, dict[str, str]]:
    cp = _new_parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    raw: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, value in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            raw.setdefault(section, {})[key] = value
    for section, key, value in parse_overrides(overrides):
        raw.setdefault(section, {})[key] = value
    return raw


def _fields(raw: dict[str, dict[str, str]], section: str) -> dict:
    out = {}
    for key, value in raw.get(section, {}).items():
        target, conv = SCHEMA[section][key]
        try:
            out[target] = conv(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {value!r} ({exc})") from exc
    return out


def build(raw: dict[str, dict[str, str]]) -> tuple[list[ScenarioConfig], MetricSpec]:
    try:
        machine = MachineParams(**_fields(raw, "machine"))
        cost = CostConfig(**_fields(raw, "cost"))
        pi_kw = _fields(raw, "pi")
        pi_kw.setdefault("limit", cost.i_max)
        dc_kw = _fields(raw, "dc")
        dc_kw.setdefault("limit", cost.i_max)
        pi, dc = PiGains(**pi_kw), DcConfig(**dc_kw)
        scen = _fields(raw, "scenario")
        controllers = [c.strip() for c in scen.pop("controller", "PI+IMMPCC").split(",") if c.strip()]
        base_name = scen.pop("name", "scenario")
        cfgs = []
        for ctrl in controllers:
            cfgs.append(ScenarioConfig(name=base_name, controller=ctrl, machine=machine, cost=cost,
                                       pi=pi, dc=dc, **scen))
        metrics = MetricSpec(**_fields(raw, "analysis"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfgs, metrics


def load_text(text: str, source: str = "<string>", overrides: Iterable[str] = ()):
    return build(read_sections(text, source, overrides))


def load_file(path, overrides: Iterable[str] = ()):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return load_text(text, str(path), overrides)


def bundled_path(name: str) -> Path:
    """Path of a bundled scenario file, by stem (``steady_state``) or file name."""
    stem = name[:-4] if name.endswith(".cfg") else name
    if stem not in BUNDLED:
        raise ConfigError(f"no bundled scenario named {name!r}; have {BUNDLED}")
    return Path(str(resources.files("fcsmpcc") / "scenarios" / f"{stem}.cfg"))
