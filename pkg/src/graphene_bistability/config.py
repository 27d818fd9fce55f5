"""Run configuration: one JSON document per CLI run.

Every block is checked against a fixed schema before any computation and
unknown keys are rejected. Errors carry the line of the offending key in the
source document when it can be located.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any

from .physics_core import SystemParams

COMMANDS = ("rates", "phase-map", "hysteresis", "spectrum", "g2", "slowdown")

# system block: config key -> (SystemParams field, scale to internal units)
SYSTEM_KEYS = {
    "transition_energy_ev": ("transition_energy", 1.0),
    "dipole_moment_enm": ("dipole_moment", 1.0),
    "orientation": ("orientation", None),
    "gamma0_per_ns": ("gamma0", 1e9),
    "extra_dephasing_ev": ("extra_dephasing", 1.0),
    "z_nm": ("z_distance", 1.0),
    "eps_above": ("eps_above", 1.0),
    "eps_below": ("eps_below", 1.0),
    "fermi_energy_ev": ("fermi_energy", 1.0),
    "scattering_energy_ev": ("scattering_energy", 1.0),
    "intensity_w_m2": ("intensity", 1.0),
    "detuning0_ev": ("detuning0", 1.0),
    "screening": ("screening", 1.0),
}

MODEL_DEFAULTS = {"lamb": "kk", "conductivity": "local", "freeze_dephasing": False, "tol": 1e-9}

AXIS_NAMES = {
    "fermi_energy_ev": "fermi_energy",
    "detuning0_ev": "detuning0",
    "z_nm": "z_distance",
    "intensity_w_m2": "intensity",
    "transition_energy_ev": "transition_energy",
}

CONTROL_NAMES = {"fermi_energy_ev": "fermi_energy", "intensity_w_m2": "intensity", "detuning0_ev": "detuning"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line else ""
        super().__init__(where + message)
        self.line = line


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


@dataclass
class _Checker:
    text: str

    def fail(self, msg: str, key: str) -> None:
        raise ConfigError(msg, _line_of(self.text, key))

    def keys(self, block: Any, allowed, where: str, required=()) -> dict:
        if not isinstance(block, dict):
            raise ConfigError(f"{where} must be an object", _line_of(self.text, where.split(".")[-1]))
        for k in block:
            if k not in allowed:
                self.fail(f"unknown key {k!r} in {where}; allowed: {sorted(allowed)}", k)
        for k in required:
            if k not in block:
                raise ConfigError(f"{where} is missing required key {k!r}", _line_of(self.text, where.split(".")[-1]))
        return block

    def number(self, block: dict, key: str, where: str, *, positive=False, integer=False, default=None):
        if key not in block:
            if default is None:
                raise ConfigError(f"{where} is missing required key {key!r}")
            return default
        v = block[key]
        ok = isinstance(v, int if integer else (int, float)) and not isinstance(v, bool)
        if not ok or (positive and not v > 0):
            kind = "integer" if integer else "number"
            self.fail(f"{where}.{key} must be a {'positive ' if positive else ''}{kind}, got {v!r}", key)
        return v

    def choice(self, block: dict, key: str, options, where: str, default=None):
        v = block.get(key, default)
        if v not in options:
            self.fail(f"{where}.{key} must be one of {list(options)}, got {v!r}", key)
        return v

    def number_list(self, block: dict, key: str, where: str, *, positive=False, default=None) -> list:
        v = block.get(key, default)
        if not isinstance(v, list) or not v:
            self.fail(f"{where}.{key} must be a non-empty list of numbers", key)
        for x in v:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or (positive and not x > 0):
                self.fail(f"{where}.{key} contains an invalid entry {x!r}", key)
        return [float(x) for x in v]


@dataclass(frozen=True)
class AxisSpec:
    name: str  # config-facing name, e.g. fermi_energy_ev
    start: float
    stop: float
    steps: int
    scale: str = "linear"

    @property
    def param(self) -> str:
        return AXIS_NAMES[self.name]

    def values(self):
        import numpy as np

        if self.steps == 1:
            return np.array([float(self.start)])
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.steps)
        return np.linspace(self.start, self.stop, self.steps)


@dataclass
class RunConfig:
    command: str
    system: SystemParams
    model: dict
    block: dict
    output_format: str
    output_dir: str | None
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical.encode()).hexdigest()

    def provenance_lines(self) -> list[str]:
        return [f"command = {self.command}", f"config_sha256 = {self.digest}", f"config = {self.canonical}"]


def _axis(ck: _Checker, blk: dict, where: str, names) -> AxisSpec:
    ck.keys(blk, {"name", "start", "stop", "steps", "scale"}, where, required=("name", "start", "stop", "steps"))
    name = ck.choice(blk, "name", names, where)
    steps = ck.number(blk, "steps", where, positive=True, integer=True)
    scale = ck.choice(blk, "scale", ("linear", "log"), where, default="linear")
    start = ck.number(blk, "start", where)
    stop = ck.number(blk, "stop", where)
    if scale == "log" and not (start > 0 and stop > 0):
        ck.fail(f"{where}: log axis needs positive start and stop", "scale")
    return AxisSpec(name, float(start), float(stop), int(steps), scale)


def _points(ck: _Checker, lst, where: str) -> list[dict]:
    if not isinstance(lst, list) or not lst:
        raise ConfigError(f"{where}.points must be a non-empty list", _line_of(ck.text, "points"))
    out = []
    for i, p in enumerate(lst):
        w = f"{where}.points[{i}]"
        ck.keys(p, {"label", "branch"} | set(SYSTEM_KEYS), w, required=("label", "branch"))
        if not isinstance(p["label"], str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", p["label"]):
            ck.fail(f"{w}.label must be a simple file-name-safe string", "label")
        ck.choice(p, "branch", ("upper", "lower", "middle"), w)
        out.append(dict(p))
    return out


def _validate_block(ck: _Checker, command: str, blk: dict) -> dict:
    w = command
    if command == "rates":
        ck.keys(blk, {"axis", "start", "stop", "steps", "z_list_nm", "nonlocal"}, w)
        ck.choice(blk, "axis", ("transition_energy_ev", "fermi_energy_ev"), w, default="transition_energy_ev")
        ck.number(blk, "start", w, positive=True, default=0.6)
        ck.number(blk, "stop", w, positive=True, default=1.4)
        ck.number(blk, "steps", w, positive=True, integer=True, default=161)
        ck.number_list(blk, "z_list_nm", w, positive=True, default=[10.0, 12.0, 15.0, 20.0])
        if not isinstance(blk.get("nonlocal", False), bool):
            ck.fail("rates.nonlocal must be true or false", "nonlocal")
    elif command == "phase-map":
        ck.keys(blk, {"axis1", "axis2", "intensities_w_m2"}, w, required=("axis1", "axis2"))
        names = ("fermi_energy_ev", "detuning0_ev", "intensity_w_m2", "z_nm")
        a1 = _axis(ck, blk["axis1"], f"{w}.axis1", names)
        a2 = _axis(ck, blk["axis2"], f"{w}.axis2", names)
        if a1.name == a2.name:
            ck.fail("phase-map axes must differ", "axis2")
        if "intensities_w_m2" in blk:
            ck.number_list(blk, "intensities_w_m2", w, positive=True)
    elif command == "hysteresis":
        ck.keys(blk, {"control", "start", "stop", "steps", "scale", "dwell_gamma", "overlay"}, w,
                required=("control", "start", "stop", "steps"))
        _axis(ck, {"name": blk["control"], **{k: blk[k] for k in ("start", "stop", "steps") if k in blk},
                   **({"scale": blk["scale"]} if "scale" in blk else {})},
              w, tuple(CONTROL_NAMES))
        if "dwell_gamma" in blk:
            v = ck.number(blk, "dwell_gamma", w, positive=True)
            if v < 20:
                ck.fail("hysteresis.dwell_gamma must be >= 20 (adiabaticity)", "dwell_gamma")
        if not isinstance(blk.get("overlay", True), bool):
            ck.fail("hysteresis.overlay must be true or false", "overlay")
    elif command == "spectrum":
        ck.keys(blk, {"points", "span_gamma", "grid_points"}, w, required=("points",))
        _points(ck, blk["points"], w)
        ck.number(blk, "span_gamma", w, positive=True, default=60.0)
        ck.number(blk, "grid_points", w, positive=True, integer=True, default=2401)
    elif command == "g2":
        ck.keys(blk, {"points", "tau_max_gamma", "tau_points"}, w, required=("points",))
        _points(ck, blk["points"], w)
        ck.number(blk, "tau_max_gamma", w, positive=True, default=50.0)
        ck.number(blk, "tau_points", w, positive=True, integer=True, default=501)
    elif command == "slowdown":
        ck.keys(blk, {"control", "ladders"}, w, required=("ladders",))
        ck.choice(blk, "control", tuple(CONTROL_NAMES), w, default="fermi_energy_ev")
        lad = blk["ladders"]
        if not isinstance(lad, list) or not lad:
            ck.fail("slowdown.ladders must be a non-empty list", "ladders")
        for i, item in enumerate(lad):
            wi = f"{w}.ladders[{i}]"
            ck.keys(item, {"z_nm", "start_value", "bracket", "direction", "offsets", "horizon_gamma"}, wi,
                    required=("z_nm", "start_value", "bracket"))
            ck.number(item, "z_nm", wi, positive=True)
            ck.number(item, "start_value", wi)
            br = item["bracket"]
            if not (isinstance(br, list) and len(br) == 2 and all(isinstance(x, (int, float)) for x in br)):
                ck.fail(f"{wi}.bracket must be a two-number list", "bracket")
            ck.choice(item, "direction", ("lower_to_upper", "upper_to_lower"), wi, default="lower_to_upper")
            if "offsets" in item:
                ck.number_list(item, "offsets", wi, positive=True)
            if "horizon_gamma" in item:
                v = ck.number(item, "horizon_gamma", wi, positive=True)
                if v < 1e3:
                    ck.fail(f"{wi}.horizon_gamma must be >= 1000", "horizon_gamma")
    return blk


def system_from_block(block: dict, base: SystemParams | None = None) -> SystemParams:
    changes = {}
    for key, value in block.items():
        if key not in SYSTEM_KEYS:
            continue
        name, scale = SYSTEM_KEYS[key]
        changes[name] = value if scale is None or value is None else float(value) * scale
    return (base or SystemParams()).with_(**changes)


def parse_config(text: str, command: str, output_dir: str | None = None) -> RunConfig:
    """Validate a JSON configuration for ``command``."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    ck = _Checker(text)
    top = ck.keys(raw, {"system", "model", "output", *COMMANDS}, "config")
    sysblk = ck.keys(top.get("system", {}), set(SYSTEM_KEYS), "system")
    for k, v in sysblk.items():
        if k == "orientation":
            ck.choice(sysblk, k, ("parallel", "perpendicular"), "system")
        elif k == "gamma0_per_ns" and v is None:
            continue
        else:
            ck.number(sysblk, k, "system")
    try:
        system = system_from_block(sysblk)
    except ValueError as exc:
        raise ConfigError(f"system: {exc}", _line_of(text, "system")) from None

    model = dict(MODEL_DEFAULTS)
    mblk = ck.keys(top.get("model", {}), set(MODEL_DEFAULTS), "model")
    if "lamb" in mblk:
        ck.choice(mblk, "lamb", ("kk", "pv", "none"), "model")
    if "conductivity" in mblk:
        ck.choice(mblk, "conductivity", ("local", "nonlocal"), "model")
    if "freeze_dephasing" in mblk and not isinstance(mblk["freeze_dephasing"], bool):
        ck.fail("model.freeze_dephasing must be true or false", "freeze_dephasing")
    if "tol" in mblk:
        tol = ck.number(mblk, "tol", "model", positive=True)
        if not 1e-12 <= tol <= 1e-4:
            ck.fail("model.tol must lie in [1e-12, 1e-4]", "tol")
    model.update(mblk)

    oblk = ck.keys(top.get("output", {}), {"directory", "format"}, "output")
    fmt = ck.choice(oblk, "format", ("csv", "json"), "output", default="csv")
    out_dir = output_dir if output_dir is not None else oblk.get("directory")
    if out_dir is not None and not isinstance(out_dir, str):
        ck.fail("output.directory must be a string", "directory")

    block = top.get(command)
    if block is None:
        raise ConfigError(f"config has no {command!r} block")
    _validate_block(ck, command, block)
    if command == "rates" and not block.get("z_list_nm", [1]):
        ck.fail("rates.z_list_nm must not be empty", "z_list_nm")
    return RunConfig(command, system, model, block, fmt, out_dir, raw)
