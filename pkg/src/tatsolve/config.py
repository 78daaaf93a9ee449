"""Experiment configuration: a strict INI dialect.

Sections hold ``key = value`` lines; ``#`` starts a comment. Unknown
sections or keys, malformed values and out-of-range values are errors that
name the offending line. Every key has a documented default (``SCHEMA``).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

from .grid import make_domain
from .medium import Cutoff, MediumSpec, build_medium, build_phantom, complete_cutoff, partial_cutoff


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# -- value types --------------------------------------------------------------

def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _opt_float(s):
    return None if s.strip().lower() in ("", "none", "auto") else _float(s)


def _int(s):
    return int(s)


def _bool(s):
    t = s.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s):
    return s.strip()


def _pair(s):
    parts = [p for p in s.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return (_float(parts[0]), _float(parts[1]))


def _opt_pair(s):
    return None if s.strip().lower() in ("", "none") else _pair(s)


def _float_list(s):
    return tuple(_float(p) for p in s.replace(",", " ").split())


def _int_list(s):
    return tuple(_int(p) for p in s.replace(",", " ").split())


def _fmt_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt_value(x) for x in v)
    return str(v)


def _choice(*options):
    def check(v):
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
    return check


def _positive(v):
    if v is not None and not v > 0:
        raise ValueError("must be positive")


def _nonneg(v):
    if v is not None and v < 0:
        raise ValueError("must be nonnegative")


def _unit(v):
    if not 0 < v <= 1:
        raise ValueError("must lie in (0, 1]")


def _at_least(n):
    def check(v):
        if v < n:
            raise ValueError(f"must be at least {n}")
    return check


def _nonneg_list(v):
    if any(x < 0 for x in v):
        raise ValueError("entries must be nonnegative")


def _grid_list(v):
    if any(x < 8 for x in v):
        raise ValueError("grid sizes must be at least 8 cells")


# section -> key -> (parser, default, range check)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "geometry": {
        "shape": (_str, "square", _choice("square", "disk")),
        "size": (_float, 1.0, _positive),
        "cells": (_int, 64, _at_least(8)),
        "buffer_width": (_float, 0.85, _positive),
    },
    "medium": {
        "c_kind": (_str, "constant", _choice("constant", "bump", "inclusion")),
        "c_value": (_float, 1.0, _positive),
        "c_amplitude": (_float, 0.0, None),
        "c_width": (_float, 0.2, _positive),
        "c_radius": (_float, 0.2, _positive),
        "c_mollifier": (_float, 0.1, _nonneg),
        "c_center": (_pair, (0.0, 0.0), None),
        "a_kind": (_str, "constant", _choice("constant", "bump", "inclusion")),
        "a_value": (_float, 0.0, _nonneg),
        "a_amplitude": (_float, 0.0, _nonneg),
        "a_width": (_float, 0.3, _positive),
        "a_radius": (_float, 0.2, _positive),
        "a_mollifier": (_float, 0.1, _nonneg),
        "a_center": (_pair, (0.0, 0.0), None),
        "smoothness_budget": (_float, 0.5, _positive),
        "attenuation_outside": (_bool, False, None),
    },
    "phantom": {
        "kind": (_str, "gaussian", _choice("zero", "gaussian", "disk", "box", "checkerboard", "random")),
        "center": (_pair, (0.1, -0.05), None),
        "amplitude": (_float, 1.0, None),
        "width": (_float, 0.06, _positive),
        "radius": (_float, 0.2, _positive),
        "half_size": (_pair, (0.2, 0.1), None),
        "cell": (_float, 0.0625, _positive),
        "mollifier": (_float, 0.04, _nonneg),
        "n_blobs": (_int, 3, _at_least(1)),
        "min_margin": (_opt_float, None, _nonneg),
    },
    "measurement": {
        "T": (_float, 1.5556349186104046, _positive),
        "dt": (_opt_float, None, _positive),
        "cfl_safety": (_float, 0.9, _unit),
        "noise_std": (_float, 0.0, _nonneg),
    },
    "cutoff": {
        "mode": (_str, "none", _choice("none", "complete", "partial")),
        "width": (_opt_float, None, _positive),
        "T0": (_opt_float, None, _positive),
        "margin": (_float, 0.05, _nonneg),
        "arc_range": (_opt_pair, None, None),
        "arc_width": (_opt_float, None, _positive),
    },
    "solver": {
        "tol_elliptic": (_float, 1e-10, _positive),
        "max_iters": (_int, 20, _at_least(1)),
        "tol": (_float, 1e-8, _positive),
        "patience": (_int, 3, _at_least(1)),
    },
    "analysis": {
        "n_directions": (_int, 64, _at_least(8)),
        "map_directions": (_int, 16, _at_least(8)),
        "K_radius": (_float, 0.5, _unit),
    },
    "sweep": {
        "attenuation_scales": (_float_list, (0.0, 0.25, 0.5, 1.0), _nonneg_list),
        "attenuation_levels": (_float_list, (0.05, 0.1, 0.2, 0.4), _nonneg_list),
        "grid_sizes": (_int_list, (32, 64), _grid_list),
    },
    "output": {
        "directory": (_str, "out", None),
        "seed": (_int, 0, _nonneg),
    },
}


@dataclass
class ExperimentConfig:
    """Parsed configuration; ``values[section][key]`` holds every key."""

    values: Dict[str, Dict[str, object]] = field(default_factory=dict)

    def __getitem__(self, section):
        return self.values[section]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    @property
    def T(self):
        return self.values["measurement"]["T"]

    def hash(self):
        """Digest of every experiment parameter; the output directory is excluded."""
        vals = {s: dict(v) for s, v in self.values.items()}
        vals["output"]["directory"] = ""
        return hashlib.sha256(serialize(ExperimentConfig(vals)).encode()).hexdigest()[:16]

    def replace(self, section, **kw):
        vals = {s: dict(v) for s, v in self.values.items()}
        for k, v in kw.items():
            if k not in SCHEMA[section]:
                raise ConfigError(f"unknown key {k!r} in [{section}]")
            vals[section][k] = v
        cfg = ExperimentConfig(vals)
        _check_contracts(cfg, None)
        return cfg

    # -- builders --------------------------------------------------------

    def geometry(self):
        g = self.values["geometry"]
        return make_domain(g["shape"], g["size"], g["cells"], g["buffer_width"])

    def medium_spec(self):
        m = self.values["medium"]

        def params(p):
            kind = m[p + "_kind"]
            if kind == "constant":
                return {"value": m[p + "_value"]}
            if kind == "bump":
                return {"amplitude": m[p + "_amplitude"], "width": m[p + "_width"],
                        "center": m[p + "_center"]}
            return {"amplitude": m[p + "_amplitude"], "radius": m[p + "_radius"],
                    "mollifier": m[p + "_mollifier"], "center": m[p + "_center"]}

        return MediumSpec(m["c_kind"], params("c"), m["a_kind"], params("a"),
                          m["smoothness_budget"], m["attenuation_outside"])

    def medium(self, geometry=None):
        return build_medium(geometry or self.geometry(), self.medium_spec())

    def phantom_spec(self, seed=None):
        p = dict(self.values["phantom"])
        p["seed"] = self.values["output"]["seed"] if seed is None else seed
        if p["min_margin"] is None:
            del p["min_margin"]
        return p

    def phantom(self, geometry=None, seed=None):
        from .medium import random_phantom
        geometry = geometry or self.geometry()
        spec = self.phantom_spec(seed)
        if spec["kind"] == "random":
            return random_phantom(geometry, spec["seed"], spec["n_blobs"], spec.get("min_margin"))
        return build_phantom(geometry, spec)

    def cutoff(self, T0=None) -> Optional[Cutoff]:
        c = self.values["cutoff"]
        T = self.T
        if c["mode"] == "none":
            return None
        if c["mode"] == "partial":
            if c["arc_range"] is None:
                raise ConfigError("partial cutoff needs arc_range")
            return partial_cutoff(T, c["arc_range"], c["width"], c["arc_width"])
        T0 = c["T0"] if c["T0"] is not None else T0
        if T0 is None:
            raise ConfigError("complete cutoff needs T0 (set it or let the driver compute it)")
        return complete_cutoff(T, T0, c["width"], c["margin"])


def defaults():
    return ExperimentConfig({s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()})


def _check_contracts(cfg, lines):
    g, m = cfg["geometry"], cfg["measurement"]

    def where(section, key):
        return None if lines is None else lines.get((section, key))

    if not g["buffer_width"] > m["T"] / 2:
        ln = where("measurement", "T") or where("geometry", "buffer_width")
        raise ConfigError(f"buffer_width {g['buffer_width']} must exceed T/2 = {m['T'] / 2}", ln)
    c = cfg["cutoff"]
    if c["mode"] == "partial" and c["arc_range"] is None:
        raise ConfigError("partial cutoff needs arc_range", where("cutoff", "mode"))


def parse_config(text) -> ExperimentConfig:
    cfg = defaults()
    seen = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", n)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", n)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n)
        if section is None:
            raise ConfigError("key outside any section", n)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", n)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[section, key]})", n)
        parser, _, check = SCHEMA[section][key]
        try:
            v = parser(value)
            if check is not None:
                check(v)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {value!r} ({exc})", n) from None
        cfg.values[section][key] = v
        seen[section, key] = n
    _check_contracts(cfg, seen)
    return cfg


def serialize(cfg) -> str:
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key in keys:
            out.append(f"{key} = {_fmt_value(cfg.values[section][key])}")
        out.append("")
    return "\n".join(out)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)

