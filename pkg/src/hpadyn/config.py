"""Run configuration: a flat, typed key-value file with section headers.

Unknown sections or keys are rejected outright; every value is parsed to
its declared type.  The effective configuration (defaults merged in)
serializes canonically, and its SHA-256 hash stamps every output file's
sidecar so runs are reproducible and comparable.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import dde
from .errors import ConfigError

__all__ = ["RunConfig", "parse_config", "default_config"]


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


# section -> key -> (parser, default); None default means "absent"
_SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "model": {
        "kind": (str, "dimensional"),
        "e_a": (float, 0.04),
        "e_c": (float, 0.01),
        "m1": (int, 4),
        "m2": (int, 4),
        "a": (float, 21.0),
        "c": (float, 6.11),
        "h": (float, 7.66),
        "beta": (float, 1.0),
        "tau1": (float, 15.0),
        "tau2": (float, 15.0),
        "c1": (float, None),
        "c2": (float, None),
        "c3": (float, None),
        "t1": (float, None),
        "t2": (float, None),
    },
    "run": {
        "h_override": (float, None),
        "seed": (int, 0),
        "output_dir": (str, "hpadyn-out"),
        "step": (float, 1e-3),
        "transient": (float, 200.0),
        "detect_window": (float, 30.0),
        "threads": (int, 0),  # 0 = use available cores
        "figures": (_parse_bool, True),
    },
    "simulate": {
        "t_end": (float, 50.0),
        "x0": (float, 0.8858),
        "y0": (float, 1.7461),
    },
    "jacobian": {
        "n_samples": (int, 200),
        "tau": (float, 0.0),
        "re_min": (float, -6.0),
        "re_max": (float, 3.0),
        "im_min": (float, -15.0),
        "im_max": (float, 15.0),
        "n_re": (int, 301),
        "n_im": (int, 301),
    },
    "floquet": {
        "n_basis": (int, 50),
        "c": (float, 1.0),
        "re_min": (float, -1.5),
        "re_max": (float, 1.5),
        "im_min": (float, -1.5),
        "im_max": (float, 1.5),
        "n_re": (int, 201),
        "n_im": (int, 201),
    },
    "koopman": {
        "d": (int, 10),
        "n_init": (int, 10000),
        "dict_size": (int, 400),
        "rank_tol": (float, 1e-12),
        "c": (float, 1.05),
        "box_x_min": (float, -3.0),
        "box_x_max": (float, 5.0),
        "box_y_min": (float, -1.0),
        "box_y_max": (float, 8.0),
        "re_min": (float, -1.5),
        "re_max": (float, 1.5),
        "im_min": (float, -1.5),
        "im_max": (float, 1.5),
        "n_re": (int, 201),
        "n_im": (int, 201),
    },
    "sweep": {
        "h_values": (_parse_floats, (4.0, 7.66, 12.0, 18.0, 23.0)),
        "n_samples": (int, 60),
        "n_init": (int, 2000),
    },
    "render": {
        "levels": (_parse_floats, ()),  # empty = default log-spaced levels
        "overlay": (str, "none"),
    },
}

_DIMENSIONAL_KEYS = ("e_a", "e_c", "a", "c", "beta", "tau1", "tau2")
_NONDIM_KEYS = ("c1", "c2", "c3", "t1", "t2")


@dataclass(frozen=True)
class RunConfig:
    """Typed, validated configuration with canonical hashing."""

    values: dict

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def params(self) -> dde.NondimParams:
        """Model parameters, nondimensionalized, with any h override applied."""
        m = self.values["model"]
        if m["kind"] == "dimensional":
            p = dde.nondimensionalize(dde.DimensionalParams(
                e_a=m["e_a"], e_c=m["e_c"], m1=m["m1"], m2=m["m2"], a=m["a"],
                c=m["c"], h=m["h"], beta=m["beta"], tau1=m["tau1"], tau2=m["tau2"],
            ))
        else:
            p = dde.NondimParams(c1=m["c1"], c2=m["c2"], c3=m["c3"], h=m["h"],
                                 m1=m["m1"], m2=m["m2"], t1=m["t1"], t2=m["t2"])
        h_over = self.values["run"]["h_override"]
        return p.with_h(h_over) if h_over is not None else p

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def output_dir(self) -> str:
        return self.values["run"]["output_dir"]

    @property
    def step(self) -> float:
        return self.values["run"]["step"]

    @property
    def threads(self) -> int:
        t = self.values["run"]["threads"]
        return t if t > 0 else (os.cpu_count() or 1)

    def axes(self, section: str) -> tuple[np.ndarray, np.ndarray]:
        s = self.values[section]
        return (np.linspace(s["re_min"], s["re_max"], s["n_re"]),
                np.linspace(s["im_min"], s["im_max"], s["n_im"]))

    def koopman_box(self) -> tuple:
        s = self.values["koopman"]
        return ((s["box_x_min"], s["box_x_max"]), (s["box_y_min"], s["box_y_max"]))

    def replace(self, section: str, key: str, value) -> "RunConfig":
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        values = {s: dict(kv) for s, kv in self.values.items()}
        values[section][key] = value
        return RunConfig(_validate(values))

    def serialize(self) -> str:
        """Canonical INI text of the effective configuration."""
        out = io.StringIO()
        for section in sorted(self.values):
            out.write(f"[{section}]\n")
            for key in sorted(self.values[section]):
                val = self.values[section][key]
                if val is None:
                    continue
                if isinstance(val, tuple):
                    val = ",".join(repr(float(v)) for v in val)
                elif isinstance(val, bool):
                    val = "true" if val else "false"
                elif isinstance(val, float):
                    val = repr(val)
                out.write(f"{key} = {val}\n")
            out.write("\n")
        return out.getvalue()

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]


def _validate(values: dict) -> dict:
    m = values["model"]
    if m["kind"] not in ("dimensional", "nondimensional"):
        raise ConfigError("model kind must be 'dimensional' or 'nondimensional'")
    if m["kind"] == "dimensional":
        missing = [k for k in _NONDIM_KEYS if m[k] is not None]
        if missing:
            raise ConfigError(
                f"dimensional model must not set nondimensional keys {missing}"
            )
    else:
        absent = [k for k in _NONDIM_KEYS if m[k] is None]
        if absent:
            raise ConfigError(f"nondimensional model requires keys {absent}")
    r = values["render"]
    if r["overlay"] not in ("axis", "circle", "none"):
        raise ConfigError("render overlay must be 'axis', 'circle', or 'none'")
    return values


def default_config() -> RunConfig:
    values = {s: {k: d for k, (_, d) in kv.items()} for s, kv in _SCHEMA.items()}
    return RunConfig(_validate(values))


def parse_config(path: str | None) -> RunConfig:
    """Read and validate a configuration file; ``None`` gives the defaults."""
    values = {s: {k: d for k, (_, d) in kv.items()} for s, kv in _SCHEMA.items()}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                parser, _ = _SCHEMA[section][key]
                try:
                    values[section][key] = parser(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for [{section}] {key}: {raw!r} ({exc})"
                    ) from exc
        # explicit nondimensional parametrization clears dimensional defaults
        if values["model"]["kind"] == "nondimensional":
            cp_model = dict(cp.items("model")) if cp.has_section("model") else {}
            if "h" not in cp_model:
                raise ConfigError("nondimensional model requires an explicit h")
    return RunConfig(_validate(values))
