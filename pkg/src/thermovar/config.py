"""Scenario files: INI sections resolved into validated, typed settings.

A scenario names one model and overrides any subset of the defaults::

    [scenario]
    model = shearband2d

    [material]
    l = 0.1

    [mesh]
    nx = 15
    ny = 30

Every key is checked against the defaults of its section before anything
is allocated; unknown keys and invalid values raise :class:`ConfigError`
with the dotted key path.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .cahn_hilliard import BCS, CHParams
from .damage import DamageParams, MODES
from .errors import ConfigError
from .plasticity import PlastParams
from .point0d import DeviceParams

MODELS = ("point0d", "ch1d", "damage1d", "shearband2d")
ALGORITHMS = ("implicit", "semi-explicit")

MATERIALS = {"point0d": DeviceParams, "ch1d": CHParams, "damage1d": DamageParams,
             "shearband2d": PlastParams}

# per-model defaults of the non-material sections
_DEFAULTS = {
    "point0d": {
        "mesh": {},
        "time": {"t_end": 1.0, "steps": 1000},
        "loading": {"control": "strain", "rate": 0.01, "hold_after": float("inf")},
        "algorithm": {"scheme": "implicit"},
    },
    "ch1d": {
        "mesh": {"cells": 256, "length": 1.0, "bc": "periodic"},
        "time": {"t_end": 0.05, "steps": 100},
        "loading": {"c_mean": 0.5, "noise": 0.01, "thermal_coupling": False},
        "algorithm": {"scheme": "implicit"},
    },
    "damage1d": {
        "mesh": {"n_el": 200, "length": 0.25},
        "time": {"t_end": 1.0, "steps": 100},
        "loading": {"u_end": 0.1, "imperfection": 0.05, "grips": True,
                    "conduction": False, "mode": "kkt"},
        "algorithm": {"scheme": "implicit"},
    },
    "shearband2d": {
        "mesh": {"nx": 10, "ny": 20, "eas": True},
        "time": {"t_end": 1.0, "steps": 200},
        "loading": {"u_end": 3.0, "weakening": 0.03},
        "algorithm": {"scheme": "semi-explicit"},
    },
}

_STUDY_KEYS = {"meshes": "", "l": "", "tau": "", "eta_f": "",
               "decreasing": "", "increasing": ""}
_OUTPUT_KEYS = {"snapshot_every": 0, "vtk": True}


@dataclass
class Scenario:
    """Fully resolved scenario; ``resolved()`` gives the echo for summaries."""

    model: str
    material: object
    mesh: dict
    time: dict
    loading: dict
    algorithm: dict
    study: dict
    output: dict
    source: str = ""

    def resolved(self) -> dict:
        return {"model": self.model, "material": dataclasses.asdict(self.material),
                "mesh": dict(self.mesh), "time": dict(self.time),
                "loading": dict(self.loading), "algorithm": dict(self.algorithm),
                "study": {k: v for k, v in self.study.items() if v},
                "output": dict(self.output)}

    def with_material(self, **kw) -> "Scenario":
        return dataclasses.replace(self, material=_build_material(self.model, kw, self.material))

    def with_section(self, section: str, **kw) -> "Scenario":
        d = dict(getattr(self, section))
        d.update(kw)
        return dataclasses.replace(self, **{section: d})


def _convert(key: str, raw: str, default):
    """Parse ``raw`` to the type of ``default``."""
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None
    return raw.strip()


def _section(cp, name: str, defaults: dict) -> dict:
    out = dict(defaults)
    if not cp.has_section(name):
        return out
    for key, raw in cp.items(name):
        if key not in defaults:
            raise ConfigError(f"{name}.{key}", "unknown key")
        out[key] = _convert(f"{name}.{key}", raw, defaults[key])
    return out


def _build_material(model: str, overrides: dict, base=None):
    cls = MATERIALS[model]
    base = base if base is not None else cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for k in overrides:
        if k not in names:
            raise ConfigError(f"material.{k}", "unknown key")
    try:
        return dataclasses.replace(base, **overrides)
    except ValueError as exc:
        raise ConfigError("material", str(exc)) from None


def _floats(key: str, text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_meshes(text: str) -> list[tuple[int, int]]:
    """``"10x20, 15x30"`` -> ``[(10, 20), (15, 30)]``."""
    out = []
    for tok in text.replace(",", " ").split():
        try:
            nx, ny = (int(v) for v in tok.lower().split("x"))
        except ValueError:
            raise ConfigError("study.meshes", f"expected NXxNY, got {tok!r}") from None
        if nx < 1 or ny < 1:
            raise ConfigError("study.meshes", f"non-positive size {tok!r}")
        out.append((nx, ny))
    return out


def _validate(sc: Scenario) -> None:
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(key, msg)

    need(sc.time["t_end"] > 0, "time.t_end", "must be positive")
    need(sc.time["steps"] >= 1, "time.steps", "must be at least 1")
    need(sc.algorithm["scheme"] in ALGORITHMS, "algorithm.scheme",
         f"must be one of {', '.join(ALGORITHMS)}")
    need(sc.output["snapshot_every"] >= 0, "output.snapshot_every", "must be non-negative")
    m, ld = sc.mesh, sc.loading
    if sc.model == "point0d":
        need(ld["control"] in ("strain", "stress"), "loading.control", "must be strain or stress")
        need(ld["hold_after"] > 0, "loading.hold_after", "must be positive")
    elif sc.model == "ch1d":
        need(m["cells"] >= 4, "mesh.cells", "need at least 4 cells")
        need(m["length"] > 0, "mesh.length", "must be positive")
        need(m["bc"] in BCS, "mesh.bc", f"must be one of {', '.join(BCS)}")
        need(0.0 < ld["c_mean"] < 1.0, "loading.c_mean", "must lie in (0, 1)")
        need(ld["noise"] >= 0, "loading.noise", "must be non-negative")
        need(ld["c_mean"] - ld["noise"] > 0 and ld["c_mean"] + ld["noise"] < 1,
             "loading.noise", "initial concentration would leave (0, 1)")
    elif sc.model == "damage1d":
        need(m["n_el"] >= 2, "mesh.n_el", "need at least 2 elements")
        need(m["length"] > 0, "mesh.length", "must be positive")
        need(ld["mode"] in MODES, "loading.mode", f"must be one of {', '.join(MODES)}")
        need(0 <= ld["imperfection"] < 1, "loading.imperfection", "must lie in [0, 1)")
        need(not ld["conduction"] or sc.algorithm["scheme"] == "semi-explicit",
             "loading.conduction", "needs the semi-explicit scheme")
    else:
        need(m["nx"] >= 1 and m["ny"] >= 1, "mesh", "nx and ny must be positive")
        need(0 <= ld["weakening"] < 1, "loading.weakening", "must lie in [0, 1)")
        need(sc.algorithm["scheme"] == "semi-explicit", "algorithm.scheme",
             "the strip model uses the semi-explicit scheme")
    for key in ("l", "tau", "eta_f"):
        vals = _floats(f"study.{key}", sc.study[key])
        need(all(v >= 0 for v in vals), f"study.{key}", "values must be non-negative")
    parse_meshes(sc.study["meshes"])


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # material names such as H1 are case-sensitive
    return cp


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises
    ------
    ConfigError
        For unreadable files, unknown sections or keys and invalid values.
    """
    path = Path(path)
    cp = _parser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError("file", str(exc)) from None
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    return scenario_from_parser(cp, str(path))


def parse_scenario(text: str) -> Scenario:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc).splitlines()[0]) from None
    return scenario_from_parser(cp, "<string>")


def scenario_from_parser(cp: configparser.ConfigParser, source: str = "") -> Scenario:
    allowed = {"scenario", "material", "mesh", "time", "loading", "algorithm", "study", "output"}
    for s in cp.sections():
        if s not in allowed:
            raise ConfigError(s, "unknown section")
    if not cp.has_option("scenario", "model"):
        raise ConfigError("scenario.model", "missing")
    for key in cp.options("scenario"):
        if key != "model":
            raise ConfigError(f"scenario.{key}", "unknown key")
    model = cp.get("scenario", "model").strip()
    if model not in MODELS:
        raise ConfigError("scenario.model", f"must be one of {', '.join(MODELS)}")
    d = _DEFAULTS[model]
    mat_defaults = {f.name: f.default for f in dataclasses.fields(MATERIALS[model])}
    mat = _section(cp, "material", mat_defaults)
    sc = Scenario(model=model,
                  material=_build_material(model, mat),
                  mesh=_section(cp, "mesh", d["mesh"]),
                  time=_section(cp, "time", d["time"]),
                  loading=_section(cp, "loading", d["loading"]),
                  algorithm=_section(cp, "algorithm", d["algorithm"]),
                  study=_section(cp, "study", _STUDY_KEYS),
                  output=_section(cp, "output", _OUTPUT_KEYS),
                  source=source)
    _validate(sc)
    return sc


def study_series(sc: Scenario) -> dict:
    """Parsed series of the study block (empty lists when absent)."""
    return {"meshes": parse_meshes(sc.study["meshes"]),
            "l": _floats("study.l", sc.study["l"]),
            "tau": _floats("study.tau", sc.study["tau"]),
            "eta_f": _floats("study.eta_f", sc.study["eta_f"]),
            "decreasing": sc.study["decreasing"].replace(",", " ").split(),
            "increasing": sc.study["increasing"].replace(",", " ").split()}
