"""INI run configuration with strict key checking.

Every key lives in a section; unknown sections or keys are rejected and all
errors name the offending ``section.key``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .analysis import WeightSpec, power_weight
from .errors import ValidationError
from .grid import Grid, build_grid
from .params import ModelParams
from .payoff import PayoffSpec, call, constant, load_table_csv, put, truncate_below
from .solver import SolverConfig

FLOAT, INT, STR = float, int, str

SCHEMA = {
    "model": {"sigma": FLOAT, "mu": FLOAT, "nu01": FLOAT, "nu10": FLOAT, "gamma": FLOAT, "T": FLOAT},
    "payoff": {"kind": STR, "strike": FLOAT, "level": FLOAT, "table": STR, "offset": FLOAT,
               "floor": FLOAT, "truncateN": FLOAT},
    "compare": {"kind": STR, "strike": FLOAT, "level": FLOAT, "table": STR, "offset": FLOAT,
                "floor": FLOAT, "truncateN": FLOAT},
    "grid": {"xMin": FLOAT, "xMax": FLOAT, "nSpace": INT, "nTime": INT},
    "solver": {"scheme": STR, "tolIter": FLOAT, "maxIter": INT, "N": FLOAT, "M": FLOAT},
    "weight": {"exponent": FLOAT},
    "audit": {"seed": INT, "trials": INT},
    "output": {"directory": STR, "formats": STR},
}

REQUIRED = {"model": ("sigma", "mu", "nu01", "nu10", "gamma", "T"), "payoff": ("kind",)}

DEFAULTS = {
    "grid": {"xMin": -4.0, "xMax": 4.0, "nSpace": 201},
    "solver": {"scheme": "direct", "tolIter": 1e-8, "maxIter": 200},
    "weight": {"exponent": -4.0},
    "audit": {"seed": 42, "trials": 100},
    "output": {"directory": "out", "formats": "csv,json"},
    "payoff": {"offset": 0.0},
}

FORMATS = ("csv", "json")


def _convert(section, key, raw, kind):
    path = f"{section}.{key}"
    if kind is STR:
        return raw.strip()
    try:
        if kind is INT:
            value = int(raw)
        else:
            value = float(raw)
    except ValueError:
        raise ValidationError(path, f"expected {kind.__name__}, got {raw!r}") from None
    if kind is FLOAT and not math.isfinite(value):
        raise ValidationError(path, f"must be finite, got {raw!r}")
    return value


def parse_ini(text: str) -> dict:
    """Typed, defaulted nested dict from INI text."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError("config", f"unreadable: {exc}") from None
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ValidationError(section, f"unknown section; expected one of {sorted(SCHEMA)}")
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ValidationError(f"{section}.{key}", "unknown key")
            out[section][key] = _convert(section, key, raw, SCHEMA[section][key])
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in out.get(section, {}):
                raise ValidationError(f"{section}.{key}", "missing required key")
    for section, values in DEFAULTS.items():
        block = out.setdefault(section, {})
        for key, value in values.items():
            block.setdefault(key, value)
    out["grid"].setdefault("nTime", max(1, int(round(200 * out["model"]["T"]))))
    return out


def _payoff(block: dict, section: str, base: Optional[Path], gamma: float) -> PayoffSpec:
    kind = block.get("kind")
    kw = {"offset": block.get("offset", 0.0)}
    if "floor" in block:
        kw["floor"] = block["floor"]
    try:
        if kind in ("call", "put"):
            if "strike" not in block:
                raise ValidationError(f"{section}.strike", f"required for kind {kind!r}")
            spec = (call if kind == "call" else put)(block["strike"], **kw)
        elif kind == "constant":
            if "level" not in block:
                raise ValidationError(f"{section}.level", "required for kind 'constant'")
            spec = constant(block["level"], **kw)
        elif kind == "tabulated":
            if "table" not in block:
                raise ValidationError(f"{section}.table", "required for kind 'tabulated'")
            path = Path(block["table"])
            if base is not None and not path.is_absolute():
                path = base / path
            if not path.is_file():
                raise ValidationError(f"{section}.table", f"no such file {str(path)!r}")
            t = load_table_csv(path)
            spec = PayoffSpec("tabulated", table_S=t.table_S, table_h=t.table_h, **kw)
        else:
            raise ValidationError(f"{section}.kind", f"unknown kind {kind!r}")
        if "truncateN" in block:
            spec = truncate_below(spec, block["truncateN"], gamma)
    except ValidationError as exc:
        raise _prefixed(exc, section) from None
    return spec


ALIASES = {"x_min": "xMin", "x_max": "xMax", "n_space": "nSpace", "n_time": "nTime", "horizon": "nTime",
           "tol_iter": "tolIter", "max_iter": "maxIter", "shift_N": "N", "bracket_M": "M", "N": "truncateN"}


def _prefixed(exc: ValidationError, section: str) -> ValidationError:
    """Re-key a library error onto the config path ``section.key``."""
    last = str(exc.field).split(".")[-1]
    if last not in SCHEMA.get(section, {}):
        last = ALIASES.get(last, last)
    msg = str(exc).split(": ", 1)[-1]
    return ValidationError(f"{section}.{last}", msg)


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    payoff: PayoffSpec
    compare: PayoffSpec
    grid: Grid
    solver: SolverConfig
    weight: WeightSpec
    seed: int
    trials: int
    out_dir: Path
    formats: tuple
    resolved: dict

    def with_seed(self, seed: int) -> "RunConfig":
        resolved = {k: dict(v) for k, v in self.resolved.items()}
        resolved["audit"]["seed"] = int(seed)
        return replace(self, seed=int(seed), resolved=resolved)

    def with_out(self, out_dir) -> "RunConfig":
        resolved = {k: dict(v) for k, v in self.resolved.items()}
        resolved["output"]["directory"] = str(out_dir)
        return replace(self, out_dir=Path(out_dir), resolved=resolved)


def build_run_config(raw: dict, base: Optional[Path] = None) -> RunConfig:
    m = raw["model"]
    try:
        params = ModelParams(m["sigma"], m["mu"], m["nu01"], m["nu10"], m["gamma"], m["T"])
    except ValidationError as exc:
        raise _prefixed(exc, "model") from None
    payoff = _payoff(raw["payoff"], "payoff", base, params.gamma)
    if "compare" in raw and "kind" not in raw["compare"]:
        raise ValidationError("compare.kind", "missing required key")
    compare = _payoff(raw["compare"], "compare", base, params.gamma) if "compare" in raw else payoff
    g = raw["grid"]
    try:
        grid = build_grid(g["xMin"], g["xMax"], g["nSpace"], params.T, g["nTime"])
    except ValidationError as exc:
        raise _prefixed(exc, "grid") from None
    s = raw["solver"]
    try:
        solver = SolverConfig(scheme=s["scheme"], tol_iter=s["tolIter"], max_iter=s["maxIter"],
                              shift_N=s.get("N"), bracket_M=s.get("M"),
                              weight_exponent=raw["weight"]["exponent"])
    except ValidationError as exc:
        raise _prefixed(exc, "solver") from None
    try:
        weight = power_weight(raw["weight"]["exponent"])
    except ValidationError as exc:
        raise _prefixed(exc, "weight") from None
    a = raw["audit"]
    if a["seed"] < 0:
        raise ValidationError("audit.seed", "must be >= 0")
    if a["trials"] < 1:
        raise ValidationError("audit.trials", "must be >= 1")
    formats = tuple(f.strip() for f in raw["output"]["formats"].split(",") if f.strip())
    for f in formats:
        if f not in FORMATS:
            raise ValidationError("output.formats", f"unknown format {f!r}; expected a subset of {FORMATS}")
    return RunConfig(params, payoff, compare, grid, solver, weight, a["seed"], a["trials"],
                     Path(raw["output"]["directory"]), formats, raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError("config", f"cannot read {str(path)!r}: {exc.strerror}") from None
    return build_run_config(parse_ini(text), path.parent)
