"""Experiment configuration in a sectioned ``key = value`` text format.

Example::

    [meta]
    schema_version = 1
    kind = simulate
    seed = 3

    [sim]
    t_end = 2.0
    formulation = both

Unknown sections or keys are rejected.  Lists are comma separated, ranges
are written ``lo:hi`` and ``none`` clears an optional value.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from .dynamics import SimConfig
from .errors import ConfigError
from .fields import InitialDataSpec
from .norms import NormConfig

SCHEMA_VERSION = 1
KINDS = ("simulate", "lifespan-sweep", "decay-probe", "resonance", "norms", "crosscheck")


@dataclass(frozen=True)
class ResonanceConfig:
    d_values: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    D0_exponent: int = 10
    r_max: float = 10.0
    r_count: int = 201
    sublevel_triple: Tuple[str, ...] = ("b", "e", "e")
    sublevel_k: int = 0
    sublevel_R: float = 1.0
    sublevel_eps: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    sublevel_samples: int = 1_000_000

    def __post_init__(self):
        if not self.d_values or any(not 0 < d < 1 for d in self.d_values):
            raise ConfigError("d_values must be a nonempty list in (0, 1)")
        if self.r_count < 2 or not self.r_max > 0:
            raise ConfigError("r_count >= 2 and r_max > 0 required")
        if len(self.sublevel_triple) != 3:
            raise ConfigError("sublevel_triple needs three labels")


@dataclass(frozen=True)
class SweepConfig:
    delta0_fractions: Tuple[float, ...] = (0.02, 0.04, 0.08, 0.16)
    control: bool = True
    bootstrap_samples: int = 200
    growth_factor: float = 2.0

    def __post_init__(self):
        if not self.delta0_fractions:
            raise ConfigError("delta0_fractions must be nonempty")
        if any(not f > 0 for f in self.delta0_fractions):
            raise ConfigError("delta0_fractions must be strictly positive")


@dataclass(frozen=True)
class DecayConfig:
    sigmas: Tuple[str, ...] = ("e", "b")
    times: Tuple[float, ...] = (10.0, 14.0, 20.0, 28.0, 40.0, 56.0, 80.0, 100.0)
    d: float = 0.5

    def __post_init__(self):
        if not self.times or any(t < 0 for t in self.times):
            raise ConfigError("times must be a nonempty list of nonnegative values")
        if any(s not in ("e", "b") for s in self.sigmas):
            raise ConfigError("sigmas must be drawn from e, b")


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str = "simulate"
    seed: int = 0
    out: str = "results"
    threads: int = 1
    snapshot: Optional[str] = None
    sim: SimConfig = SimConfig()
    resonance: ResonanceConfig = ResonanceConfig()
    sweep: SweepConfig = SweepConfig()
    decay: DecayConfig = DecayConfig()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


# section name -> (path inside ExperimentSpec, dataclass type)
_SECTIONS = {
    "sim": (("sim",), SimConfig),
    "initial": (("sim", "initial"), InitialDataSpec),
    "norms": (("sim", "norms"), NormConfig),
    "resonance": (("resonance",), ResonanceConfig),
    "sweep": (("sweep",), SweepConfig),
    "decay": (("decay",), DecayConfig),
}
_META_KEYS = ("schema_version", "kind", "seed", "out", "threads", "snapshot")
_NESTED = {"initial", "norms"}


class ConfigSyntaxError(ConfigError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _line_index(text: str) -> dict:
    """``(section, key) -> line number`` for every assignment in ``text``."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            index[(section, None)] = no
        elif "=" in s and section is not None:
            index[(section, s.split("=", 1)[0].strip())] = no
    return index


def _type_of(dc_field) -> str:
    t = dc_field.type if isinstance(dc_field.type, str) else getattr(dc_field.type, "__name__", "")
    return t.replace("typing.", "")


def _parse_value(text: str, kind: str):
    t = text.strip()
    optional = kind.startswith("Optional[")
    if optional:
        if t.lower() == "none":
            return None
        kind = kind[len("Optional["):-1]
    if kind.startswith("Tuple[int, int]"):
        lo, hi = t.split(":")
        return (int(lo), int(hi))
    if kind.startswith("Tuple[float"):
        return tuple(float(x) for x in t.split(",") if x.strip())
    if kind.startswith("Tuple[str"):
        return tuple(x.strip() for x in t.split(",") if x.strip())
    if kind == "bool":
        low = t.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"not a boolean: {t!r}")
    if kind == "int":
        return int(t)
    if kind == "float":
        return float(t)
    if kind == "str":
        return t
    raise ValueError(f"unsupported field type {kind}")


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if len(v) == 2 and all(isinstance(x, int) for x in v):
            return f"{v[0]}:{v[1]}"
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def _scalar_fields(cls):
    return [f for f in fields(cls) if not dataclasses.is_dataclass(f.default)]


def loads_config(text: str) -> ExperimentSpec:
    index = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigSyntaxError(exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc),
                                line) from None
    for sec in cp.sections():
        if sec != "meta" and sec not in _SECTIONS:
            raise ConfigSyntaxError(f"unknown section [{sec}]", index.get((sec, None)))

    meta = dict(cp["meta"]) if cp.has_section("meta") else {}
    for key in meta:
        if key not in _META_KEYS:
            raise ConfigSyntaxError(f"unknown key {key!r} in [meta]", index.get(("meta", key)))
    version = meta.get("schema_version", str(SCHEMA_VERSION))
    if version.strip() != str(SCHEMA_VERSION):
        raise ConfigSyntaxError(f"schema_version {version.strip()} is not supported (expected {SCHEMA_VERSION})",
                                index.get(("meta", "schema_version")))

    values = {}
    for sec, (path, cls) in _SECTIONS.items():
        known = {f.name: f for f in _scalar_fields(cls)}
        parsed = {}
        if cp.has_section(sec):
            for key, raw in cp[sec].items():
                if key not in known:
                    raise ConfigSyntaxError(f"unknown key {key!r} in [{sec}]", index.get((sec, key)))
                try:
                    parsed[key] = _parse_value(raw, _type_of(known[key]))
                except ValueError as exc:
                    raise ConfigSyntaxError(f"bad value for {sec}.{key}: {exc}", index.get((sec, key))) from None
        values[sec] = parsed

    seed = int(meta.get("seed", 0))
    try:
        initial = InitialDataSpec(**{"eps_bar": 1e-2, "seed": seed, **values["initial"]})
        norms = NormConfig(**values["norms"])
        sim = SimConfig(**{**values["sim"], "initial": initial, "norms": norms})
        spec = ExperimentSpec(
            kind=meta.get("kind", "simulate").strip(),
            seed=seed,
            out=meta.get("out", "results").strip(),
            threads=int(meta.get("threads", 1)),
            snapshot=(None if meta.get("snapshot", "none").strip().lower() == "none"
                      else meta["snapshot"].strip()),
            sim=sim,
            resonance=ResonanceConfig(**values["resonance"]),
            sweep=SweepConfig(**values["sweep"]),
            decay=DecayConfig(**values["decay"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return spec


def load_config(path) -> ExperimentSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    return loads_config(text)


def dump_config(spec: ExperimentSpec) -> str:
    """Fully resolved configuration; ``loads_config(dump_config(s)) == s``."""
    out = ["[meta]", f"schema_version = {SCHEMA_VERSION}"]
    for key in _META_KEYS[1:]:
        out.append(f"{key} = {_format_value(getattr(spec, key))}")
    for sec, (path, cls) in _SECTIONS.items():
        obj = spec
        for attr in path:
            obj = getattr(obj, attr)
        out.append("")
        out.append(f"[{sec}]")
        for f in _scalar_fields(cls):
            if sec == "initial" and f.name == "seed":
                continue
            out.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(out) + "\n"


def with_seed(spec: ExperimentSpec, seed: int) -> ExperimentSpec:
    initial = replace(spec.sim.initial, seed=seed)
    return replace(spec, seed=seed, sim=replace(spec.sim, initial=initial))


def config_dict(spec: ExperimentSpec) -> dict:
    d = dataclasses.asdict(spec)
    return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x
