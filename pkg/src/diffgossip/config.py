"""Experiment configuration: INI-style ``key = value`` sections plus flag overrides.

Every key lives in exactly one section, so the config maps onto a flat
dataclass.  A ``[sweep]`` section lists axes as ``field = v1, v2, ...``;
``replicates`` repeats each cell with a fresh child seed.
"""

from __future__ import annotations

import configparser
import dataclasses
import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .aggregation import Variant
from .gossip import SUBJECT_RULES
from .trust import Population


class ConfigError(ValueError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.field = name


SECTIONS = {
    "graph": ("n", "m", "seed", "graph_file"),
    "gossip": ("xi", "csl", "max_steps", "stop_when_done", "subject_rule"),
    "weights": ("a", "b", "delta"),
    "churn": ("p_loss",),
    "collusion": ("collusion_fraction", "group_size", "collusion_seed", "poison_feedback"),
    "scenario": ("floor", "adjacency_weight", "common_weight", "trust_file"),
    "run": ("variant", "population", "subject", "output", "results", "trace", "diagnostics"),
}


@dataclass
class SimConfig:
    n: int = 1000
    m: int = 2
    seed: int = 0
    graph_file: str = ""
    xi: float = 1e-4
    csl: int = 5
    max_steps: int = 0  # 0 selects the size-dependent default
    stop_when_done: bool = False
    subject_rule: str = "max"
    a: float = 2.0
    b: float = 1.0
    delta: float = 0.05
    p_loss: float = 0.0
    collusion_fraction: float = 0.0
    group_size: int = 1
    collusion_seed: int = 0
    poison_feedback: bool = False  # colluders also lie to their neighbours (exploratory)
    floor: float = 0.01
    adjacency_weight: float = 0.5
    common_weight: float = 0.05
    trust_file: str = ""
    variant: str = Variant.GLOBAL_SINGLE.value
    population: str = Population.OPINING.value
    subject: int = 0
    output: str = "out"
    results: bool = True
    trace: bool = False
    diagnostics: bool = False
    sweep: dict = field(default_factory=dict, repr=False)
    replicates: int = 1

    def validate(self) -> "SimConfig":
        _check(self.n >= 2 or bool(self.graph_file), "n", f"must be >= 2, got {self.n}")
        _check(self.m >= 2, "m", f"must be >= 2, got {self.m}")
        _check(self.n > self.m or bool(self.graph_file), "n", f"must exceed m={self.m}, got {self.n}")
        _check(self.seed >= 0, "seed", "must be >= 0")
        _check(self.xi > 0, "xi", f"must be > 0, got {self.xi}")
        _check(self.csl >= 0, "csl", f"must be >= 0, got {self.csl}")
        _check(self.max_steps >= 0, "max_steps", f"must be >= 0, got {self.max_steps}")
        _check(self.a > 1, "a", f"must be > 1, got {self.a}")
        _check(self.b > 0, "b", f"must be > 0, got {self.b}")
        _check(self.delta > 0, "delta", f"must be > 0, got {self.delta}")
        _check(0 <= self.p_loss < 1, "p_loss", f"must lie in [0, 1), got {self.p_loss}")
        _check(0 <= self.collusion_fraction <= 1, "collusion_fraction",
               f"must lie in [0, 1], got {self.collusion_fraction}")
        _check(self.group_size >= 1, "group_size", f"must be >= 1, got {self.group_size}")
        _check(self.collusion_seed >= 0, "collusion_seed", "must be >= 0")
        for name in ("floor", "adjacency_weight", "common_weight"):
            v = getattr(self, name)
            _check(0 <= v <= 1, name, f"must lie in [0, 1], got {v}")
        _check(self.variant in {v.value for v in Variant}, "variant",
               f"unknown variant {self.variant!r}; choose from {[v.value for v in Variant]}")
        _check(self.subject_rule in SUBJECT_RULES, "subject_rule",
               f"unknown subject_rule {self.subject_rule!r}; choose from {list(SUBJECT_RULES)}")
        _check(self.population in {p.value for p in Population}, "population",
               f"unknown population {self.population!r}")
        _check(self.subject >= 0, "subject", "must be >= 0")
        _check(self.graph_file or self.subject < self.n, "subject",
               f"must be < n={self.n}, got {self.subject}")
        _check(self.replicates >= 1, "replicates", f"must be >= 1, got {self.replicates}")
        _check(bool(self.output), "output", "must not be empty")
        for name in ("graph_file", "trust_file"):
            path = getattr(self, name)
            _check(not path or Path(path).is_file(), name, f"no such file {path!r}")
        for name, values in self.sweep.items():
            _check(name in FIELD_TYPES and name not in ("sweep", "replicates", "seed"),
                   f"sweep.{name}", "is not a sweepable field (use replicates for seeds)")
            _check(len(values) > 0, f"sweep.{name}", "needs at least one value")
        return self

    def echo(self) -> dict:
        """Flat field -> value mapping written next to every report row."""
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in ("sweep", "replicates")}

    def cells(self) -> list[tuple[int, "SimConfig"]]:
        """Cartesian product of sweep axes times replicates, in deterministic order.

        Each cell gets a child seed derived from (master seed, cell index).
        """
        names = list(self.sweep)
        out = []
        index = 0
        for combo in itertools.product(*(self.sweep[k] for k in names)):
            for _ in range(self.replicates):
                cell = dataclasses.replace(self, sweep={}, replicates=1, **dict(zip(names, combo)))
                cell.seed = child_seed(self.seed, index)
                out.append((index, cell))
                index += 1
        return out


FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _check(ok, name: str, message: str) -> None:
    if not ok:
        raise ConfigError(name, message)


def child_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def coerce(name: str, raw: str):
    """Parse a raw string for field ``name``; errors name the field."""
    if name not in FIELD_TYPES:
        raise ConfigError(name, "unknown field")
    kind = FIELD_TYPES[name]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r} as {kind}") from None
    return raw


def _section_of(key: str) -> str | None:
    for section, keys in SECTIONS.items():
        if key in keys:
            return section
    return None


def load(path, overrides: dict | None = None) -> SimConfig:
    """Read a config file, apply ``overrides`` (field -> raw string), validate."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string(text, source=str(path))
    values: dict = {}
    sweep: dict = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section == "sweep":
                if key == "replicates":
                    values["replicates"] = coerce("replicates", raw)
                else:
                    sweep[key] = [coerce(key, v) for v in raw.split(",") if v.strip()]
                continue
            if section not in SECTIONS:
                raise ConfigError(f"[{section}]", "unknown section")
            if _section_of(key) != section:
                where = _section_of(key)
                hint = f"; it belongs in [{where}]" if where else ""
                raise ConfigError(key, f"not a field of [{section}]{hint}")
            values[key] = coerce(key, raw)
    return from_values(values, sweep, overrides)


def from_values(values: dict | None = None, sweep: dict | None = None,
                overrides: dict | None = None) -> SimConfig:
    values = dict(values or {})
    for key, raw in (overrides or {}).items():
        values[key] = coerce(key, raw) if isinstance(raw, str) else raw
    cfg = SimConfig(**values, sweep=dict(sweep or {}))
    return cfg.validate()


def dumps(cfg: SimConfig) -> str:
    """Render a config back to file form; ``load`` of the result gives an equal config."""
    defaults = SimConfig()
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            lines.append(f"{key} = {_fmt(getattr(cfg, key))}")
        lines.append("")
    if cfg.sweep or cfg.replicates != defaults.replicates:
        lines.append("[sweep]")
        lines.append(f"replicates = {cfg.replicates}")
        for key, vals in cfg.sweep.items():
            lines.append(f"{key} = {', '.join(_fmt(v) for v in vals)}")
        lines.append("")
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
