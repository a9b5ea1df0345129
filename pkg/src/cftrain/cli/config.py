"""Sectioned ``key = value`` experiment configuration.

The format is a TOML subset: top-level keys, ``[section]`` headers and one
``key = value`` per line (strings, numbers, booleans, single-line arrays).
Values are decoded with a TOML parser; structure, unknown keys and
duplicates are checked here so errors can name the offending line.
"""

from __future__ import annotations

import copy
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Any

import tomli

from ..cegen import GeneratorConfig
from ..data import synthetic_kind
from ..errors import ConfigParseError, ConfigurationError
from ..evaluation import EvalConfig
from ..training import Objective, TrainConfig

_OPT = object()  # marks optional keys without a default

# (type, default); list types are written as ("list", element type)
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "": {"seed": (int, _OPT)},
    "data": {
        "kind": (str, "circles"),
        "name": (str, _OPT),
        "n_train": (int, 3600),
        "n_test": (int, 600),
        "noise": (float, _OPT),
        "seed": (int, _OPT),
        "means": (("list", float), _OPT),
        "sigma": (float, 0.1),
        "sigmas": (("list", float), _OPT),
        "path": (str, _OPT),
        "label_column": (str, "label"),
        "test_fraction": (float, 0.2),
        "standardize": (bool, True),
        "domain_sigma": (float, 3.0),
        "immutable": (("list", str), []),
        "increase_only": (("list", str), []),
        "decrease_only": (("list", str), []),
    },
    "model": {
        "hidden_units": (int, 32),
        "layers": (int, 1),
    },
    "training": {
        "objectives": (("list", str), ["full", "vanilla"]),
        "lambda_clf": (float, 1.0),
        "lambda_div": (float, 0.5),
        "lambda_adv": (float, 0.25),
        "lambda_reg": (float, 0.1),
        "n_ce": (int, 1000),
        "epochs": (int, 100),
        "batch_size": (int, 30),
        "burn_in": (float, 0.0),
        "eps_adv": (float, 0.1),
        "lr": (float, 0.001),
        "protect": (bool, True),
    },
    "generator": {
        "kind": (str, "eccco"),
        "lambda_cst": (float, 0.001),
        "lambda_egy": (float, 5.0),
        "tau": (float, 0.75),
        "max_iter": (int, 30),
        "lr": (float, 0.25),
    },
    "eval": {
        "runs": (int, 20),
        "individuals": (int, 100),
        "tau": (float, 0.95),
        "tau_cost": (float, 0.5),
        "max_iter": (int, 50),
        "lr": (float, 0.25),
        "lambda_cst": (float, 0.001),
        "lambda_egy_grid": (("list", float), [0.1, 0.5, 1.0, 5.0, 10.0]),
        "alpha": (float, 0.01),
        "alpha_ig": (float, 0.05),
        "lengthscale": (float, 0.5),
        "eps_grid": (("list", float), [0.0, 0.025, 0.05, 0.075, 0.1]),
        "attacks": (("list", str), ["fgsm", "pgd"]),
        "pgd_steps": (int, 40),
        "pgd_step_size": (float, 0.01),
        "ig_steps": (int, 64),
        "ig_individuals": (int, 100),
        "scenarios": (("list", str), ["unconstrained", "constrained"]),
        "robustness": (bool, True),
    },
    "output": {
        "dir": (str, "results"),
    },
}
REQUIRED_SECTIONS = ("data",)
SCENARIOS = ("unconstrained", "constrained")

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_]*)\s*\]\s*(#.*)?$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


@dataclass
class ExperimentConfig:
    """Fully resolved configuration: every schema key has a value or ``None``."""

    sections: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    @property
    def seed(self) -> int | None:
        return self.sections[""]["seed"]

    @property
    def data(self) -> dict[str, Any]:
        return self.sections["data"]

    @property
    def dataset_name(self) -> str:
        return self.data["name"] or self.data["kind"]

    @property
    def objectives(self) -> list[Objective]:
        return [Objective(o) for o in self.sections["training"]["objectives"]]

    @property
    def output_dir(self) -> str:
        return self.sections["output"]["dir"]

    def resolved_seed(self, override: int | None = None) -> int:
        """Command-line seed, then the config seed, then ``CT_SEED``, then 0."""
        if override is not None:
            return int(override)
        if self.seed is not None:
            return self.seed
        env = os.environ.get("CT_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigurationError(f"CT_SEED must be an integer, got {env!r}") from None
        return 0

    def hidden(self) -> tuple[int, ...]:
        m = self.sections["model"]
        return (m["hidden_units"],) * m["layers"]

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(**self.sections["generator"])

    def train_config(self, objective: Objective | str, seed: int) -> TrainConfig:
        t = {k: v for k, v in self.sections["training"].items() if k != "objectives"}
        return TrainConfig(objective=objective, generator=self.generator_config(),
                           hidden=self.hidden(), seed=seed, **t)

    def eval_config(self, seed: int) -> EvalConfig:
        e = {k: v for k, v in self.sections["eval"].items() if k not in ("scenarios", "robustness")}
        return EvalConfig(seed=seed, **e)

    def mutability(self) -> dict[str, str]:
        out = {}
        for key in ("immutable", "increase_only", "decrease_only"):
            for name in self.data[key]:
                out[name] = key
        return out


def _type_name(t) -> str:
    if isinstance(t, tuple):
        return f"list of {_type_name(t[1])}"
    return {int: "integer", float: "number", str: "string", bool: "boolean"}[t]


def _coerce(value, t, key: str, line: int):
    if isinstance(t, tuple):
        if not isinstance(value, list):
            raise ConfigParseError(f"{key}: expected {_type_name(t)}, got {type(value).__name__}", line)
        return [_coerce(v, t[1], key, line) for v in value]
    if t is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if t is float and isinstance(value, float):
        return value
    if t in (int, str, bool) and type(value) is t:
        return value
    raise ConfigParseError(f"{key}: expected {_type_name(t)}, got {type(value).__name__}", line)


def _decode(raw: str, key: str, line: int):
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError as err:
        raise ConfigParseError(f"{key}: cannot parse value {raw.strip()!r} ({err})", line) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text, filling defaults."""
    seen: dict[str, dict[str, tuple[Any, int]]] = {"": {}}
    section_lines: dict[str, int] = {}
    current = ""
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        stripped = raw_line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _SECTION_RE.match(stripped)
        if m:
            name = m.group(1)
            if name not in SCHEMA or name == "":
                raise ConfigParseError(f"unknown section [{name}]", lineno)
            if name in section_lines:
                raise ConfigParseError(f"duplicate section [{name}]", lineno)
            section_lines[name] = lineno
            seen[name] = {}
            current = name
            continue
        m = _KEY_RE.match(stripped)
        if not m:
            raise ConfigParseError(f"expected 'key = value' or '[section]', got {stripped!r}", lineno)
        key, raw = m.groups()
        where = f"[{current}]" if current else "top level"
        if key not in SCHEMA[current]:
            raise ConfigParseError(f"unknown key {key!r} in {where}", lineno)
        if key in seen[current]:
            raise ConfigParseError(f"duplicate key {key!r} in {where}", lineno)
        t = SCHEMA[current][key][0]
        seen[current][key] = (_coerce(_decode(raw, key, lineno), t, key, lineno), lineno)

    for name in REQUIRED_SECTIONS:
        if name not in section_lines:
            raise ConfigParseError(f"missing required section [{name}]")

    sections: dict[str, dict[str, Any]] = {}
    for name, keys in SCHEMA.items():
        given = seen.get(name, {})
        sections[name] = {
            k: given[k][0] if k in given else (None if d is _OPT else copy.deepcopy(d))
            for k, (_, d) in keys.items()
        }
    cfg = ExperimentConfig(sections)

    def line_of(section: str, key: str | None = None) -> int | None:
        if key is not None and key in seen.get(section, {}):
            return seen[section][key][1]
        return section_lines.get(section)

    _validate(cfg, line_of)
    return cfg


def _validate(cfg: ExperimentConfig, line_of) -> None:
    d = cfg.data
    kind = d["kind"]
    if kind not in ("csv", "gaussian"):
        try:
            synthetic_kind(kind)
        except ValueError as err:
            raise ConfigParseError(str(err), line_of("data", "kind")) from None
    if kind == "csv" and not d["path"]:
        raise ConfigParseError("csv data needs a path", line_of("data", "kind"))
    if kind == "gaussian" and not d["means"]:
        raise ConfigParseError("gaussian data needs a non-empty means list", line_of("data", "kind"))
    if d["sigmas"] is not None and (kind != "gaussian" or len(d["sigmas"]) != len(d["means"])):
        raise ConfigParseError("sigmas needs gaussian data and one entry per mean", line_of("data", "sigmas"))
    if kind != "csv":
        if d["n_train"] < 2 or d["n_test"] < 2:
            raise ConfigParseError("n_train and n_test must be at least 2", line_of("data", "n_train"))
        dim = len(d["means"]) if kind == "gaussian" else 2
        names = {f"x{i + 1}" for i in range(dim)}
        for key in ("immutable", "increase_only", "decrease_only"):
            for feat in d[key]:
                if feat not in names:
                    raise ConfigParseError(f"{key}: unknown feature {feat!r}", line_of("data", key))
    listed = d["immutable"] + d["increase_only"] + d["decrease_only"]
    if len(set(listed)) != len(listed):
        raise ConfigParseError("a feature appears under more than one mutability", line_of("data"))

    objectives = cfg["training"]["objectives"]
    if not objectives:
        raise ConfigParseError("objective list is empty", line_of("training", "objectives"))
    for o in objectives:
        if o not in {x.value for x in Objective}:
            raise ConfigParseError(f"unknown objective {o!r}", line_of("training", "objectives"))
    if len(set(objectives)) != len(objectives):
        raise ConfigParseError("objective listed twice", line_of("training", "objectives"))
    for s in cfg["eval"]["scenarios"]:
        if s not in SCENARIOS:
            raise ConfigParseError(f"unknown scenario {s!r}", line_of("eval", "scenarios"))
    if cfg["model"]["layers"] < 0 or cfg["model"]["hidden_units"] < 1:
        raise ConfigParseError("layers must be non-negative and hidden_units positive", line_of("model"))

    for section, build in (("generator", cfg.generator_config),
                           ("training", lambda: cfg.train_config(Objective.FULL, 0)),
                           ("eval", lambda: cfg.eval_config(0))):
        try:
            build()
        except ValueError as err:
            raise ConfigParseError(f"[{section}] {err}", line_of(section)) from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        text = repr(value)
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, list):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    raise TypeError(f"cannot serialise {value!r}")


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialise every resolved value; ``parse_config`` inverts this."""
    lines = []
    for name in SCHEMA:
        if name:
            lines.append(f"\n[{name}]")
        for key, value in cfg.sections[name].items():
            if value is not None:
                lines.append(f"{key} = {_format(value)}")
    return "\n".join(lines).lstrip("\n") + "\n"


__all__ = ["ExperimentConfig", "SCHEMA", "dump_config", "parse_config"]
