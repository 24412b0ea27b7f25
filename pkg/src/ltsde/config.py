"""Experiment configuration files (YAML).

Schema, version 1::

    version: 1
    model:
      builtin: example2        # optional: example1 | example2 | skewbm
      alpha: 0.5               # builtin parameter
      x0: 0.0
      T: 1.0
      phi: "piece all: 1"      # piecewise text, ignored for builtins
      measure:
        atoms: [{location: 0.0, weight: 0.5}]
        density: {breakpoints: [0, 1], values: [1]}
      pipeline: legall         # legall | basschen | drift-ac
      left_limit: false
    run:
      n_list: [4, 8, 16, 32, 64]
      M: 200000
      seed: 20240601
      n_ref: 1024
      M_ref: 1000000
      workers: 1
    payoff: example            # piecewise text, "example", "quadratic" or "identity"
    output:
      directory: results
      formats: [csv, json]
    compare:                   # optional
      pipelines: [legall, basschen]
      n: 256
      M: 200000
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .funcdsl import DSLDomainError, DSLSyntaxError, parse
from .measure import LEGALL, SignedMeasure
from .models import (BUILTINS, Model, ModelError, builtin_model, example1_phi,
                     example_payoff, pipeline_problems)
from .montecarlo import BUILTIN_PAYOFFS

SCHEMA_VERSION = 1
DEFAULT_RUN = {"n_list": [4, 8, 16, 32, 64], "M": 200_000, "seed": 20240601,
               "n_ref": 1024, "M_ref": 1_000_000, "workers": 1}
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


@dataclass(frozen=True)
class RunSpec:
    n_list: tuple
    M: int
    seed: int
    n_ref: int
    M_ref: int
    workers: int = 1


@dataclass(frozen=True)
class CompareSpec:
    pipelines: tuple
    n: int
    M: int


@dataclass
class ExperimentConfig:
    model: Model
    run: RunSpec
    payoff: object
    output_dir: str = "results"
    formats: tuple = FORMATS
    compare: Optional[CompareSpec] = None
    data: dict = field(default_factory=dict, repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def render(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False)


def config_hash(data: dict) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _payoff(text, alpha, problems):
    if text is None or text == "example":
        return example_payoff(alpha if alpha is not None else 0.0)
    if text in BUILTIN_PAYOFFS:
        return BUILTIN_PAYOFFS[text]()
    try:
        return parse(str(text))
    except (DSLSyntaxError, DSLDomainError) as exc:
        problems.append(f"payoff: {exc}")


def _int(section, key, problems, minimum=1, where="run"):
    value = section.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        problems.append(f"{where}.{key} must be an integer >= {minimum}, got {value!r}")
        return None
    return value


def _normalize(raw: dict) -> dict:
    """Fill defaults so that equal configs have equal canonical data."""
    model = dict(raw.get("model") or {})
    run = {**DEFAULT_RUN, **(raw.get("run") or {})}
    if "n_list" in run and isinstance(run["n_list"], (list, tuple)):
        run["n_list"] = list(run["n_list"])
    output = {"directory": "results", "formats": list(FORMATS), **(raw.get("output") or {})}
    data = {"version": raw.get("version", SCHEMA_VERSION), "model": model, "run": run,
            "payoff": raw.get("payoff", "example"), "output": output}
    if raw.get("compare"):
        data["compare"] = dict(raw["compare"])
    model.setdefault("x0", 0.0)
    model.setdefault("T", 1.0)
    model.setdefault("pipeline", LEGALL)
    model.setdefault("left_limit", False)
    return data


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate everything and report every problem at once."""
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])
    data = _normalize(raw)
    problems = []
    if data["version"] != SCHEMA_VERSION:
        problems.append(f"unsupported config version {data['version']!r}")
    m = data["model"]
    builtin = m.get("builtin")
    alpha = m.get("alpha")
    measure = None
    phi = None
    if builtin is not None:
        if builtin not in BUILTINS:
            problems.append(f"model.builtin must be one of {', '.join(BUILTINS)}")
        elif not isinstance(alpha, (int, float)) or isinstance(alpha, bool):
            problems.append("model.alpha is required for builtin models")
        else:
            measure = SignedMeasure.dirac(float(alpha))
            phi = example1_phi(alpha) if builtin == "example1" and abs(alpha) < 1 else \
                parse("piece all: 1")
    else:
        try:
            phi = parse(str(m.get("phi", "piece all: 1")))
        except (DSLSyntaxError, DSLDomainError) as exc:
            problems.append(f"model.phi: {exc}")
        try:
            measure = SignedMeasure.from_dict(m.get("measure"))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"model.measure: {exc}")
    for key in ("x0", "T"):
        if not isinstance(m[key], (int, float)) or not math.isfinite(m[key]):
            problems.append(f"model.{key} must be a finite number")
    if isinstance(m["T"], (int, float)) and not m["T"] > 0:
        problems.append("model.T must be positive")
    if measure is not None:
        problems.extend(f"model: {p}" for p in pipeline_problems(measure, m["pipeline"]))

    run = data["run"]
    n_list = run.get("n_list")
    if (not isinstance(n_list, list) or len(n_list) < 3
            or not all(isinstance(n, int) and n > 0 for n in n_list)
            or any(b <= a for a, b in zip(n_list, n_list[1:]))):
        problems.append("run.n_list must be >= 3 strictly increasing positive integers")
        n_list = None
    M = _int(run, "M", problems, 2)
    seed = _int(run, "seed", problems, 0)
    n_ref = _int(run, "n_ref", problems)
    M_ref = _int(run, "M_ref", problems, 2)
    workers = _int(run, "workers", problems)
    if n_list and n_ref and n_ref < 8 * max(n_list):
        problems.append(f"run.n_ref={n_ref} must be at least 8 x max(n_list)={max(n_list)}")
    payoff = _payoff(data["payoff"], alpha, problems)

    out = data["output"]
    formats = out.get("formats") or []
    if not set(formats) <= set(FORMATS):
        problems.append(f"output.formats must be a subset of {list(FORMATS)}")

    compare = None
    if "compare" in data:
        c = data["compare"]
        pipes = c.get("pipelines")
        if not isinstance(pipes, list) or len(pipes) != 2:
            problems.append("compare.pipelines must list exactly two pipelines")
        elif measure is not None:
            for p in pipes:
                problems.extend(f"compare: {q}" for q in pipeline_problems(measure, p))
        cn = _int(c, "n", problems, 1, "compare") if "n" in c else (max(n_list) if n_list else None)
        cM = _int(c, "M", problems, 2, "compare") if "M" in c else M
        if not problems:
            compare = CompareSpec(tuple(pipes), cn, cM)

    model = None
    if not problems:
        try:
            if builtin is not None:
                model = builtin_model(builtin, float(alpha), m["x0"], m["T"], m["pipeline"])
                if m["left_limit"]:
                    model = Model(model.phi, model.measure, model.x0, model.T,
                                  model.pipeline, True)
            else:
                model = Model(phi, measure, m["x0"], m["T"], m["pipeline"], bool(m["left_limit"]))
        except ModelError as exc:
            problems.append(f"model: {exc}")
    if problems:
        raise ConfigError(problems)
    if M_ref < 5 * M and model.gaussian_law() is None:
        warnings.warn(f"run.M_ref={M_ref} is below 5 x M={M}", RuntimeWarning)
    return ExperimentConfig(model, RunSpec(tuple(n_list), M, seed, n_ref, M_ref, workers),
                            payoff, str(out["directory"]), tuple(formats), compare, data)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError([f"{path}: YAML parse error{where}: "
                           f"{getattr(exc, 'problem', exc)}"]) from None
    return config_from_dict(raw)


def render_config(config: ExperimentConfig) -> str:
    return config.render()


def builtin_config(name: str, alpha: float = 0.5, **run) -> ExperimentConfig:
    raw = {"model": {"builtin": name, "alpha": alpha}, "run": run}
    if name == "skewbm":
        raw["payoff"] = "example"
    return config_from_dict(raw)
