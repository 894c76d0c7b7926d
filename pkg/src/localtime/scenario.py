"""Scenario files: YAML with a validated schema and line-precise errors.

Layout::

    seed: 7                      # optional
    model:    {kind: spin, n_spins: 4, omega0: 1.0}
    state:    {kind: extremes, sign: 1}
    params:   {t0: 1.0, lambda_scaled: 1.1, times: {start: 0, stop: 50, num: 200}}
    interaction: {kind: random, n_sys: 2, n_env: 8}
    tasks:
      - {type: spectrum}
      - {type: classify, states: [...]}

Each task may override ``model``, ``state``, ``params`` and ``interaction``
with its own sections. ``lambda_scaled: v`` means lambda = v * (E / pi)^2
with E the bandwidth of the model.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import opensys, spectra, states

TASK_TYPES = ("spectrum", "evolve", "markov-scan", "coarse", "opensys", "classify", "factors")


class ScenarioError(ValueError):
    """Schema violation; ``where`` is 'file:line:col' when known."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass
class Scenario:
    data: dict
    source: str
    digest: str
    marks: dict

    def where(self, path: tuple) -> str:
        while path and path not in self.marks:
            path = path[:-1]
        mark = self.marks.get(path)
        return f"{self.source}:{mark[0]}:{mark[1]}" if mark else self.source


def _collect_marks(node, path, marks):
    marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            marks[path + (key.value,)] = (key.start_mark.line + 1, key.start_mark.column + 1)
            _collect_marks(value, path + (key.value,), marks)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _collect_marks(item, path + (i,), marks)


def load_text(text: str, source: str = "<scenario>") -> Scenario:
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        data = loader.construct_document(node) if node is not None else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}", where) from None
    finally:
        loader.dispose()
    marks = {}
    if node is not None:
        _collect_marks(node, (), marks)
    scen = Scenario(data if data is not None else {}, source,
                    hashlib.sha256(text.encode("utf-8")).hexdigest(), marks)
    validate(scen)
    return scen


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from None
    return load_text(text, str(path))


# -- schema -----------------------------------------------------------------

def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _numlist(v):
    return isinstance(v, list) and len(v) > 0 and all(_num(x) for x in v)


def _matrix(v):
    return isinstance(v, list) and len(v) > 0 and all(_numlist(r) and len(r) == len(v[0]) for r in v)


_CHECKS = {
    "num": (_num, "a number"),
    "int": (_int, "an integer"),
    "str": (lambda v: isinstance(v, str), "a string"),
    "numlist": (_numlist, "a non-empty list of numbers"),
    "matrix": (_matrix, "a rectangular list of number lists"),
    "map": (lambda v: isinstance(v, dict), "a mapping"),
    "list": (lambda v: isinstance(v, list), "a list"),
}

MODEL_FIELDS = {
    "spin": {"n_spins": "int", "omega0": "num"},
    "oscillator": {"n_modes": "int", "omega0": "num", "nu_max": "int"},
    "diagonal": {"energies": "numlist", "energy_scale": "num"},
    "dense": {"matrix": "matrix", "energy_scale": "num"},
}
MODEL_REQUIRED = {"spin": {"n_spins"}, "oscillator": {"n_modes", "nu_max"},
                  "diagonal": {"energies"}, "dense": {"matrix"}}
STATE_FIELDS = {
    "extremes": {"sign": "int"},
    "populations": {"weights": "numlist"},
    "pure": {"amplitudes": "numlist"},
    "random": {"rank": "int"},
    "maximally_mixed": {},
    "density": {"matrix": "matrix"},
}
STATE_REQUIRED = {"populations": {"weights"}, "pure": {"amplitudes"}, "density": {"matrix"}}
PARAM_FIELDS = {"t0": "num", "lambda": "num", "lambda_scaled": "num", "times": "map",
                "t_prime": "num", "far": "num", "near": "num", "mode": "str", "width": "num",
                "k": "int", "eps_dec": "num", "persist": "int", "policy": "str",
                "probe": "numlist", "phases": "str", "family": "str", "window": "int"}
TIMES_FIELDS = {"start": "num", "stop": "num", "num": "int"}
INTER_FIELDS = {
    "random": {"n_sys": "int", "n_env": "int", "scale": "num", "env_probabilities": "numlist"},
    "spin_bath": {"n_sys_spins": "int", "n_env_spins": "int", "coupling": "num",
                  "env_probabilities": "numlist"},
    "grid": {"e_grid": "matrix", "env_probabilities": "numlist"},
}
INTER_REQUIRED = {"random": {"n_sys", "n_env"}, "spin_bath": {"n_sys_spins", "n_env_spins"},
                  "grid": {"e_grid"}}
LINDBLAD_FIELDS = {"gamma": "matrix", "a_values": "matrix"}
TASK_FIELDS = {"type": "str", "name": "str", "model": "map", "state": "map", "params": "map",
               "interaction": "map", "states": "list", "lindblad": "map"}
TOP_FIELDS = {"seed": "int", "model": "map", "state": "map", "params": "map",
              "interaction": "map", "tasks": "list", "out_dir": "str", "lindblad": "map"}


def _check_fields(scen, value, fields, path, required=()):
    if not isinstance(value, dict):
        raise ScenarioError("expected a mapping", scen.where(path))
    for key, v in value.items():
        if key not in fields:
            raise ScenarioError(f"unknown key {key!r} (allowed: {', '.join(sorted(fields))})",
                                scen.where(path + (key,)))
        ok, what = _CHECKS[fields[key]]
        if not ok(v):
            raise ScenarioError(f"{key!r} must be {what}", scen.where(path + (key,)))
    for key in sorted(set(required) - set(value)):
        raise ScenarioError(f"missing required key {key!r}", scen.where(path))


def _check_kind(scen, value, table, required, path):
    if not isinstance(value, dict):
        raise ScenarioError("expected a mapping", scen.where(path))
    kind = value.get("kind")
    if kind not in table:
        raise ScenarioError(f"'kind' must be one of {', '.join(table)}",
                            scen.where(path + ("kind",)))
    body = {k: v for k, v in value.items() if k != "kind"}
    _check_fields(scen, body, table[kind], path, required.get(kind, ()))


def _check_sections(scen, section, path):
    if "model" in section:
        _check_kind(scen, section["model"], MODEL_FIELDS, MODEL_REQUIRED, path + ("model",))
    if "state" in section:
        _check_kind(scen, section["state"], STATE_FIELDS, STATE_REQUIRED, path + ("state",))
    if "interaction" in section:
        _check_kind(scen, section["interaction"], INTER_FIELDS, INTER_REQUIRED,
                    path + ("interaction",))
    if "lindblad" in section:
        _check_fields(scen, section["lindblad"], LINDBLAD_FIELDS, path + ("lindblad",),
                      ("gamma", "a_values"))
    if "params" in section:
        params = section["params"]
        _check_fields(scen, params, PARAM_FIELDS, path + ("params",))
        if "lambda" in params and "lambda_scaled" in params:
            raise ScenarioError("give either 'lambda' or 'lambda_scaled', not both",
                                scen.where(path + ("params", "lambda_scaled")))
        if "times" in params:
            _check_fields(scen, params["times"], TIMES_FIELDS, path + ("params", "times"),
                          ("stop", "num"))


def validate(scen: Scenario):
    data = scen.data
    _check_fields(scen, data, TOP_FIELDS, ())
    _check_sections(scen, data, ())
    for i, task in enumerate(data.get("tasks", [])):
        path = ("tasks", i)
        _check_fields(scen, task, TASK_FIELDS, path, ("type",))
        if task["type"] not in TASK_TYPES:
            raise ScenarioError(f"unknown task type {task['type']!r} (allowed: {', '.join(TASK_TYPES)})",
                                scen.where(path + ("type",)))
        _check_sections(scen, task, path)
        for j, st in enumerate(task.get("states", [])):
            _check_kind(scen, st, STATE_FIELDS, STATE_REQUIRED, path + ("states", j))
    names = [task_name(t, i) for i, t in enumerate(data.get("tasks", []))]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ScenarioError(f"duplicate task names: {', '.join(sorted(dup))}", scen.where(("tasks",)))


def task_name(task: dict, index: int) -> str:
    return task.get("name", f"{index:02d}-{task['type']}")


# -- builders ---------------------------------------------------------------

def build_model(cfg: dict) -> spectra.SpectralDecomposition:
    kind = cfg["kind"]
    if kind == "spin":
        return spectra.spin_ensemble(cfg["n_spins"], cfg.get("omega0", 1.0))
    if kind == "oscillator":
        return spectra.oscillator_modes(cfg["n_modes"], cfg.get("omega0", 1.0), cfg["nu_max"])
    if kind == "diagonal":
        return spectra.from_diagonal(cfg["energies"], energy_scale=cfg.get("energy_scale"))
    return spectra.from_hermitian(np.array(cfg["matrix"], dtype=float),
                                  energy_scale=cfg.get("energy_scale"))


def build_state(cfg: dict, spec: spectra.SpectralDecomposition,
                rng: np.random.Generator) -> states.DensityMatrix:
    kind = cfg["kind"]
    d = spec.dim
    if kind == "extremes":
        return states.from_pure(states.extremes_superposition(spec, cfg.get("sign", 1)))
    if kind == "populations":
        w = np.asarray(cfg["weights"], dtype=float)
        if w.size != spec.count or np.any(w < 0) or not w.sum() > 0:
            raise ValueError(f"populations need {spec.count} non-negative weights")
        w = w / w.sum()
        diag = (w / spec.multiplicities)[spec.level_of]
        return states.DensityMatrix(spec.from_level_basis(np.diag(diag.astype(complex))))
    if kind == "pure":
        amps = np.asarray(cfg["amplitudes"], dtype=float)
        if amps.size != d:
            raise ValueError(f"pure state needs {d} amplitudes")
        return states.from_pure(amps)
    if kind == "random":
        return states.random_density(d, rng, cfg.get("rank"))
    if kind == "maximally_mixed":
        return states.maximally_mixed(d)
    return states.DensityMatrix(np.array(cfg["matrix"], dtype=float))


def resolve_lambda(params: dict, spec: spectra.SpectralDecomposition) -> Optional[float]:
    if "lambda" in params:
        return float(params["lambda"])
    if "lambda_scaled" in params:
        return float(params["lambda_scaled"]) * (spec.bandwidth / math.pi) ** 2
    return None


def time_grid(params: dict, default=(0.0, 10.0, 101)) -> np.ndarray:
    t = params.get("times", {})
    return np.linspace(float(t.get("start", default[0])), float(t.get("stop", default[1])),
                       int(t.get("num", default[2])))


def build_interaction(cfg: dict, rng: np.random.Generator) -> tuple:
    """(interaction, environment probabilities)."""
    kind = cfg["kind"]
    if kind == "random":
        inter = opensys.random_interaction(cfg["n_sys"], cfg["n_env"], rng, cfg.get("scale", 1.0))
    elif kind == "spin_bath":
        inter = opensys.spin_bath_interaction(cfg["n_sys_spins"], cfg["n_env_spins"], rng,
                                              cfg.get("coupling", 1.0))
    else:
        inter = opensys.PureDecoherenceInteraction(np.array(cfg["e_grid"], dtype=float))
    p = cfg.get("env_probabilities")
    p = np.full(inter.n_env, 1.0 / inter.n_env) if p is None else np.asarray(p, dtype=float)
    return inter, opensys.env_probabilities(inter, p)


def merged(scen_data: dict, task: dict, key: str) -> Any:
    """Task section overrides the top-level one; params merge key by key."""
    if key == "params":
        out = dict(scen_data.get("params", {}))
        if {"lambda", "lambda_scaled"} & set(task.get("params", {})):
            out.pop("lambda", None)
            out.pop("lambda_scaled", None)
        out.update(task.get("params", {}))
        return out
    return task.get(key, scen_data.get(key))
