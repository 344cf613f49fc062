"""JSON problem files: schema, validation and conversion to a :class:`SynthesisProblem`."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import jsonschema
import numpy as np

from .dynamics import MatrixFamily, UncertainSystem
from .logic import AffineProposition, RotatedBoxProposition, parse_formula
from .policy import Partition, PolicySpec, RecourseSpec
from .problem import ObjectiveSpec, Polyhedron, SynthesisProblem

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_poly = {"type": "object", "required": ["A", "b"], "properties": {"A": _matrix, "b": _vector},
         "additionalProperties": False}

SCHEMA = {
    "type": "object",
    "required": ["system", "horizon", "x0", "propositions", "formula"],
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "properties": {
                "builtin": {"enum": ["double_integrator"]},
                "Ts": {"type": "number", "exclusiveMinimum": 0},
                "A": _matrix, "B": _matrix,
                "c": {"type": "object", "required": ["base"],
                      "properties": {"base": _vector, "increments": _matrix}, "additionalProperties": False},
                "n_w": {"type": "integer", "minimum": 0},
            },
            "required": ["n_w"],
            "additionalProperties": False,
        },
        "horizon": {"type": "integer", "minimum": 1},
        "x0": _vector,
        "propositions": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "oneOf": [
                    {"type": "object", "required": ["type", "P", "rho0"], "additionalProperties": False,
                     "properties": {"type": {"const": "affine"}, "P": _matrix, "rho0": _vector, "rhoW": _matrix}},
                    {"type": "object", "required": ["type", "b"], "additionalProperties": False,
                     "properties": {"type": {"const": "rotated_box"}, "b": _vector,
                                    "center": {"type": "array", "items": {"type": "integer"}},
                                    "angle": {"type": ["integer", "null"]},
                                    "state": {"type": "array", "items": {"type": "integer"}}}},
                ]
            },
        },
        "formula": {"type": "string"},
        "state": _poly,
        "input": _poly,
        "state_box": {"type": "object", "required": ["lower", "upper"],
                      "properties": {"lower": _vector, "upper": _vector}, "additionalProperties": False},
        "policy": {"type": "object", "additionalProperties": False,
                   "properties": {"memory": {"type": ["integer", "null"], "minimum": 0},
                                  "partition": {"type": "object"}}},
        "recourse": {"type": "object", "additionalProperties": False,
                     "properties": {"P_delta": {"type": "integer", "minimum": 1}}},
        "objective": {"type": "object", "additionalProperties": False,
                      "properties": {"kind": {"enum": ["sample_average_terminal", "worst_case"]},
                                     "weights": _vector}},
        "guarantees": {
            "oneOf": [
                {"type": "object", "required": ["eps_phi", "eps_s", "beta_phi", "beta_s"],
                 "additionalProperties": False,
                 "properties": {k: {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
                                for k in ("eps_phi", "eps_s", "beta_phi", "beta_s")}},
                {"type": "object", "required": ["eps", "beta"], "additionalProperties": False,
                 "properties": {k: {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
                                for k in ("eps", "beta")}},
            ]
        },
        "H_bound": {"type": "number", "exclusiveMinimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
    },
}


class ProblemFileError(ValueError):
    pass


@dataclass
class LoadedProblem:
    problem: SynthesisProblem
    spec: PolicySpec
    recourse: RecourseSpec
    guarantees: dict
    doc: dict


def _system(doc: dict) -> UncertainSystem:
    s, N = doc["system"], doc["horizon"]
    n_w = s["n_w"]
    if "builtin" in s:
        from .studies.car import zoh_double_integrator
        A, B = zoh_double_integrator(s.get("Ts", 0.4))
        return UncertainSystem(A, B, n_w=n_w, N=N)
    if "A" not in s or "B" not in s:
        raise ProblemFileError("system needs either 'builtin' or both 'A' and 'B'")
    c = None
    if "c" in s:
        inc = s["c"].get("increments")
        c = MatrixFamily.affine(s["c"]["base"], inc) if inc else MatrixFamily.constant(s["c"]["base"])
    return UncertainSystem(np.array(s["A"], float), np.array(s["B"], float), c, n_w=n_w, N=N)


def load_problem(doc: dict) -> LoadedProblem:
    """Validate ``doc`` against :data:`SCHEMA` and cross-check dimensions."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemFileError(f"{where}: {exc.message}") from None
    try:
        sys = _system(doc)
        props = {}
        for name, p in doc["propositions"].items():
            if p["type"] == "affine":
                props[name] = AffineProposition(name, p["P"], p["rho0"], p.get("rhoW"), n_w=sys.n_w)
            else:
                props[name] = RotatedBoxProposition(name, p["b"], sys.n_x, sys.n_w, p.get("center", (0, 1)),
                                                    p.get("angle", 2), p.get("state", (0, 1)))
            if props[name].n_w > sys.n_w:
                raise ProblemFileError(f"proposition {name!r} reads more disturbance coordinates than n_w")
        formula = parse_formula(doc["formula"], props)
        X = Polyhedron(doc["state"]["A"], doc["state"]["b"]) if "state" in doc else None
        U = Polyhedron(doc["input"]["A"], doc["input"]["b"]) if "input" in doc else None
        sb = doc.get("state_box")
        state_box = None if sb is None else (np.array(sb["lower"], float), np.array(sb["upper"], float))
        obj = doc.get("objective", {})
        objective = ObjectiveSpec(obj.get("kind", "sample_average_terminal"),
                                  None if "weights" not in obj else np.array(obj["weights"], float))
        problem = SynthesisProblem(sys, formula, props, np.array(doc["x0"], float), X, U, state_box, objective,
                                   doc.get("H_bound", 100.0), doc.get("tol", 1e-5))
        pol = doc.get("policy", {})
        partition = Partition.from_dict(pol["partition"]) if "partition" in pol else None
        spec = PolicySpec(sys.N, sys.n_u, sys.n_w, partition, pol.get("memory"))
        P_delta = doc.get("recourse", {}).get("P_delta", 1)
        if P_delta not in (1, spec.P):
            raise ProblemFileError("recourse P_delta must be 1 or equal to the policy partition size")
        recourse = RecourseSpec(spec.partition if P_delta > 1 else None)
    except ProblemFileError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ProblemFileError(str(exc)) from None
    return LoadedProblem(problem, spec, recourse, doc.get("guarantees", {}), doc)
