"""JSON problem and solution documents.

Problem documents carry densities as per-atom values of dP/dmu (or atom
probabilities when ``density_convention`` says so) and keep full double
precision.  Solution documents round every real to 12 significant digits,
so emitting a parsed solution reproduces it byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict

import numpy as np

from . import instances
from .errors import NpConvexError
from .risk import ConvexExpectation, Entropic, FinitelyGenerated, Linear, WorstCase
from .solver import NpSolution, ProblemSpec, SolverConfig
from .space import FiniteProbSpace

FORMAT_VERSION = "1.0"
DENSITY = "dP/dmu"
PROBABILITIES = "probabilities"
RHO_TYPES = ("linear", "entropic", "worst_case", "finitely_generated")
SOLVER_FIELDS = {
    "tol_opt": float,
    "tol_feas": float,
    "tau_eq": float,
    "max_outer_iter": int,
    "max_inner_iter": int,
    "seed": int,
}
INF = "+inf"


class DocumentError(NpConvexError, ValueError):
    """Malformed document; ``where`` is a line/column or a field path."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


# -- parsing ----------------------------------------------------------------------


def _get(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise DocumentError("expected an object", path or "$")
    if key not in d:
        raise DocumentError(f"missing field {key!r}", path or "$")
    return d[key]


def _real(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DocumentError(f"expected a number, got {value!r}", path)
    if not math.isfinite(value):
        raise DocumentError("expected a finite number", path)
    return float(value)


def _reals(value, path: str, n: int | None = None) -> list:
    if not isinstance(value, list):
        raise DocumentError("expected a list of numbers", path)
    out = [_real(v, f"{path}[{i}]") for i, v in enumerate(value)]
    if n is not None and len(out) != n:
        raise DocumentError(f"expected {n} entries, got {len(out)}", path)
    return out


def _density(space, values, path, convention):
    vals = np.array(_reals(values, path, space.n))
    if convention == PROBABILITIES:
        vals = vals / space.mu
    try:
        return space.density(vals)
    except ValueError as exc:
        raise DocumentError(str(exc), path) from None


def _rho(d, space, path, convention) -> ConvexExpectation:
    kind = _get(d, "type", path)
    try:
        if kind == "linear":
            return Linear(_density(space, _get(d, "density", path), f"{path}.density", convention))
        if kind == "entropic":
            return Entropic(_density(space, _get(d, "reference", path), f"{path}.reference", convention))
        if kind == "worst_case":
            family = _get(d, "family", path)
            if not isinstance(family, list) or not family:
                raise DocumentError("expected a nonempty list of densities", f"{path}.family")
            return WorstCase(
                tuple(_density(space, f, f"{path}.family[{i}]", convention) for i, f in enumerate(family))
            )
        if kind == "finitely_generated":
            gens = _get(d, "generators", path)
            if not isinstance(gens, list) or not gens:
                raise DocumentError("expected a nonempty list of generators", f"{path}.generators")
            items = []
            for i, g in enumerate(gens):
                gp = f"{path}.generators[{i}]"
                dens = _density(space, _get(g, "density", gp), f"{gp}.density", convention)
                cost = _real(_get(g, "penalty", gp), f"{gp}.penalty")
                if cost < 0:
                    raise DocumentError("generator penalty must be nonnegative", f"{gp}.penalty")
                items.append((dens, cost))
            return FinitelyGenerated(tuple(items))
    except DocumentError:
        raise
    except ValueError as exc:
        raise DocumentError(str(exc), path) from None
    raise DocumentError(f"unknown type {kind!r}; expected one of {', '.join(RHO_TYPES)}", f"{path}.type")


def problem_from_dict(doc: dict, as_probabilities: bool = False) -> tuple[ProblemSpec, dict]:
    """Validated ProblemSpec and the solver overrides of a problem document."""
    if not isinstance(doc, dict):
        raise DocumentError("expected a JSON object", "$")
    convention = doc.get("density_convention", DENSITY)
    if convention not in (DENSITY, PROBABILITIES):
        raise DocumentError(f"unknown density convention {convention!r}", "density_convention")
    if as_probabilities:
        convention = PROBABILITIES
    atoms = _get(doc, "atoms", "")
    mu = _reals(_get(atoms, "mu", "atoms"), "atoms.mu")
    labels = atoms.get("labels") if isinstance(atoms, dict) else None
    if labels is not None and (not isinstance(labels, list) or not all(isinstance(x, str) for x in labels)):
        raise DocumentError("expected a list of strings", "atoms.labels")
    try:
        space = FiniteProbSpace(mu, labels)
    except ValueError as exc:
        raise DocumentError(str(exc), "atoms") from None
    rho1 = _rho(_get(doc, "rho1", ""), space, "rho1", convention)
    rho2 = _rho(_get(doc, "rho2", ""), space, "rho2", convention)
    k1 = _real(_get(doc, "k1", ""), "k1")
    k2 = _real(_get(doc, "k2", ""), "k2")
    alpha = _real(_get(doc, "alpha", ""), "alpha")
    if not k1 < k2:
        raise DocumentError("k1 must be strictly smaller than k2", "k2")
    spec = ProblemSpec(space, rho1, rho2, k1, k2, alpha)
    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise DocumentError("expected an object", "solver")
    overrides = {}
    for key, value in solver.items():
        if key not in SOLVER_FIELDS:
            raise DocumentError(f"unknown solver option {key!r}", f"solver.{key}")
        overrides[key] = SOLVER_FIELDS[key](_real(value, f"solver.{key}"))
    return spec, overrides


def parse_problem(text: str, as_probabilities: bool = False) -> tuple[ProblemSpec, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    return problem_from_dict(doc, as_probabilities)


def config_from(overrides: dict, **flags) -> SolverConfig:
    """Document overrides, then command-line flags (when given)."""
    merged = dict(overrides)
    merged.update({k: v for k, v in flags.items() if v is not None})
    try:
        return SolverConfig(**merged)
    except ValueError as exc:
        raise DocumentError(str(exc), "solver") from None


# -- emitting problems ---------------------------------------------------------------


def _rho_dict(rho: ConvexExpectation, convert) -> dict:
    if isinstance(rho, Linear):
        return {"type": "linear", "density": convert(rho.p)}
    if isinstance(rho, Entropic):
        return {"type": "entropic", "reference": convert(rho.q0)}
    if isinstance(rho, WorstCase):
        return {"type": "worst_case", "family": [convert(d) for d in rho.family]}
    if isinstance(rho, FinitelyGenerated):
        return {
            "type": "finitely_generated",
            "generators": [{"density": convert(d), "penalty": c} for d, c in rho.generators],
        }
    raise TypeError(f"cannot serialize {type(rho).__name__}")


def problem_to_dict(spec: ProblemSpec, comment: str | None = None, as_probabilities: bool = False) -> dict:
    if as_probabilities:
        def convert(d):
            return d.weights.tolist()
    else:
        def convert(d):
            return d.values.tolist()

    doc = {
        "format_version": FORMAT_VERSION,
        "density_convention": PROBABILITIES if as_probabilities else DENSITY,
    }
    if comment:
        doc["comment"] = comment
    doc.update(
        {
            "atoms": {"labels": list(spec.space.labels), "mu": spec.space.mu.tolist()},
            "rho1": _rho_dict(spec.rho1, convert),
            "rho2": _rho_dict(spec.rho2, convert),
            "k1": spec.k1,
            "k2": spec.k2,
            "alpha": spec.alpha,
        }
    )
    return doc


def example_document(name: str, as_probabilities: bool = False) -> dict:
    spec = instances.example(name)
    return problem_to_dict(spec, instances.COMMENTS[name], as_probabilities)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


# -- solutions ------------------------------------------------------------------------


def _round(value):
    """12 significant digits for every real; +inf as a string; containers recursively."""
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return INF if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return float(f"{value:.12g}")
    if isinstance(value, dict):
        return {str(k): _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_round(v) for v in value]
    return str(value)


def _per_atom(labels, values) -> dict:
    return {lab: float(v) for lab, v in zip(labels, values)}


def solution_to_dict(spec: ProblemSpec, sol: NpSolution, config: SolverConfig) -> dict:
    labels = spec.space.labels
    doc = {
        "format_version": FORMAT_VERSION,
        "status": sol.status,
        "density_convention": DENSITY,
        "x_star": _per_atom(labels, sol.x_star.values),
        "beta": sol.beta,
        "alpha": spec.alpha,
        "alpha_star": sol.alpha_star,
        "gamma": sol.gamma,
        "q_star": _per_atom(labels, sol.q_star.values),
        "p_star": _per_atom(labels, sol.p_star.values),
        "z": sol.z,
        "boundary_randomization": dict(sol.boundary_randomization),
        "duality_gap": sol.duality_gap,
        "saddle_value": sol.saddle_value,
        "rho1_penalty": sol.rho1_penalty,
        "rho2_penalty": sol.rho2_penalty,
        "diagnostics": sol.diagnostics,
        "config": asdict(config),
    }
    return _round(doc)


def failure_to_dict(status: str, message: str, config: SolverConfig | None = None, **extra) -> dict:
    doc = {"format_version": FORMAT_VERSION, "status": status, "message": message}
    doc.update(extra)
    if config is not None:
        doc["config"] = asdict(config)
    return _round(doc)


def read_solution(text: str) -> dict:
    """Parse a solution document, turning the "+inf" marker back into a float."""

    def restore(v):
        if v == INF:
            return math.inf
        if isinstance(v, dict):
            return {k: restore(x) for k, x in v.items()}
        if isinstance(v, list):
            return [restore(x) for x in v]
        return v

    return restore(json.loads(text))


def write_solution(doc: dict) -> str:
    return dumps(_round(doc))
