"""Command-line interface: solve, example, certify, oracle.

Exit codes: 0 success, 1 bad input or unknown example, 2 infeasible
problem, 3 unverified result or saddle failure (a document with a status
field is still written), 4 oracle budget refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import documents, instances
from .documents import DocumentError
from .errors import (
    DimensionError,
    GridBudgetError,
    InfeasibleProblemError,
    InternalConsistencyError,
    InvalidInputError,
    SaddleFailureError,
    UnverifiedError,
)
from .oracle import GridSpec, cross_check
from .risk import certify_axioms, certify_representation
from .solver import solve

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_UNVERIFIED, EXIT_BUDGET = 0, 1, 2, 3, 4
REPRESENTATION_STEP = 1e-3
REPRESENTATION_BUDGET = 10**7


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(args):
    try:
        text = Path(args.path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DocumentError(f"cannot read {args.path}: {exc.strerror}") from None
    spec, overrides = documents.parse_problem(text, args.as_probabilities)
    config = documents.config_from(
        overrides,
        tol_opt=getattr(args, "tol_opt", None),
        tol_feas=getattr(args, "tol_feas", None),
        seed=getattr(args, "seed", None),
    )
    return spec, config


def cmd_solve(args) -> int:
    spec, config = _load(args)
    try:
        sol = solve(spec, config)
    except InfeasibleProblemError as exc:
        _say(f"infeasible: {exc}")
        _emit(documents.write_solution(documents.failure_to_dict("infeasible", str(exc), config)), args.out)
        return EXIT_INFEASIBLE
    except UnverifiedError as exc:
        status = "saddle_failure" if isinstance(exc, SaddleFailureError) else "unverified"
        _say(f"{status}: {exc}")
        doc = documents.failure_to_dict(
            status, str(exc), config, lower_bound=exc.lower_bound, upper_bound=exc.upper_bound
        )
        _emit(documents.write_solution(doc), args.out)
        return EXIT_UNVERIFIED
    except InternalConsistencyError as exc:
        _say(f"internal consistency failure: {exc}")
        doc = documents.failure_to_dict("inconsistent", str(exc), config, diagnostics=exc.diagnostics)
        _emit(documents.write_solution(doc), args.out)
        return EXIT_UNVERIFIED
    doc = documents.solution_to_dict(spec, sol, config)
    _emit(documents.write_solution(doc), args.out)
    if args.verbose:
        labels = spec.space.labels
        _say(f"beta = {sol.beta:.12g}   alpha* = {sol.alpha_star:.12g}   gamma = {sol.gamma:.12g}")
        _say(f"z = {sol.z:.12g}   duality gap = {sol.duality_gap:.3e}")
        for i, lab in enumerate(labels):
            _say(f"  {lab}: X* = {sol.x_star.values[i]:.12g}  P* = {sol.p_star.values[i]:.12g}  Q* = {sol.q_star.values[i]:.12g}")
    return EXIT_OK


def cmd_example(args) -> int:
    if args.name not in instances.EXAMPLE_NAMES:
        _say(f"unknown example {args.name!r}; valid names: {', '.join(instances.EXAMPLE_NAMES)}")
        return EXIT_INPUT
    _emit(documents.dumps(documents.example_document(args.name, args.as_probabilities)), args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    spec, config = _load(args)
    rng = np.random.default_rng(args.seed)
    report = {"format_version": documents.FORMAT_VERSION, "trials": args.trials, "seed": args.seed}
    passed = True
    for name in ("rho1", "rho2"):
        rho = getattr(spec, name)
        axioms = certify_axioms(rho, trials=args.trials, seed=args.seed)
        entry = {"type": rho.kind, "axioms": axioms.to_dict(), "representation": []}
        passed &= axioms.passed
        for _ in range(3):
            x = spec.space.variable(rng.uniform(spec.k1, spec.k2, spec.n))
            try:
                rep = certify_representation(rho, x, REPRESENTATION_STEP, REPRESENTATION_BUDGET)
            except (DimensionError, GridBudgetError) as exc:
                entry["representation"] = {"skipped": str(exc)}
                break
            entry["representation"].append(rep.to_dict())
            passed &= rep.passed
        report[name] = entry
    report["passed"] = bool(passed)
    _emit(documents.write_solution(report), args.out)
    if args.verbose:
        _say("certification " + ("passed" if passed else "FAILED"))
    return EXIT_OK if passed else EXIT_INPUT


def cmd_oracle(args) -> int:
    spec, config = _load(args)
    grid = GridSpec(args.test_res, args.simplex_res)
    try:
        report = cross_check(spec, config, grid)
    except GridBudgetError as exc:
        _say(f"refused: {exc} (required {exc.required})")
        doc = {"format_version": documents.FORMAT_VERSION, "status": "refused", "required": exc.required, "budget": exc.budget}
        _emit(documents.write_solution(doc), args.out)
        return EXIT_BUDGET
    doc = {"format_version": documents.FORMAT_VERSION, **report.to_dict()}
    _emit(documents.write_solution(doc), args.out)
    if args.verbose:
        for c in report.checks:
            _say(f"{'pass' if c['passed'] else 'FAIL'}  {c['name']}")
    return EXIT_OK if report.passed else EXIT_UNVERIFIED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npconvex", description="Neyman-Pearson tests under convex expectations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver_flags=True):
        p.add_argument("--out", help="write the document here instead of standard output")
        p.add_argument("--verbose", action="store_true", help="human-readable summary on standard error")
        p.add_argument("--as-probabilities", action="store_true", help="densities are atom probabilities")
        if solver_flags:
            p.add_argument("--tol-opt", type=float)
            p.add_argument("--tol-feas", type=float)

    p = sub.add_parser("solve", help="solve a problem document")
    p.add_argument("path")
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("example", help="emit a built-in problem document")
    p.add_argument("name")
    common(p, solver_flags=False)
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("certify", help="check the axioms and the dual representation of both expectations")
    p.add_argument("path")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    common(p, solver_flags=False)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("oracle", help="cross-check the solver against brute force")
    p.add_argument("path")
    p.add_argument("--test-res", type=int, default=101)
    p.add_argument("--simplex-res", type=int, default=200)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DocumentError, InvalidInputError, DimensionError) as exc:
        _say(f"error: {exc}")
        return EXIT_INPUT
    except json.JSONDecodeError as exc:  # pragma: no cover - parse_problem converts these
        _say(f"error: line {exc.lineno}, column {exc.colno}: {exc.msg}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
