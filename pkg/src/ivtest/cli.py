"""Command-line driver: replicate, feasibility, test, simulate.

Exit codes: 0 clean run, 1 input error, 2 domain refusal (atomic marginals
or infeasible discrete first stage in ``replicate``).  Statistical decisions
are data, not exit codes.  The environment variable ``IVT_SEED`` overrides
``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import IVTestError, NonAtomicityError, ValidationError
from .measures import JointLaw
from .simulate import (
    Dataset,
    DGPSpec,
    discretize,
    nontestability_demo,
    run_experiment,
)
from .validity import (
    InfeasibilityCertificate,
    discrete_generator_feasible,
    make_test,
    minimal_collision_mass,
)

TEST_NAMES = ("moment", "jump", "fosd", "sure-decrease", "pearl", "feasibility")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivtest",
        description=(
            "Replicate observed laws with valid-instrument models and run the "
            "validity checks that survive continuity or monotonicity restrictions."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default=0):
        p.add_argument("--input", help="input file path")
        p.add_argument("--output", help="output file path")
        p.add_argument("--seed", type=int, default=seed_default, help="RNG seed (IVT_SEED overrides)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("replicate", help="replicate a joint-law JSON with a valid-instrument model")
    common(p)
    p.add_argument("--depth", type=int, default=6, help="partition depth (default 6)")

    p = sub.add_parser("feasibility", help="discrete first-stage feasibility and related checks")
    common(p)

    p = sub.add_parser("test", help="run validity tests on a joint law or dataset")
    common(p)
    p.add_argument("--bins", default="4,4,4", help="Y,X,Z bin counts for dataset input")
    p.add_argument("--test", action="append", choices=TEST_NAMES, dest="tests",
                   help="test to run (repeatable; default: all applicable)")
    p.add_argument("--K", type=float, default=1.0, help="jump / sure-decrease threshold")
    p.add_argument("--tol", type=float, default=0.0, help="FOSD tolerance")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--delta", type=float, default=1.0)

    p = sub.add_parser("simulate", help="run a size/power experiment from a spec config")
    common(p, seed_default=7)
    p.add_argument("--bins", default="4,4,4")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=200)
    return parser


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _write_text(path: str | None, text: str):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _parse_bins(spec: str) -> tuple[int, int, int]:
    try:
        y, x, z = (int(v) for v in spec.split(","))
    except ValueError as exc:
        raise ValidationError(f"--bins must be Y,X,Z integers: {exc}") from exc
    return y, x, z


def _effective_seed(args) -> int:
    env = os.environ.get("IVT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"IVT_SEED must be an integer: {exc}") from exc
    return args.seed


def cmd_replicate(args) -> int:
    if not args.input:
        raise ValidationError("replicate needs --input")
    law = JointLaw.from_json_dict(_read_json(args.input))
    try:
        model, error = nontestability_demo(law, args.depth)
    except NonAtomicityError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    payload = model.to_json_dict()
    payload["replication_error"] = error
    _write_text(args.output, json.dumps(payload))
    print(f"replication error: {error!r}")
    return 0


def cmd_feasibility(args) -> int:
    if not args.input:
        raise ValidationError("feasibility needs --input")
    obj = _read_json(args.input)
    try:
        conditionals = [np.asarray(c, dtype=float) for c in obj["conditionals"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"feasibility input needs 'conditionals': {exc}") from exc
    weights = obj.get("weights")
    feasible, witness = discrete_generator_feasible(conditionals, weights)
    report = {
        "test": "feasibility",
        "statistic": (
            minimal_collision_mass(conditionals[0], conditionals[1])
            if len(conditionals) == 2
            else float(not feasible)
        ),
        "threshold": 0.0,
        "decision": "feasible" if feasible else "infeasible",
        "diagnostics": {},
    }
    if isinstance(witness, InfeasibilityCertificate):
        report["diagnostics"]["excess"] = witness.excess
        if witness.x_index is not None:
            report["diagnostics"]["x_index"] = float(witness.x_index)
        report["reason"] = witness.reason
    elif feasible and hasattr(witness, "plan"):
        report["coupling"] = [[float(v) for v in row] for row in witness.plan]
    _write_text(args.output, json.dumps(report))
    return 0


def _load_law(args) -> JointLaw:
    if not args.input:
        raise ValidationError("test needs --input")
    path = args.input
    if path.endswith(".csv"):
        data = Dataset.from_csv_text(Path(path).read_text())
        return discretize(data, *_parse_bins(args.bins))
    return JointLaw.from_json_dict(_read_json(path))


def cmd_test(args) -> int:
    law = _load_law(args)
    names = args.tests or ["fosd", "sure-decrease", "jump", "pearl", "moment"]
    reports = []
    for name in names:
        if name == "feasibility":
            conds = [c.x_marginal().masses for c in law.conditionals]
            feasible, witness = discrete_generator_feasible(
                [c / c.sum() for c in conds]
            )
            stat = 0.0 if feasible else getattr(witness, "excess", 1.0)
            reports.append(
                {
                    "test": "feasibility",
                    "statistic": stat,
                    "threshold": 0.0,
                    "decision": "feasible" if feasible else "infeasible",
                    "diagnostics": {},
                }
            )
            continue
        params = {}
        if name in ("jump", "sure-decrease"):
            params["K"] = args.K
        if name == "fosd":
            params["tol"] = args.tol
        if name == "moment":
            params.update(alpha=args.alpha, beta=args.beta, gamma=args.gamma, delta=args.delta)
        _, fn = make_test(name, **params)
        reports.append(fn(law).to_json_dict())
    if args.format == "csv":
        lines = ["test,statistic,threshold,decision"]
        lines += [
            f"{r['test']},{r['statistic']!r},{r['threshold']!r},{r['decision']}"
            for r in reports
        ]
        _write_text(args.output, "\n".join(lines) + "\n")
    else:
        _write_text(args.output, json.dumps(reports))
    return 0


def cmd_simulate(args) -> int:
    if not args.input:
        raise ValidationError("simulate needs --input")
    obj = _read_json(args.input)
    try:
        specs = [DGPSpec.from_json_dict(s) for s in obj["specs"]]
        test_objs = obj.get("tests", [])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed simulation config: {exc}") from exc
    tests = []
    for t in test_objs:
        t = dict(t)
        tests.append(make_test(t.pop("name"), **t))
    n = int(obj.get("n", args.n))
    reps = int(obj.get("reps", args.reps))
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    bins = tuple(obj.get("bins", _parse_bins(args.bins)))
    depth = obj.get("nontestability_depth")
    result = run_experiment(
        specs,
        tests,
        n=n,
        reps=reps,
        seed=_effective_seed(args),
        bins=bins,  # type: ignore[arg-type]
        nontestability_depth=depth,
    )
    if args.format == "json":
        _write_text(args.output, json.dumps(result.to_json_dict()))
    else:
        _write_text(args.output, result.to_csv_text())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "replicate": cmd_replicate,
        "feasibility": cmd_feasibility,
        "test": cmd_test,
        "simulate": cmd_simulate,
    }
    try:
        return handlers[args.command](args)
    except NonAtomicityError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, IVTestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
