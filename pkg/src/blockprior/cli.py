"""Command-line front end.

Exit codes: 0 safe, 1 computed but unsafe, 2 invalid input, 3 I/O failure.
"""

import argparse
import json
import sys

from . import matcore
from .blockmodel import BlockSpec, Scenario
from .errors import BlockPriorError, NotPositiveDefinite, ScenarioError
from .report import build_report, to_json, to_text

EXIT_SAFE, EXIT_UNSAFE, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3

REQUIRED_KEYS = ("blocks", "gradient")
OPTIONAL_KEYS = (
    "quad_mean",
    "quad_var",
    "intrinsic_variance",
    "phi0",
    "phi0_prime",
    "theta0",
)


def parse_scenario(data, rel_tol=matcore.DEFAULT_REL_TOL):
    """Build a :class:`Scenario` from decoded scenario JSON.

    Raises :class:`ScenarioError` whose ``field`` addresses the bad entry,
    e.g. ``blocks[1].covariance``.
    """
    if not isinstance(data, dict):
        raise ScenarioError("top level must be an object")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ScenarioError("missing required key", field=key)
    unknown = set(data) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS)
    if unknown:
        raise ScenarioError(f"unknown keys {sorted(unknown)}")
    raw_blocks = data["blocks"]
    if not isinstance(raw_blocks, list) or not raw_blocks:
        raise ScenarioError("must be a non-empty list", field="blocks")
    blocks = []
    for i, raw in enumerate(raw_blocks):
        where = f"blocks[{i}]"
        if not isinstance(raw, dict):
            raise ScenarioError("must be an object", field=where)
        for key in ("name", "labels", "covariance"):
            if key not in raw:
                raise ScenarioError("missing required key", field=f"{where}.{key}")
        if not isinstance(raw["labels"], list):
            raise ScenarioError("must be a list of strings", field=f"{where}.labels")
        try:
            blocks.append(BlockSpec(str(raw["name"]), raw["labels"], raw["covariance"], rel_tol))
        except NotPositiveDefinite as exc:
            raise ScenarioError(str(exc), field=f"{where}.covariance") from None
        except ScenarioError as exc:
            raise ScenarioError(str(exc), field=where) from None
    kwargs = {k: data[k] for k in OPTIONAL_KEYS if data.get(k) is not None}
    for key in ("intrinsic_variance", "theta0"):
        if key in kwargs and not isinstance(kwargs[key], (int, float)):
            raise ScenarioError("must be a number", field=key)
    return Scenario(blocks=blocks, gradient=data["gradient"], **kwargs)


def load_scenario(path, rel_tol=matcore.DEFAULT_REL_TOL):
    """Read and parse a scenario file; OSError propagates for I/O failures."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})")
    return parse_scenario(data, rel_tol)


def _load_or_exit(path, rel_tol):
    try:
        return load_scenario(path, rel_tol), None
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror or exc}", file=sys.stderr)
        return None, EXIT_IO
    except (BlockPriorError, ValueError) as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return None, EXIT_INVALID


def cmd_validate(args):
    scenario, code = _load_or_exit(args.path, args.tolerance)
    if scenario is None:
        return code
    print(
        f"ok: {scenario.n_blocks} blocks, {scenario.n_params} parameters",
        file=sys.stderr,
    )
    return EXIT_SAFE


def cmd_report(args):
    scenario, code = _load_or_exit(args.path, args.tolerance)
    if scenario is None:
        return code
    try:
        report = build_report(
            scenario,
            completions=args.completions,
            mc=args.mc,
            seed=args.seed,
            rel_tol=args.tolerance,
        )
    except (BlockPriorError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = to_text(report) if args.format == "text" else to_json(report) + "\n"
    sys.stdout.write(out)
    return EXIT_UNSAFE if report["verdict"] == "unsafe" else EXIT_SAFE


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockprior",
        description="Conservative priors for nuisance-parameter blocks with unknown cross-correlations.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("path", help="scenario JSON file")
    common.add_argument(
        "--tolerance",
        type=float,
        default=matcore.DEFAULT_REL_TOL,
        help="relative eigenvalue tolerance for PSD/PD checks (default %(default)g)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", parents=[common], help="check a scenario file")
    p_val.set_defaults(func=cmd_validate)

    p_rep = sub.add_parser("report", parents=[common], help="compute all bounds")
    p_rep.add_argument("--mc", type=_nonneg_int, default=0, metavar="N",
                       help="Monte Carlo samples under the inflated prior")
    p_rep.add_argument("--seed", type=_nonneg_int, default=0, metavar="S")
    p_rep.add_argument("--completions", type=_nonneg_int, default=0, metavar="K",
                       help="random completions to check against the inflated prior")
    fmt = p_rep.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--text", dest="format", action="store_const", const="text")
    p_rep.set_defaults(func=cmd_report, format="json")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_SAFE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
