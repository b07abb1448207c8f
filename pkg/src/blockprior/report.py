"""Report assembly and rendering (JSON and aligned text).

Both renderings share one number formatter so they carry identical values.
Floats are written with 17 significant digits, enough to round-trip any
double exactly.
"""

import json
import math

import numpy as np

from . import matcore
from .blockmodel import assemble_uncorrelated
from .bounds import conservative_prior, extrinsic_variance, worst_case
from .higher import intrinsic_safety, max_bias, quadratic_extrinsic_bound
from .mcverify import analytic_mean, analytic_total_variance, simulate, verify_conservative

SCHEMA_VERSION = 1


def build_report(scenario, completions=0, mc=0, seed=0, rel_tol=matcore.DEFAULT_REL_TOL):
    """Collect every bound for ``scenario`` into a plain, ordered dict."""
    blocks = scenario.blocks
    prior = conservative_prior(blocks)
    uncorrelated = assemble_uncorrelated(blocks)
    wc = worst_case(scenario.gradient, blocks)
    conservative_var = analytic_total_variance(scenario, prior)

    safety = None
    if scenario.quad_var is not None:
        s = intrinsic_safety(scenario.quad_var, blocks, rel_tol)
        safety = {
            "lower": s.lower,
            "upper": s.upper,
            "inflated": s.inflated,
            "lambda_min": s.lambda_min,
            "lambda_max": s.lambda_max,
            "safe": s.safe,
            "reason": s.reason.value,
        }

    quad_bound = bias = None
    if scenario.quad_mean is not None:
        quad_bound = quadratic_extrinsic_bound(scenario.quad_mean, blocks)
        br = max_bias(scenario.quad_mean, blocks, posterior_sd=math.sqrt(conservative_var))
        bias = {
            "delta_mu": br.delta_mu,
            "comparison_scale": br.comparison_scale,
            "relative": br.relative,
        }

    vertex = scenario.vertex()
    report = {
        "schema_version": SCHEMA_VERSION,
        "n_B": scenario.n_blocks,
        "n_i": scenario.n_params,
        "labels": scenario.labels,
        "alpha": wc.alpha,
        "worst_case_value": wc.value,
        "uncorrelated_extrinsic_variance": extrinsic_variance(scenario.gradient, uncorrelated),
        "conservative_extrinsic_variance": extrinsic_variance(scenario.gradient, prior),
        "conservative_total_variance": conservative_var,
        "conservative_mean": analytic_mean(scenario, prior),
        "conservative_prior": prior,
        "intrinsic_safety": safety,
        "quadratic_extrinsic_bound": quad_bound,
        "bias": bias,
        "phi0_prime": None if vertex is None else vertex,
        "flags": {
            "gaussian_prior_premise": scenario.quad_mean is not None or mc > 0,
            "posterior_equals_prior_premise": True,
            "degenerate_gradient": wc.degenerate_gradient,
            "intrinsic_unsafe": safety is not None and not safety["safe"],
            "completion_violations": False,
        },
        "completion_check": None,
        "simulation": None,
    }
    if completions > 0:
        chk = verify_conservative(scenario, completions, 0, seed)
        report["completion_check"] = {
            "n_completions": chk.n_completions,
            "seed": int(seed),
            "max_completion_variance": chk.max_completion_variance,
            "min_margin": chk.min_margin,
            "n_violations": chk.n_violations,
        }
        report["flags"]["completion_violations"] = chk.n_violations > 0
    if mc > 0:
        sim = simulate(scenario, prior, mc, seed)
        report["simulation"] = {
            "mean": sim.mean,
            "variance": sim.variance,
            "se_mean": sim.se_mean,
            "se_variance": sim.se_variance,
            "n_samples": sim.n_samples,
            "seed": sim.seed,
            "analytic_mean": analytic_mean(scenario, prior),
            "analytic_variance": conservative_var,
        }
    flags = report["flags"]
    report["verdict"] = (
        "unsafe" if flags["intrinsic_unsafe"] or flags["completion_violations"] else "safe"
    )
    return report


def fmt_number(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} in report")
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def to_json(obj, indent=2, _level=0):
    """Serialize ``obj`` deterministically with 17-significant-digit floats."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return _json_str(obj)
    if isinstance(obj, (bool, int, float, np.generic)):
        return fmt_number(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_str(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(_plain(v), (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(to_json(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_str(s):
    return json.dumps(s)


def _flatten(obj, prefix=""):
    obj = _plain(obj)
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, (list, tuple)) and obj and isinstance(_plain(obj[0]), (list, tuple)):
        for i, row in enumerate(obj):
            yield from _flatten(row, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def to_text(report):
    rows = []
    for key, value in _flatten(report):
        if value is None:
            text = "-"
        elif isinstance(value, str):
            text = value
        elif isinstance(value, (list, tuple)):
            text = "  ".join(v if isinstance(v, str) else fmt_number(v) for v in value)
        else:
            text = fmt_number(value)
        rows.append((key, text))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows) + "\n"
