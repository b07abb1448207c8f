"""Quadratic-order analyses.

Covers the quadratic term of the conditional variance (C), the quadratic
term of the conditional mean (A), the safety of inflating the prior when
those terms are present, and the bound on the posterior-mean shift that the
inflation can cause.  Whitened forms use ``D = W^{-T} C W^{-1}`` and
``B = W^{-T} A W^{-1}``.
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import matcore
from .blockmodel import block_whitening, covariance_of, n_params, whiten
from .errors import BoundViolation, MissingQuadraticMean, ShapeError

CONSISTENCY_RTOL = 1e-9
SAFETY_MARGIN = 1e-9


def _close(x, y, scale, rtol=CONSISTENCY_RTOL):
    return abs(x - y) <= rtol * max(1.0, abs(scale))


def _conform(m, n, name):
    m = np.asarray(m, dtype=float)
    if m.shape != (n, n):
        raise ShapeError(f"{name} has shape {m.shape}, expected {(n, n)}")
    return m


def _whitened(m, view, blocks):
    if view is not None:
        w_inv = np.linalg.inv(view.W)
    else:
        _, w_inv = block_whitening(blocks)
    return whiten(m, w_inv)


def intrinsic_quadratic_shift(c, completion, view):
    """``Tr[C S]``, cross-checked against the whitened ``Tr[D S_W]``."""
    sigma = covariance_of(completion)
    c = _conform(c, len(sigma), "quad_var")
    value = matcore.trace_product(c, sigma)
    d = _whitened(c, view, None)
    sigma_w = view.W @ sigma @ view.W.T
    check = matcore.trace_product(d, sigma_w)
    if not _close(value, check, max(abs(value), abs(check))):
        raise BoundViolation(f"Tr[C S] = {value!r} but Tr[D S_W] = {check!r}")
    return value


class SafetyReason(str, enum.Enum):
    PSD_C = "PsdC"
    EIGENVALUE_CONDITION = "EigenvalueCondition"
    UNSAFE = "Unsafe"


@dataclass(frozen=True)
class SafetyReport:
    """Range of ``Tr[D S_W]`` over completions versus the inflated-prior value."""

    lower: float
    upper: float
    inflated: float
    lambda_min: float
    lambda_max: float
    safe: bool
    reason: SafetyReason


def intrinsic_safety(c, blocks, rel_tol=matcore.DEFAULT_REL_TOL):
    """Is inflating the prior safe for the quadratic intrinsic-variance term?

    Safe when C is PSD, or when ``lambda_D,max <= n_B * lambda_D,min``.  The
    eigenvalue comparison is biased toward "unsafe" by a relative margin so
    roundoff never produces a safe verdict.
    """
    blocks = list(blocks)
    n_i, n_b = n_params(blocks), len(blocks)
    c = _conform(c, n_i, "quad_var")
    d = _whitened(c, None, blocks)
    lo, hi = matcore.eigen_extrema(d)
    inflated = n_b * float(np.trace(d))
    if matcore.is_psd(d, rel_tol):
        reason = SafetyReason.PSD_C
    elif hi <= n_b * lo - SAFETY_MARGIN * max(1.0, abs(hi), abs(n_b * lo)):
        reason = SafetyReason.EIGENVALUE_CONDITION
    else:
        reason = SafetyReason.UNSAFE
    return SafetyReport(
        lower=n_i * lo,
        upper=n_i * hi,
        inflated=inflated,
        lambda_min=lo,
        lambda_max=hi,
        safe=reason is not SafetyReason.UNSAFE,
        reason=reason,
    )


def extrinsic_quadratic_variance(scenario, completion):
    """``2 Tr[A S A S] + a^T S a``, the variance of a quadratic conditional mean.

    Exact only for a Gaussian prior on the nuisance parameters.
    """
    if scenario.quad_mean is None:
        raise MissingQuadraticMean("scenario has no quad_mean")
    sigma = _conform(covariance_of(completion), scenario.n_params, "completion")
    a, A = scenario.gradient, scenario.quad_mean
    asig = A @ sigma
    value = 2.0 * matcore.trace_product(asig, asig) + float(a @ sigma @ a)

    W, w_inv = block_whitening(scenario.blocks)
    B = whiten(A, w_inv)
    b = w_inv.T @ a
    s_w = W @ sigma @ W.T
    bs = B @ s_w
    check = 2.0 * matcore.trace_product(bs, bs) + float(b @ s_w @ b)
    if not _close(value, check, max(value, check)):
        raise BoundViolation(f"unwhitened {value!r} != whitened {check!r}")
    return value


def quadratic_extrinsic_bound(a_quad, blocks):
    """``2 n_B^2 Tr[B^2]``: quadratic-mean variance under the inflated prior,
    which dominates every completion's ``2 Tr[B S_W B S_W]``."""
    blocks = list(blocks)
    _, w_inv = block_whitening(blocks)
    B = whiten(_conform(a_quad, len(w_inv), "quad_mean"), w_inv)
    return 2.0 * len(blocks) ** 2 * matcore.trace_product(B, B)


def mean_shift(a_quad, completion, view=None):
    """``Tr[A S]``, the shift of the posterior mean from the quadratic term."""
    sigma = covariance_of(completion)
    a_quad = _conform(a_quad, len(sigma), "quad_mean")
    value = matcore.trace_product(a_quad, sigma)
    if view is not None:
        B = _whitened(a_quad, view, None)
        check = matcore.trace_product(B, view.W @ sigma @ view.W.T)
        if not _close(value, check, max(abs(value), abs(check))):
            raise BoundViolation(f"Tr[A S] = {value!r} but Tr[B S_W] = {check!r}")
    return value


@dataclass(frozen=True)
class BiasReport:
    delta_mu: float
    comparison_scale: Optional[float] = None

    @property
    def relative(self):
        """``delta_mu`` in units of ``comparison_scale``, if one was given."""
        if self.comparison_scale is None or self.comparison_scale == 0:
            return None
        return self.delta_mu / self.comparison_scale


def max_bias(a_quad, blocks, posterior_sd=None):
    """Largest possible mean shift between the inflated prior and any completion.

    ``Tr[B S_W]`` ranges within ``n_i * [lambda_B,min, lambda_B,max]`` while the
    inflated prior gives ``n_B Tr[B]``; the bound is the larger endpoint gap.
    """
    blocks = list(blocks)
    n_i, n_b = n_params(blocks), len(blocks)
    _, w_inv = block_whitening(blocks)
    B = whiten(_conform(a_quad, n_i, "quad_mean"), w_inv)
    lo, hi = matcore.eigen_extrema(B)
    inflated = n_b * float(np.trace(B))
    delta = max(abs(inflated - hi * n_i), abs(inflated - lo * n_i))
    scale = None if posterior_sd is None else float(posterior_sd)
    return BiasReport(delta_mu=delta, comparison_scale=scale)
