"""Linear-order bounds: extrinsic variance, its worst case over all
completions, and the inflated conservative prior."""

from dataclasses import dataclass

import numpy as np

from .blockmodel import (
    Completion,
    assemble_uncorrelated,
    block_slices,
    block_whitening,
    completion_from_whitened,
    covariance_of,
)
from .errors import BoundViolation, ShapeError

REL_SLACK = 1e-9


def extrinsic_variance(a, sigma):
    """``a^T sigma a``: variance of the linearized conditional mean."""
    a = np.asarray(a, dtype=float)
    sigma = covariance_of(sigma)
    if a.ndim != 1 or sigma.shape != (len(a), len(a)):
        raise ShapeError(f"gradient of length {a.shape} does not conform to matrix {sigma.shape}")
    return float(a @ sigma @ a)


@dataclass(frozen=True)
class WorstCase:
    value: float
    alpha: float
    achieving_completion: Completion
    block_norms: np.ndarray
    degenerate_gradient: bool = False


def worst_case_whitened(b, blocks):
    """Rank-structured whitened completion maximizing ``b^T S b``.

    Cross block ``(i, j)`` is ``u_i u_j^T`` with ``u_i = b_i / |b_i|``; blocks
    with a zero gradient slice get zero cross terms.  Equivalently
    ``S = I - P + v v^T`` where ``P`` projects block-wise onto ``u_i`` and ``v``
    stacks the ``u_i``, which is PSD by construction.
    """
    slices = block_slices(blocks)
    n = slices[-1].stop
    v = np.zeros(n)
    norms = np.array([np.linalg.norm(b[s]) for s in slices])
    for s, nrm in zip(slices, norms):
        if nrm > 0:
            v[s] = b[s] / nrm
    s_w = np.outer(v, v)
    for s in slices:
        s_w[s, s] = np.eye(s.stop - s.start)
    return s_w, norms


def worst_case(a, blocks):
    """Largest extrinsic variance over every completion of ``blocks``.

    The maximum is ``(sum_i |b_i|)^2`` where ``b_i`` is the whitened gradient
    restricted to block ``i``.  ``alpha`` is that maximum over the uncorrelated
    value; a zero gradient gives ``alpha = 1`` and ``degenerate_gradient``.
    """
    blocks = list(blocks)
    _, w_inv = block_whitening(blocks)
    a = np.asarray(a, dtype=float)
    if a.shape != (w_inv.shape[0],):
        raise ShapeError(f"gradient has shape {a.shape}, expected ({w_inv.shape[0]},)")
    b = w_inv.T @ a
    s_w, norms = worst_case_whitened(b, blocks)
    value = float(norms.sum() ** 2)
    base = float(norms @ norms)
    degenerate = base == 0.0
    alpha = 1.0 if degenerate else value / base
    return WorstCase(
        value=value,
        alpha=alpha,
        achieving_completion=completion_from_whitened(blocks, s_w),
        block_norms=norms,
        degenerate_gradient=degenerate,
    )


def conservative_prior(blocks):
    """Uncorrelated block-diagonal prior scaled by the number of blocks."""
    blocks = list(blocks)
    return len(blocks) * assemble_uncorrelated(blocks)


@dataclass(frozen=True)
class LimitReport:
    """Per-completion extrinsic variances and whitened top eigenvalues."""

    baseline: float
    n_blocks: int
    extrinsic: np.ndarray
    lambda_w_max: np.ndarray

    @property
    def ratios(self):
        if self.baseline == 0.0:
            return np.ones_like(self.extrinsic)
        return self.extrinsic / self.baseline

    @property
    def max_ratio(self):
        return float(self.ratios.max()) if len(self.extrinsic) else float("nan")


def _stack(blocks, completions):
    if isinstance(completions, np.ndarray):
        joints = completions
    else:
        joints = np.array([covariance_of(c) for c in completions])
    if joints.ndim == 2:
        joints = joints[None]
    return joints


def check_limit(a, blocks, completions, rel_slack=REL_SLACK):
    """Verify ``a^T S a <= lambda_W,max * a^T S0 a <= n_B * a^T S0 a``.

    ``completions`` is a sequence of :class:`Completion` (or joint matrices)
    or a stacked array of joint covariances.

    Raises
    ------
    BoundViolation
        On the first completion breaking either inequality beyond
        ``rel_slack``.  This indicates a numerical bug, not bad input.
    """
    blocks = list(blocks)
    a = np.asarray(a, dtype=float)
    W, _ = block_whitening(blocks)
    joints = _stack(blocks, completions)
    baseline = float(a @ assemble_uncorrelated(blocks) @ a)
    ext = np.einsum("i,mij,j->m", a, joints, a)
    s_w = W @ joints @ W.T
    lam = np.linalg.eigvalsh(0.5 * (s_w + np.swapaxes(s_w, -1, -2)))[:, -1]
    n_b = len(blocks)
    slack = rel_slack * max(baseline, 1e-300) * n_b
    first = ext > lam * baseline + slack
    second = lam * baseline > n_b * baseline + slack
    bad = np.flatnonzero(first | second)
    if len(bad):
        k = int(bad[0])
        raise BoundViolation(
            f"completion {k}: extrinsic {ext[k]:.17g}, lambda_W,max {lam[k]:.17g}, "
            f"uncorrelated {baseline:.17g}, n_B {n_b}",
            index=k,
            completion=joints[k],
        )
    return LimitReport(baseline=baseline, n_blocks=n_b, extrinsic=ext, lambda_w_max=lam)
