"""Scenario data model, joint-covariance assembly and completion sampling.

A *completion* is any joint covariance whose diagonal blocks are the known
per-experiment covariances and whose off-diagonal (cross-block) entries are
chosen so the whole matrix stays positive semi-definite.  In whitened
coordinates a completion is a PSD matrix with identity diagonal blocks.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from . import matcore
from ._rng import substream
from .errors import (
    InvalidMatrix,
    NotPositiveDefinite,
    NotPSD,
    SamplingFailure,
    ScenarioError,
    ShapeError,
)

MAX_SAMPLING_ATTEMPTS = 100


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BlockSpec:
    """One experiment's nuisance parameters and their known covariance."""

    name: str
    labels: tuple
    covariance: np.ndarray
    rel_tol: float = field(default=matcore.DEFAULT_REL_TOL, repr=False, compare=False)

    def __post_init__(self):
        try:
            cov = matcore.sym(self.covariance, name=f"block {self.name!r} covariance")
        except InvalidMatrix as exc:
            raise ScenarioError(str(exc), field=self.name) from None
        labels = tuple(str(lab) for lab in self.labels)
        if len(labels) != len(cov):
            raise ScenarioError(
                f"{len(labels)} labels for a {len(cov)}x{len(cov)} covariance", field=self.name
            )
        if len(set(labels)) != len(labels):
            raise ScenarioError("labels are not unique", field=self.name)
        try:
            w = matcore.whitening_factor(cov, self.rel_tol)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(exc.lambda_min, block=self.name) from None
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "covariance", _frozen(cov))
        # cached per block: whitening W_i and its inverse, the Cholesky factor
        object.__setattr__(self, "whitening", _frozen(w))
        object.__setattr__(self, "cholesky", _frozen(np.linalg.cholesky(cov)))

    @property
    def dim(self):
        return len(self.labels)

    @classmethod
    def scalar(cls, name, variance, label=None):
        return cls(name, (label or name,), [[variance]])


def block_slices(blocks):
    out, start = [], 0
    for blk in blocks:
        out.append(slice(start, start + blk.dim))
        start += blk.dim
    return out


def n_params(blocks):
    return sum(blk.dim for blk in blocks)


def _check_blocks(blocks):
    blocks = list(blocks)
    if not blocks:
        raise ScenarioError("at least one block is required", field="blocks")
    return blocks


@dataclass(frozen=True)
class Scenario:
    """Full problem statement.

    ``gradient`` is the linear sensitivity of the conditional mean of the
    parameter of interest to the nuisance parameters.  ``quad_mean`` (A) and
    ``quad_var`` (C) are the optional quadratic terms of the conditional mean
    and conditional variance, both expanded around ``phi0``.
    """

    blocks: tuple
    gradient: np.ndarray
    quad_mean: Optional[np.ndarray] = None
    quad_var: Optional[np.ndarray] = None
    intrinsic_variance: float = 0.0
    phi0: Optional[np.ndarray] = None
    phi0_prime: Optional[np.ndarray] = None
    theta0: float = 0.0

    def __post_init__(self):
        blocks = tuple(_check_blocks(self.blocks))
        n = n_params(blocks)
        seen = set()
        for blk in blocks:
            if blk.name in seen:
                raise ScenarioError(f"duplicate block name {blk.name!r}", field="blocks")
            seen.add(blk.name)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "gradient", _vector(self.gradient, n, "gradient"))
        phi0 = np.zeros(n) if self.phi0 is None else self.phi0
        object.__setattr__(self, "phi0", _vector(phi0, n, "phi0"))
        for key in ("quad_mean", "quad_var"):
            m = getattr(self, key)
            if m is not None:
                try:
                    m = matcore.sym(m, name=key)
                except InvalidMatrix as exc:
                    raise ScenarioError(str(exc), field=key) from None
                if len(m) != n:
                    raise ScenarioError(f"expected {n}x{n}, got {m.shape[0]}x{m.shape[1]}", field=key)
                object.__setattr__(self, key, _frozen(m))
        s2 = float(self.intrinsic_variance)
        if not np.isfinite(s2) or s2 < 0:
            raise ScenarioError("must be a finite nonnegative number", field="intrinsic_variance")
        object.__setattr__(self, "intrinsic_variance", s2)
        t0 = float(self.theta0)
        if not np.isfinite(t0):
            raise ScenarioError("must be finite", field="theta0")
        object.__setattr__(self, "theta0", t0)
        if self.phi0_prime is not None:
            pp = _vector(self.phi0_prime, n, "phi0_prime")
            object.__setattr__(self, "phi0_prime", pp)
            if self.quad_mean is not None:
                implied = 2.0 * self.quad_mean @ (self.phi0 - pp)
                tol = 1e-9 * max(1.0, float(np.max(np.abs(self.gradient))))
                if np.max(np.abs(implied - self.gradient)) > tol:
                    raise ScenarioError(
                        "gradient != 2 * quad_mean @ (phi0 - phi0_prime)", field="phi0_prime"
                    )

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def n_params(self):
        return n_params(self.blocks)

    @property
    def labels(self):
        return [lab for blk in self.blocks for lab in blk.labels]

    def vertex(self):
        """Vertex of the quadratic mean response, or None if unavailable.

        Uses ``phi0_prime`` when given; otherwise solves
        ``gradient = 2 A (phi0 - phi0_prime)``, which needs an invertible A.
        """
        if self.phi0_prime is not None:
            return self.phi0_prime
        if self.quad_mean is None:
            return None
        w = np.abs(np.linalg.eigvalsh(self.quad_mean))
        if w.min() <= 1e-12 * max(w.max(), 1e-300):
            return None
        return self.phi0 - 0.5 * np.linalg.solve(self.quad_mean, self.gradient)


def _vector(v, n, name):
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError("not a numeric vector", field=name) from None
    if arr.ndim != 1 or len(arr) != n:
        raise ScenarioError(f"expected a vector of length {n}, got shape {arr.shape}", field=name)
    if not np.all(np.isfinite(arr)):
        raise ScenarioError("non-finite entries", field=name)
    return _frozen(arr)


@dataclass(frozen=True)
class Completion:
    """A joint covariance consistent with the known diagonal blocks."""

    joint: np.ndarray
    cross_blocks: dict = field(compare=False)
    sigma_w: Optional[np.ndarray] = field(default=None, compare=False)


@dataclass(frozen=True)
class WhitenedView:
    W: np.ndarray
    b: np.ndarray
    sigma_w: np.ndarray
    B: Optional[np.ndarray] = None
    D: Optional[np.ndarray] = None


def assemble_uncorrelated(blocks):
    """Block-diagonal joint covariance with all cross blocks exactly zero."""
    blocks = _check_blocks(blocks)
    return block_diag(*[blk.covariance for blk in blocks])


def _cross_blocks(blocks, joint):
    sl = block_slices(blocks)
    return {
        (i, j): joint[sl[i], sl[j]].copy()
        for i in range(len(blocks))
        for j in range(i + 1, len(blocks))
    }


def assemble_with_cross(blocks, cross, rel_tol=matcore.DEFAULT_REL_TOL):
    """Joint covariance from known blocks plus explicit cross blocks.

    ``cross`` maps ``(i, j)`` to a ``dim_i x dim_j`` array; ``(j, i)`` keys are
    accepted and transposed.  Missing pairs are zero.

    Raises
    ------
    ShapeError
        If a cross block has the wrong shape or refers to a missing block.
    NotPSD
        If the assembled matrix has a negative eigenvalue beyond tolerance.
    """
    blocks = _check_blocks(blocks)
    sl = block_slices(blocks)
    joint = assemble_uncorrelated(blocks)
    for (i, j), c in cross.items():
        if not (0 <= i < len(blocks) and 0 <= j < len(blocks)) or i == j:
            raise ShapeError(f"invalid cross-block index ({i}, {j})")
        c = np.atleast_2d(np.asarray(c, dtype=float))
        if i > j:
            i, j, c = j, i, c.T
        if c.shape != (blocks[i].dim, blocks[j].dim):
            raise ShapeError(
                f"cross block ({i}, {j}) has shape {c.shape}, "
                f"expected {(blocks[i].dim, blocks[j].dim)}"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidMatrix(f"cross block ({i}, {j}) has non-finite entries")
        joint[sl[i], sl[j]] = c
        joint[sl[j], sl[i]] = c.T
    if not matcore.is_psd(joint, rel_tol):
        raise NotPSD(matcore.eigen_extrema(joint)[0])
    joint = _frozen(joint)
    return Completion(joint, _cross_blocks(blocks, joint))


def block_whitening(blocks):
    """Block-diagonal whitening ``W`` and its inverse (the block Cholesky factor)."""
    blocks = _check_blocks(blocks)
    return (
        block_diag(*[blk.whitening for blk in blocks]),
        block_diag(*[blk.cholesky for blk in blocks]),
    )


def whiten(m, w_inv):
    """``W^{-T} m W^{-1}`` for a symmetric ``m`` given ``W^{-1}``."""
    out = w_inv.T @ m @ w_inv
    return 0.5 * (out + out.T)


def block_whiten(scenario, completion=None):
    """Whitened quantities for ``scenario`` under ``completion``.

    Without a completion the uncorrelated joint is used and ``sigma_w`` is the
    identity.
    """
    W, w_inv = block_whitening(scenario.blocks)
    n = scenario.n_params
    if completion is None:
        sigma_w = np.eye(n)
    else:
        joint = completion.joint if isinstance(completion, Completion) else np.asarray(completion)
        if joint.shape != (n, n):
            raise ShapeError(f"completion has shape {joint.shape}, expected {(n, n)}")
        sigma_w = W @ joint @ W.T
        sigma_w = 0.5 * (sigma_w + sigma_w.T)
    b = w_inv.T @ scenario.gradient
    B = None if scenario.quad_mean is None else whiten(scenario.quad_mean, w_inv)
    D = None if scenario.quad_var is None else whiten(scenario.quad_var, w_inv)
    return WhitenedView(W=W, b=b, sigma_w=sigma_w, B=B, D=D)


def _rewhiten_block(g):
    """Rows of each ``g[k]`` mapped so that ``g[k] @ g[k].T == I``.

    Returns the transformed stack and a mask of draws whose block Gram matrix
    was numerically singular.
    """
    gram = g @ np.swapaxes(g, -1, -2)
    w = np.linalg.eigvalsh(gram)
    bad = w[:, 0] <= 1e-10 * w[:, -1]
    gram[bad] = np.eye(gram.shape[-1])
    chol = np.linalg.cholesky(gram)
    return np.linalg.solve(chol, g), bad


def sample_whitened(blocks, n, seed, stream_index=0, rank=None):
    """Draw ``n`` whitened completions as an array of shape ``(n, n_i, n_i)``.

    Each draw is ``G @ G.T`` for a Gaussian ``n_i x rank`` factor ``G`` whose
    per-block row groups are re-whitened to orthonormal rows, so diagonal
    blocks are exactly the identity.  Small ``rank`` pushes draws onto the
    boundary of the completion set.
    """
    blocks = _check_blocks(blocks)
    dims = [blk.dim for blk in blocks]
    ni = sum(dims)
    rank = ni if rank is None else int(rank)
    if rank < max(dims):
        raise ValueError(f"rank {rank} is smaller than the largest block dimension {max(dims)}")
    if len(blocks) == 1:
        return np.broadcast_to(np.eye(ni), (n, ni, ni)).copy()
    rng = substream(seed, stream_index)
    g = rng.standard_normal((n, ni, rank))
    for s in block_slices(blocks):
        pending = np.arange(n)
        for _ in range(MAX_SAMPLING_ATTEMPTS):
            fixed, bad = _rewhiten_block(g[pending, s, :])
            g[pending, s, :] = fixed
            pending = pending[bad]
            if len(pending) == 0:
                break
            g[pending, s, :] = rng.standard_normal((len(pending), s.stop - s.start, rank))
        else:
            raise SamplingFailure(
                f"block Gram matrix stayed singular after {MAX_SAMPLING_ATTEMPTS} attempts"
            )
    sigma_w = g @ np.swapaxes(g, -1, -2)
    for s in block_slices(blocks):
        sigma_w[:, s, s] = np.eye(s.stop - s.start)
    return sigma_w


def joint_from_whitened(blocks, sigma_w):
    """Map whitened completions (single or stacked) back to parameter space."""
    blocks = _check_blocks(blocks)
    _, w_inv = block_whitening(blocks)
    joint = w_inv @ sigma_w @ w_inv.T
    joint = 0.5 * (joint + np.swapaxes(joint, -1, -2))
    for blk, s in zip(blocks, block_slices(blocks)):
        joint[..., s, s] = blk.covariance
    return joint


def completion_from_whitened(blocks, sigma_w):
    blocks = _check_blocks(blocks)
    joint = _frozen(joint_from_whitened(blocks, sigma_w))
    return Completion(joint, _cross_blocks(blocks, joint), _frozen(sigma_w))


def sample_completion(blocks, rng_seed, stream_index=0, rank=None):
    """One random valid completion, deterministic in ``(rng_seed, stream_index)``."""
    blocks = _check_blocks(blocks)
    sigma_w = sample_whitened(blocks, 1, rng_seed, stream_index, rank)[0]
    if len(blocks) == 1:
        joint = _frozen(assemble_uncorrelated(blocks))
        return Completion(joint, {}, _frozen(sigma_w))
    return completion_from_whitened(blocks, sigma_w)


def covariance_of(sigma):
    """Accept a Completion or a bare matrix and return the joint covariance."""
    return sigma.joint if isinstance(sigma, Completion) else np.asarray(sigma, dtype=float)
