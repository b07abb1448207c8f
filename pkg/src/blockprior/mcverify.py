"""Monte Carlo check of the total-variance formulas.

The posterior of the nuisance parameters is taken to be the Gaussian prior
itself.  Draws are made in fixed-size chunks, each with its own counter-based
substream keyed by ``(seed, chunk_index)``, and chunk moments are merged in
chunk order, so the result is bit-identical for any number of workers.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import matcore
from ._rng import substream
from .blockmodel import covariance_of, joint_from_whitened, sample_whitened
from .bounds import conservative_prior
from .errors import InvalidCompletion, NegativeConditionalVariance, ShapeError
from .higher import SafetyReport, intrinsic_safety

CHUNK_SIZE = 1 << 16


@dataclass(frozen=True)
class SimResult:
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    n_samples: int
    seed: int


@dataclass(frozen=True)
class _Moments:
    n: int
    mean: float
    m2: float
    m3: float
    m4: float

    @classmethod
    def of(cls, x):
        mu = float(x.mean())
        d = x - mu
        d2 = d * d
        return cls(len(x), mu, float(d2.sum()), float((d2 * d).sum()), float((d2 * d2).sum()))

    def merge(self, other):
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d_n = delta / n
        m2 = self.m2 + other.m2 + delta * d_n * na * nb
        m3 = (
            self.m3
            + other.m3
            + delta * d_n * d_n * na * nb * (na - nb)
            + 3.0 * d_n * (na * other.m2 - nb * self.m2)
        )
        m4 = (
            self.m4
            + other.m4
            + delta * d_n**3 * na * nb * (na * na - na * nb + nb * nb)
            + 6.0 * d_n * d_n * (na * na * other.m2 + nb * nb * self.m2)
            + 4.0 * d_n * (na * other.m3 - nb * self.m3)
        )
        return _Moments(n, self.mean + d_n * nb, m2, m3, m4)


def _factor(sigma, rel_tol=matcore.DEFAULT_REL_TOL):
    """``L`` with ``L L^T = sigma``; tolerates rank-deficient PSD input."""
    w, v = np.linalg.eigh(sigma)
    if w[0] < -rel_tol * max(1.0, abs(w[-1])):
        raise InvalidCompletion(f"covariance is not PSD (smallest eigenvalue {w[0]:.6g})")
    return v * np.sqrt(np.clip(w, 0.0, None))


def _draw_chunk(scenario, factor, seed, index, size):
    rng = substream(seed, index)
    n = scenario.n_params
    delta = rng.standard_normal((size, n)) @ factor.T
    mean = scenario.theta0 + delta @ scenario.gradient
    if scenario.quad_mean is not None:
        mean = mean + np.einsum("ki,ij,kj->k", delta, scenario.quad_mean, delta)
    var = np.full(size, scenario.intrinsic_variance)
    if scenario.quad_var is not None:
        var = var + np.einsum("ki,ij,kj->k", delta, scenario.quad_var, delta)
    neg = np.flatnonzero(var < 0)
    if len(neg):
        k = neg[0]
        raise NegativeConditionalVariance(scenario.phi0 + delta[k], var[k])
    theta = mean + np.sqrt(var) * rng.standard_normal(size)
    return _Moments.of(theta)


def simulate(scenario, completion, n_samples, seed, n_workers=1):
    """Sample the parameter of interest under a Gaussian nuisance prior.

    Draws ``phi ~ N(phi0, S)``, then ``theta ~ N(m(phi), s2(phi))`` with the
    scenario's linear/quadratic mean and quadratic conditional variance, and
    returns moment estimates with standard errors.  The variance SE uses the
    sample fourth central moment.

    Raises
    ------
    NegativeConditionalVariance
        If a draw lands where ``s2(phi) < 0``.  Never clamped.
    InvalidCompletion
        If ``completion`` is not PSD.
    """
    n_samples = int(n_samples)
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    sigma = covariance_of(completion)
    if sigma.shape != (scenario.n_params,) * 2:
        raise ShapeError(f"completion has shape {sigma.shape}")
    factor = _factor(sigma)
    sizes = [CHUNK_SIZE] * (n_samples // CHUNK_SIZE)
    if n_samples % CHUNK_SIZE:
        sizes.append(n_samples % CHUNK_SIZE)

    def run(i):
        return _draw_chunk(scenario, factor, seed, i, sizes[i])

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)

    n = total.n
    var = total.m2 / (n - 1)
    m2, m4 = total.m2 / n, total.m4 / n
    var_of_var = max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n
    return SimResult(
        mean=total.mean,
        variance=var,
        se_mean=float(np.sqrt(var / n)),
        se_variance=float(np.sqrt(var_of_var)),
        n_samples=n,
        seed=int(seed),
    )


def analytic_total_variance(scenario, completion):
    """Intrinsic + quadratic-intrinsic + linear + quadratic extrinsic variance."""
    sigma = covariance_of(completion)
    if sigma.shape != (scenario.n_params,) * 2:
        raise ShapeError(f"completion has shape {sigma.shape}")
    a = scenario.gradient
    total = scenario.intrinsic_variance + float(a @ sigma @ a)
    if scenario.quad_var is not None:
        total += matcore.trace_product(scenario.quad_var, sigma)
    if scenario.quad_mean is not None:
        asig = scenario.quad_mean @ sigma
        total += 2.0 * matcore.trace_product(asig, asig)
    return total


def analytic_mean(scenario, completion):
    sigma = covariance_of(completion)
    mean = scenario.theta0
    if scenario.quad_mean is not None:
        mean += matcore.trace_product(scenario.quad_mean, sigma)
    return mean


@dataclass(frozen=True)
class ConservativeCheck:
    inflated_variance: float
    max_completion_variance: float
    min_margin: float
    n_completions: int
    violations: tuple
    safety: Optional[SafetyReport] = None
    simulation: Optional[SimResult] = None

    @property
    def n_violations(self):
        return len(self.violations)


def verify_conservative(scenario, n_completions, n_samples, seed, rel_slack=1e-9):
    """Compare the inflated-prior total variance with sampled completions.

    Violations are reported, not raised; they can only occur when the
    quadratic intrinsic term is flagged unsafe.  With ``n_samples > 0`` the
    inflated prior is also simulated.
    """
    prior = conservative_prior(scenario.blocks)
    inflated = analytic_total_variance(scenario, prior)
    joints = joint_from_whitened(
        scenario.blocks, sample_whitened(scenario.blocks, n_completions, seed, 0)
    )
    values = np.array([analytic_total_variance(scenario, j) for j in joints])
    margins = inflated - values
    tol = rel_slack * max(1.0, abs(inflated))
    violations = tuple(int(k) for k in np.flatnonzero(margins < -tol))
    safety = None
    if scenario.quad_var is not None:
        safety = intrinsic_safety(scenario.quad_var, scenario.blocks)
    sim = simulate(scenario, prior, n_samples, seed) if n_samples > 0 else None
    return ConservativeCheck(
        inflated_variance=inflated,
        max_completion_variance=float(values.max()) if len(values) else float("nan"),
        min_margin=float(margins.min()) if len(margins) else float("nan"),
        n_completions=int(n_completions),
        violations=violations,
        safety=safety,
        simulation=sim,
    )
