"""Hierarchy-aware sensitivities and the hyperbolic Gaussian mechanism.

Sensitivities are measured in hyperbolic-norm units on a trained embedding
table: the inter-hierarchy term is the worst-case radius change under a
single-node substitution, the intra-hierarchy term applies the scalar ball
norm to the (clipped) pairwise angle. Noise is calibrated as

    sigma = c_const * sensitivity * gamma_bound / epsilon,
    c_const = max(3/2, sqrt(2 ln(1.25 * gamma_bound / delta))),

with gamma_bound = 1, the supremum of the wrapped-density correction, which
never under-noises. Samples are wrapped Gaussians: v ~ N(0, sigma^2 I) in
coordinates, pushed through exp_mu(v / lambda_mu). The density is taken
with respect to the hyperbolic volume measure; the Monte-Carlo
normalization test in the suite integrates density * lambda_z^n over ball
coordinates and confirms this convention.

All noise draws take an explicit numpy Generator. Parallel users must
split streams via ``np.random.SeedSequence(master).spawn(k)``, one child
per worker, so results are reproducible for a fixed master seed and worker
count.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo

DEFAULT_CLIP_TAU = 1e-3


@dataclass
class SensitivityPair:
    delta_r: float
    delta_alpha: float

    def __post_init__(self):
        if not (np.isfinite(self.delta_r) and np.isfinite(self.delta_alpha)):
            raise ValueError("sensitivities must be finite")
        if self.delta_r < 0 or self.delta_alpha < 0:
            raise ValueError("sensitivities must be nonnegative")


@dataclass
class PrivacyBudget:
    epsilon: float
    delta: float
    beta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")

    @property
    def epsilon_r(self) -> float:
        return self.beta * self.epsilon

    @property
    def epsilon_alpha(self) -> float:
        # exact complement so epsilon_r + epsilon_alpha == epsilon in floats
        return self.epsilon - self.beta * self.epsilon


@dataclass
class NoiseScale:
    sigma_r: float
    sigma_alpha: float
    c_const: float

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_alpha < 0:
            raise ValueError("noise scales must be nonnegative")
        if self.c_const < 1.5:
            raise ValueError("proof constant must be >= 3/2")


def inter_hierarchy_sensitivity(table, nodes):
    """Worst-case radius change when one node of the set is substituted.

    Equals max - min of the ball norms over the set; the exhaustive oracle
    over all single-node substitutions gives the same value.
    """
    nodes = np.asarray(list(nodes), dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("node set must be nonempty")
    norms = geo.poincare_norm(table.points[nodes], c=table.curvature)
    return float(np.max(norms) - np.min(norms))


def intra_hierarchy_sensitivity(table, nodes, clip_tau=DEFAULT_CLIP_TAU):
    """Largest clipped pairwise angle, pushed through the scalar ball norm.

    The raw angle magnitude is capped at 1 - clip_tau before applying
    (2/sqrt(c)) atanh(sqrt(c) * a); without the cap a parallel pair
    diverges.
    """
    if not 0.0 < clip_tau < 1.0:
        raise ValueError("clip_tau must lie in (0, 1)")
    nodes = np.asarray(list(nodes), dtype=np.int64)
    if nodes.size < 2:
        raise ValueError("need at least two nodes")
    pts = table.points[nodes]
    nrm = np.linalg.norm(pts, axis=1)
    if np.any(nrm < 1e-15):
        raise ValueError("undefined angle at origin")
    unit = pts / nrm[:, None]
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    iu = np.triu_indices(nodes.size, k=1)
    a = np.minimum(np.abs(cos[iu]), 1.0 - clip_tau)
    c = table.curvature
    return float(np.max((2.0 / math.sqrt(c)) * np.arctanh(math.sqrt(c) * a)))


def gamma_factor(z, mu, n=None, c=1.0):
    """(d / sinh d)^(n-1) with d the ball distance between mu and z."""
    z = np.asarray(z, dtype=np.float64)
    if n is None:
        n = z.shape[-1]
    d = geo.poincare_distance(mu, z, c=c)
    ratio = np.where(d < 1e-12, 1.0, d / np.sinh(np.maximum(d, 1e-12)))
    return ratio ** (n - 1)


def proof_constant(delta, gamma_bound=1.0):
    """c_const = max(3/2, sqrt(2 ln(1.25 gamma_bound / delta)))."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return max(1.5, math.sqrt(2.0 * math.log(1.25 * gamma_bound / delta)))


def calibrate_sigma(sensitivity, epsilon, delta, gamma_bound=1.0):
    """Noise scale c_const * sensitivity * gamma_bound / epsilon.

    The sensitivity is a hyperbolic-norm magnitude; with the pole at the
    origin the log map acts as the identity on magnitudes, and gamma is
    bounded by its supremum 1, which is strictly conservative.
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if sensitivity < 0:
        raise ValueError("sensitivity must be nonnegative")
    return proof_constant(delta, gamma_bound) * sensitivity * gamma_bound / epsilon


def wrapped_gaussian_sample(mu, sigma, rng, size=None, c=1.0):
    """Draw from the wrapped Gaussian centred at mu.

    v ~ N(0, sigma^2 I) in coordinates, tangent vector v / lambda_mu,
    pushed through the exponential map. sigma = 0 returns mu exactly.
    ``size`` draws a batch of independent samples.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    shape = mu.shape if size is None else (size,) + mu.shape
    if sigma == 0.0:
        return np.broadcast_to(mu, shape).copy()
    v = rng.normal(0.0, sigma, size=shape)
    lam = geo.conformal_factor(mu, c=c)
    return geo.exp_map(np.broadcast_to(mu, shape), v / lam, c=c)


def wrapped_gaussian_density(z, mu, sigma, c=1.0):
    """Density N(lambda_mu log_mu(z) | 0, sigma^2 I) * gamma(z | mu).

    Taken with respect to the hyperbolic volume measure; multiply by
    lambda_z^n for a density in plain ball coordinates.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = np.asarray(z, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    n = z.shape[-1]
    lam = float(geo.conformal_factor(mu, c=c))
    t = lam * geo.log_map(np.broadcast_to(mu, z.shape), z, c=c)
    sq = np.sum(t * t, axis=-1)
    gauss = np.exp(-sq / (2.0 * sigma**2)) / (2.0 * math.pi * sigma**2) ** (n / 2.0)
    return gauss * gamma_factor(z, mu, n=n, c=c)


@dataclass
class HierarchyNoise:
    """Tangent-space noise at the origin, directly addable to hidden states.

    eta = (sigma / lambda_0) * zeta keeps sigma (hence the budget split)
    differentiable; the raw standard normal draws are retained for that.
    """

    eta_r: np.ndarray
    eta_alpha: np.ndarray
    zeta_r: np.ndarray
    zeta_alpha: np.ndarray
    scale: NoiseScale


def generate_hierarchy_noise(sens: SensitivityPair, budget: PrivacyBudget,
                             dim, rng, size=None, c=1.0):
    """Radius and angle noise calibrated per the split budget.

    sigma_r uses (delta_r, beta * eps), sigma_alpha uses
    (delta_alpha, eps - beta * eps). With ``size`` given, each of the
    ``size`` rows is an independent draw.
    """
    if dim <= 0:
        raise ValueError("dimension must be positive")
    sigma_r = calibrate_sigma(sens.delta_r, budget.epsilon_r, budget.delta)
    sigma_alpha = calibrate_sigma(sens.delta_alpha, budget.epsilon_alpha, budget.delta)
    scale = NoiseScale(sigma_r, sigma_alpha, proof_constant(budget.delta))
    shape = (dim,) if size is None else (size, dim)
    zeta_r = rng.standard_normal(shape)
    zeta_alpha = rng.standard_normal(shape)
    lam0 = 2.0  # conformal factor at the origin
    return HierarchyNoise(
        eta_r=(sigma_r / lam0) * zeta_r,
        eta_alpha=(sigma_alpha / lam0) * zeta_alpha,
        zeta_r=zeta_r,
        zeta_alpha=zeta_alpha,
        scale=scale,
    )


@dataclass
class AuditReport:
    sensitivity: float
    epsilon: float
    delta: float
    trials: int
    sigma: float
    c_const: float
    epsilon_hat: float
    quantile: float
    passed: bool

    def to_text(self) -> str:
        lines = [
            "hyperbolic mechanism audit",
            f"  sensitivity   {self.sensitivity:.6g}",
            f"  epsilon       {self.epsilon:.6g}",
            f"  delta         {self.delta:.6g}",
            f"  trials        {self.trials}",
            f"  sigma         {self.sigma:.6g}",
            f"  c_const       {self.c_const:.6g}",
            f"  epsilon_hat   {self.epsilon_hat:.6g}",
            f"  quantile      {self.quantile:.6g}",
            f"  verdict       {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)


def privacy_audit_1d(sensitivity, epsilon, delta, trials, rng=None,
                     sigma=None, mode="empirical"):
    """Empirical privacy-loss audit of the 1D mechanism.

    Two adjacent outputs sit a hyperbolic distance ``sensitivity`` apart
    (origin and its exp-map image). Outputs are sampled from the wrapped
    Gaussian at the origin; the log ratio of the two wrapped densities is
    histogrammed and its (1 - delta)-quantile reported as epsilon_hat. The
    audit passes iff epsilon_hat <= 1.05 * epsilon. ``sigma`` overrides the
    calibrated scale (used to demonstrate failure for under-noised runs).

    ``mode='analytic'`` skips sampling: in one dimension the loss is
    exactly Gaussian, so the quantile is closed form. Empirical mode
    requires trials >= 100 / delta.
    """
    if trials < 1e5:
        raise ValueError("audit needs at least 1e5 trials")
    if mode not in ("empirical", "analytic"):
        raise ValueError(f"unknown audit mode {mode!r}")
    if mode == "empirical" and trials < 100.0 / delta:
        raise ValueError(
            f"trials={trials} too small for delta={delta}; "
            "need trials >= 100/delta or mode='analytic'"
        )
    c_const = proof_constant(delta)
    if sigma is None:
        sigma = calibrate_sigma(sensitivity, epsilon, delta)

    if sensitivity == 0.0 or sigma == 0.0:
        eps_hat = 0.0
    elif mode == "analytic":
        from scipy.stats import norm

        # loss ~ N(Delta^2 / 2 sigma^2, (Delta / sigma)^2) in the 1D model
        eps_hat = sensitivity**2 / (2 * sigma**2) \
            + (sensitivity / sigma) * norm.ppf(1.0 - delta)
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        mu0 = np.zeros(1)
        mu1 = geo.exp_map0(np.array([sensitivity / 2.0]))  # norm = sensitivity
        z = wrapped_gaussian_sample(mu0, sigma, rng, size=int(trials))
        p0 = wrapped_gaussian_density(z, mu0, sigma)
        p1 = wrapped_gaussian_density(z, mu1, sigma)
        loss = np.log(np.maximum(p0, 1e-300)) - np.log(np.maximum(p1, 1e-300))
        eps_hat = float(np.quantile(loss, 1.0 - delta))

    return AuditReport(
        sensitivity=float(sensitivity),
        epsilon=float(epsilon),
        delta=float(delta),
        trials=int(trials),
        sigma=float(sigma),
        c_const=float(c_const),
        epsilon_hat=float(eps_hat),
        quantile=1.0 - delta,
        passed=bool(eps_hat <= 1.05 * epsilon),
    )
