"""Exact verification oracles on small state spaces.

Two substrates: finite Markov chains where every distribution is a vector
and claims can be checked to near machine precision, and dense trapezoid
quadrature on a 1D grid for the Gaussian mean-shift approximation. Nothing
here is learned; these are the reference answers the learned pipeline is
judged against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import RngStream


@dataclass
class DiscreteChain:
    """A finite reverse-time chain with a positive per-state score.

    kernels[t-1] is the n x n transition for step t -> t-1; row i holds
    P(state j at t-1 | state i at t) and sums to one. marginals[t] is the
    law at time t for t = 0..T, consistent under the kernels.
    """

    kernels: list[np.ndarray]
    marginals: list[np.ndarray]
    score: np.ndarray

    @property
    def n(self) -> int:
        return len(self.score)

    @property
    def T(self) -> int:
        return len(self.kernels)

    def validate(self, tol: float = 1e-14) -> None:
        if len(self.marginals) != self.T + 1:
            raise ValueError(f"need T + 1 marginals, got {len(self.marginals)} for T = {self.T}")
        if not np.all(self.score > 0):
            raise ValueError("scores must be strictly positive")
        for t in range(1, self.T + 1):
            k = self.kernels[t - 1]
            if k.shape != (self.n, self.n):
                raise ValueError(f"kernel {t} has shape {k.shape}, expected ({self.n}, {self.n})")
            if np.max(np.abs(k.sum(axis=1) - 1.0)) > tol:
                raise ValueError(f"kernel {t} rows do not sum to 1 within {tol}")
            if np.min(k) < 0:
                raise ValueError(f"kernel {t} has negative entries")
        for t, p in enumerate(self.marginals):
            if abs(p.sum() - 1.0) > tol or np.min(p) < 0:
                raise ValueError(f"marginal {t} is not a distribution")
        for t in range(self.T, 0, -1):
            pushed = self.kernels[t - 1].T @ self.marginals[t]
            if np.max(np.abs(pushed - self.marginals[t - 1])) > tol:
                raise ValueError(f"marginal consistency fails at step {t}")


def random_chain(n: int, T: int, rng: RngStream) -> DiscreteChain:
    """Full-support random chain: Dirichlet(1) rows, scores exp(U(-2, 2)).

    Lower marginals are built by push-forward, so consistency holds by
    construction.
    """
    n = int(n)
    T = int(T)
    if n < 2 or T < 1:
        raise ValueError(f"need n >= 2 and T >= 1, got ({n}, {T})")
    ones = np.ones(n)
    kernels = [rng.gen.dirichlet(ones, size=n) for _ in range(T)]
    marginals = [np.empty(0)] * (T + 1)
    marginals[T] = rng.gen.dirichlet(ones)
    for t in range(T, 0, -1):
        marginals[t - 1] = kernels[t - 1].T @ marginals[t]
    score = np.exp(rng.gen.uniform(-2.0, 2.0, size=n))
    return DiscreteChain(kernels, marginals, score)


def tilt_distribution(p: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Renormalized score-weighted distribution (p * s) / sum(p * s)."""
    p = np.asarray(p, dtype=float)
    s = np.asarray(s, dtype=float)
    if p.shape != s.shape or p.ndim != 1:
        raise ValueError(f"p and s must be equal-length vectors, got {p.shape} and {s.shape}")
    if not np.all(s > 0):
        raise ValueError("scores must be strictly positive")
    if np.min(p) < 0 or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p is not a probability vector")
    w = p * s
    return w / w.sum()


def tilted_kernel_apply(kernel: np.ndarray, s: np.ndarray, p_hat: np.ndarray) -> np.ndarray:
    """Push p_hat through the score-ratio-weighted kernel, unnormalized.

    v_j = sum_i p_hat(i) K(j|i) s_j / s_i. The kernel rows deliberately do
    not sum to one after the reweighting; the caller owns renormalization.
    """
    kernel = np.asarray(kernel, dtype=float)
    s = np.asarray(s, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    n = len(s)
    if kernel.shape != (n, n) or p_hat.shape != (n,):
        raise ValueError(
            f"shape mismatch: kernel {kernel.shape}, score {s.shape}, p_hat {p_hat.shape}"
        )
    if not np.all(s > 0):
        raise ValueError("scores must be strictly positive")
    return s * (kernel.T @ (p_hat / s))


@dataclass(frozen=True)
class Theorem1Report:
    max_error: float
    per_step_errors: list[float]  # ordered t = T .. 1
    mass_ratios: list[float]  # pre-renormalization mass at each step


def verify_theorem1(chain: DiscreteChain) -> Theorem1Report:
    """Check that tilting commutes with reverse propagation.

    Starting from the tilted top marginal, pushing through the reweighted
    kernel and renormalizing must land exactly on the tilted lower
    marginal at every step. The pre-renormalization mass is the ratio of
    normalizing constants between adjacent levels and is reported too.
    """
    chain.validate()
    errors: list[float] = []
    ratios: list[float] = []
    p_hat = tilt_distribution(chain.marginals[chain.T], chain.score)
    for t in range(chain.T, 0, -1):
        v = tilted_kernel_apply(chain.kernels[t - 1], chain.score, p_hat)
        mass = float(v.sum())
        ratios.append(mass)
        p_hat = v / mass
        expected = tilt_distribution(chain.marginals[t - 1], chain.score)
        errors.append(float(np.max(np.abs(p_hat - expected))))
    return Theorem1Report(max(errors), errors, ratios)


@dataclass(frozen=True)
class DpoEquivalenceReport:
    max_arg_diff: float
    max_loss_diff: float
    n_tuples: int
    redraws: int


def _log_sigmoid(z: float) -> float:
    return -float(np.logaddexp(0.0, -z))


def verify_dpo_equivalence(
    chain: DiscreteChain, n_tuples: int, beta: float, rng: RngStream
) -> DpoEquivalenceReport:
    """Kernel-ratio preference objective vs plain score ratios, tuple by tuple.

    For random (state, successor) pairs the inner argument built from
    log(tilted kernel / base kernel) must equal beta * T times the log
    score-ratio difference exactly; both the arguments and the resulting
    -log sigmoid losses are compared. Tuples that land on a zero base
    transition are redrawn.
    """
    chain.validate()
    n_tuples = int(n_tuples)
    if n_tuples < 1:
        raise ValueError(f"n_tuples must be positive, got {n_tuples}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    c = beta * chain.T
    s = chain.score
    max_arg = 0.0
    max_loss = 0.0
    redraws = 0
    done = 0
    while done < n_tuples:
        t = int(rng.gen.integers(1, chain.T + 1))
        i_w, j_w, i_l, j_l = (int(v) for v in rng.gen.integers(0, chain.n, size=4))
        k = chain.kernels[t - 1]
        if k[i_w, j_w] == 0.0 or k[i_l, j_l] == 0.0:
            redraws += 1
            continue
        # Ratio route: the base kernel cancels only up to floating point.
        tilted_w = math.log(k[i_w, j_w] * s[j_w] / s[i_w]) - math.log(k[i_w, j_w])
        tilted_l = math.log(k[i_l, j_l] * s[j_l] / s[i_l]) - math.log(k[i_l, j_l])
        arg_kernel = c * (tilted_w - tilted_l)
        arg_score = c * (math.log(s[j_w]) - math.log(s[i_w]) - math.log(s[j_l]) + math.log(s[i_l]))
        max_arg = max(max_arg, abs(arg_kernel - arg_score))
        max_loss = max(max_loss, abs(_log_sigmoid(arg_kernel) - _log_sigmoid(arg_score)))
        done += 1
    return DpoEquivalenceReport(max_arg, max_loss, n_tuples, redraws)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform 1D grid with trapezoid weights."""

    x: np.ndarray
    weights: np.ndarray

    @property
    def lo(self) -> float:
        return float(self.x[0])

    @property
    def hi(self) -> float:
        return float(self.x[-1])


def make_grid(lo: float, hi: float, n_points: int = 1001) -> QuadratureGrid:
    n_points = int(n_points)
    if not hi > lo:
        raise ValueError(f"need hi > lo, got ({lo}, {hi})")
    if n_points < 101:
        raise ValueError(f"n_points must be at least 101, got {n_points}")
    x = np.linspace(lo, hi, n_points)
    dx = (hi - lo) / (n_points - 1)
    w = np.full(n_points, dx)
    w[0] = w[-1] = dx / 2.0
    return QuadratureGrid(x, w)


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _check_gaussian_args(mu: float, sigma2: float, grid: QuadratureGrid) -> None:
    if not (np.isfinite(mu) and np.isfinite(sigma2) and sigma2 > 0):
        raise ValueError(f"need finite mu and sigma2 > 0, got ({mu}, {sigma2})")
    sd = math.sqrt(sigma2)
    tail = normal_cdf((grid.lo - mu) / sd) + normal_cdf((mu - grid.hi) / sd)
    if tail > 1e-8:
        raise ValueError(
            f"grid [{grid.lo}, {grid.hi}] leaves base-Gaussian tail mass {tail:.3e} > 1e-8"
        )


def gaussian_on_grid(mu: float, sigma2: float, grid: QuadratureGrid) -> np.ndarray:
    """Normal density evaluated on the grid, renormalized under its weights."""
    _check_gaussian_args(mu, sigma2, grid)
    logf = -((grid.x - mu) ** 2) / (2.0 * sigma2)
    f = np.exp(logf - logf.max())
    return f / float(grid.weights @ f)


def tilted_gaussian_1d(mu: float, sigma2: float, logscore, grid: QuadratureGrid) -> np.ndarray:
    """Density proportional to N(mu, sigma2) * exp(logscore), on the grid."""
    _check_gaussian_args(mu, sigma2, grid)
    logf = -((grid.x - mu) ** 2) / (2.0 * sigma2) + np.asarray(logscore(grid.x), dtype=float)
    if not np.all(np.isfinite(logf)):
        raise ValueError("logscore produced non-finite values on the grid")
    f = np.exp(logf - logf.max())
    return f / float(grid.weights @ f)


def tv_distance(grid: QuadratureGrid, d1: np.ndarray, d2: np.ndarray) -> float:
    """Total variation between two grid densities: 0.5 * integral |d1 - d2|."""
    return 0.5 * float(grid.weights @ np.abs(np.asarray(d1) - np.asarray(d2)))


@dataclass(frozen=True)
class Theorem3Report:
    sigma2s: list[float]
    tvs: list[float]
    shifted_means: list[float]


def verify_theorem3(
    mu: float, sigma2_list: list[float], logscore, grid: QuadratureGrid
) -> Theorem3Report:
    """Exact tilted Gaussian vs the mean-shifted Gaussian it linearizes to.

    The approximation keeps the variance and moves the mean by
    sigma2 * d/dx logscore(mu) (unit guidance weight). The report carries
    one TV distance per variance; the claim under test is that TV shrinks
    as sigma2 does.
    """
    if len(sigma2_list) == 0:
        raise ValueError("sigma2_list is empty")
    h = 1e-6 * (1.0 + abs(mu))
    diff = np.asarray(logscore(np.array([mu + h]))) - np.asarray(logscore(np.array([mu - h])))
    slope = float(diff.reshape(-1)[0]) / (2.0 * h)
    tvs: list[float] = []
    means: list[float] = []
    for sigma2 in sigma2_list:
        exact = tilted_gaussian_1d(mu, sigma2, logscore, grid)
        mean_shifted = mu + sigma2 * slope
        approx = gaussian_on_grid(mean_shifted, sigma2, grid)
        tvs.append(tv_distance(grid, exact, approx))
        means.append(mean_shifted)
    return Theorem3Report([float(s) for s in sigma2_list], tvs, means)
