"""Chain simulation, histogram density oracles, the xNES rate estimator and empirical return periods."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from chainverifier.chains import XnesChain, XnesParams, normal_logpdf
from chainverifier.control_model import ChainModel, ModelInputError, VerificationError, as_state
from chainverifier.models import DensityBin, DensityCheckReport, RateEstimate, ReturnPeriodReport
from chainverifier.objectives import ObjectiveFn
from chainverifier.periods import lengths_gcd

logger = logging.getLogger(__name__)

DEFAULT_BATCHES = 20
DEFAULT_BURN_IN_FRACTION = 0.2
MIN_DENSITY_SAMPLES = 10_000
BIN_SUBPOINTS = 8
AGREEMENT_SE_MULTIPLIER = 4.0
# X is stored relative to exp(log_ref); rescale once sigma drifts this far (in log units).
RESCALE_LOG_GAP = 50.0


class SimulationError(VerificationError):
    """Raised when a simulated state becomes non-finite."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class HypothesisError(VerificationError, ValueError):
    """Raised when an operation needs a hypothesis that the inputs flag as false."""
    pass


@dataclass(frozen=True)
class Trajectory:
    """states[i + 1] = step(states[i], controls[i]) for every recorded step."""

    states: np.ndarray
    controls: np.ndarray
    seed: int

    @property
    def steps(self) -> int:
        return self.controls.shape[0]

    def rows(self) -> List[List[float]]:
        """One row per step: index, state coordinates, control coordinates (empty after the last state)."""
        rows = []
        for i, state in enumerate(self.states):
            control = self.controls[i].tolist() if i < self.steps else [float("nan")] * self.controls.shape[1]
            rows.append([i] + state.tolist() + control)
        return rows

    def header(self) -> List[str]:
        n = self.states.shape[1]
        p = self.controls.shape[1]
        return ["index"] + [f"x{i}" for i in range(n)] + [f"w{i}" for i in range(p)]


def run_chain(model: ChainModel, x0, steps: int, seed: int) -> Trajectory:
    """Iterate sampler and step from x0; reproducible from the seed.

    Raises:
        SimulationError: If a state becomes non-finite, with the offending index
    """
    if steps < 1:
        raise ModelInputError(f"steps must be at least 1, got {steps}")
    rng = np.random.default_rng(seed)
    states = np.empty((steps + 1, model.n))
    controls = np.empty((steps, model.p))
    states[0] = as_state(model, x0)
    for i in range(steps):
        w = np.asarray(model.sample_control(states[i], rng), dtype=float).reshape(model.p)
        controls[i] = w
        states[i + 1] = np.asarray(model.step(states[i], w), dtype=float).reshape(model.n)
        if not np.all(np.isfinite(states[i + 1])):
            raise SimulationError(f"Non-finite state at index {i + 1}: {states[i + 1]}", i + 1)
    return Trajectory(states=states, controls=controls, seed=seed)


def batch_means(values, batches: int = DEFAULT_BATCHES) -> Tuple[float, float]:
    """Mean of a correlated series and its batch-means standard error."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError(f"Batch means need at least 2 values, got {values.size}")
    batches = min(batches, values.size)
    usable = values.size - values.size % batches
    means = values[:usable].reshape(batches, -1).mean(axis=1)
    se = float(means.std(ddof=1) / np.sqrt(batches))
    return float(values.mean()), se


def _bin_average(density_at, edges: np.ndarray) -> np.ndarray:
    """Composite midpoint rule over each bin."""
    widths = np.diff(edges)
    offsets = (np.arange(BIN_SUBPOINTS) + 0.5) / BIN_SUBPOINTS
    points = edges[:-1, None] + widths[:, None] * offsets[None, :]
    return density_at(points.reshape(-1)).reshape(points.shape).mean(axis=1)


def _marginal_density(model: ChainModel, z: np.ndarray, coordinate: int, others: np.ndarray):
    """p_j(t) estimated as the mean of p(w) / p_N(w_-j) with w_-j ~ N(0, I) and w_j = t."""
    rest = np.delete(np.arange(model.p), coordinate)
    log_proposal = normal_logpdf(others[:, rest])

    def density_at(ts: np.ndarray) -> np.ndarray:
        values = np.empty(ts.size)
        for i, t in enumerate(ts):
            ws = others.copy()
            ws[:, coordinate] = t
            values[i] = np.mean(np.exp(model.log_density_batch(z, ws) - log_proposal))
        return values

    return density_at


def _report(z, coordinate, samples, counts, edges, analytic, threshold) -> DensityCheckReport:
    widths = np.diff(edges)
    empirical = counts / (samples * widths)
    occupied = counts > 0
    l1 = float(np.sum(np.abs(empirical - analytic)[occupied] * widths[occupied]))
    bins = [
        DensityBin(left=float(edges[i]), right=float(edges[i + 1]), count=int(counts[i]),
                   empirical=float(empirical[i]), analytic=float(analytic[i]))
        for i in range(counts.size)
    ]
    return DensityCheckReport(
        state=[float(v) for v in z],
        coordinate=coordinate,
        samples=samples,
        l1_distance=l1,
        threshold=threshold,
        passed=None if threshold is None else l1 <= threshold,
        empty_bins=int(np.sum(~occupied)),
        bins=bins,
    )


def empirical_density_check(model: ChainModel, z, samples: int, bins: int, value_range: Tuple[float, float],
                            seed: int, threshold: Optional[float] = None,
                            marginal_samples: int = 2000) -> List[DensityCheckReport]:
    """Histogram of sampled controls against the bin-averaged analytic density at state z.

    Scalar controls give one report; otherwise one report per control
    coordinate compares its marginal with a Monte-Carlo marginal of the
    analytic density. Empty bins are excluded from the L1 distance and counted.
    """
    if samples < MIN_DENSITY_SAMPLES:
        raise ModelInputError(f"Density check needs at least {MIN_DENSITY_SAMPLES} samples, got {samples}")
    low, high = value_range
    if not high > low or bins < 1:
        raise ModelInputError(f"Invalid histogram: {bins} bins over [{low}, {high}]")
    z = as_state(model, z)
    rng = np.random.default_rng(seed)
    draws = np.asarray(model.sample_control_batch(z, samples, rng), dtype=float).reshape(samples, model.p)
    edges = np.linspace(low, high, bins + 1)

    if model.p == 1:
        counts, _ = np.histogram(draws[:, 0], bins=edges)
        analytic = _bin_average(lambda ts: np.exp(model.log_density_batch(z, ts.reshape(-1, 1))), edges)
        report = _report(z, None, samples, counts, edges, analytic, threshold)
        logger.info(f"Density check at {z.tolist()}: L1 {report.l1_distance:.4f}")
        return [report]

    others = np.random.default_rng((seed, 1)).standard_normal((marginal_samples, model.p))
    reports = []
    for j in range(model.p):
        counts, _ = np.histogram(draws[:, j], bins=edges)
        analytic = _bin_average(_marginal_density(model, z, j, others), edges)
        reports.append(_report(z, j, samples, counts, edges, analytic, threshold))
        logger.info(f"Density check at {z.tolist()}, coordinate {j}: L1 {reports[-1].l1_distance:.4f}")
    return reports


def _behaviour(estimate: float, se: float) -> str:
    if estimate + AGREEMENT_SE_MULTIPLIER * se < 0:
        return "convergence"
    if estimate - AGREEMENT_SE_MULTIPLIER * se > 0:
        return "divergence"
    return "undecided"


def _log_sigma_increments(chain: XnesChain, x0: np.ndarray, sigma0: float, iterations: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Run (X_t, sigma_t) with sigma in log-space; X = exp(log_ref) * x_rel."""
    params = chain.params
    weights = chain.weights
    n = chain.n
    log_sigma = float(np.log(sigma0))
    log_ref = log_sigma
    x_rel = x0 / sigma0
    increments = np.empty(iterations)
    for t in range(iterations):
        u = rng.standard_normal((params.lam, n))
        scale = np.exp(log_sigma - log_ref)
        ranking = np.argsort(chain.objective(x_rel + scale * u), kind="stable")
        w = u[ranking[: params.mu]]
        x_rel = x_rel + params.kappa_m * scale * (weights @ w)
        increments[t] = params.kappa_sigma / (2 * n) * np.sum(weights * (np.sum(w * w, axis=1) - n))
        log_sigma += increments[t]
        if abs(log_sigma - log_ref) > RESCALE_LOG_GAP:
            x_rel = x_rel * np.exp(log_ref - log_sigma)
            log_ref = log_sigma
        if not np.all(np.isfinite(x_rel)):
            raise SimulationError(f"Non-finite mean at iteration {t + 1}", t + 1)
    return increments


def _z_chain_increments(chain: XnesChain, z0: np.ndarray, iterations: int,
                        rng: np.random.Generator) -> np.ndarray:
    z = z0
    increments = np.empty(iterations)
    for t in range(iterations):
        w = chain.sample_control(z, rng)
        increments[t] = chain.log_step_change(w)
        z = np.asarray(chain.step(z, w), dtype=float)
        if not np.all(np.isfinite(z)):
            raise SimulationError(f"Non-finite normalized state at iteration {t + 1}", t + 1)
    return increments


def xnes_convergence_rate(params: XnesParams, x0, sigma0: float, iterations: int, seed: int,
                          burn_in: Optional[int] = None, batches: int = DEFAULT_BATCHES,
                          objective: Optional[ObjectiveFn] = None) -> RateEstimate:
    """Estimate lim (1/k) ln(sigma_k / sigma_0) by two routes.

    Route A iterates the (X, sigma) recursion and averages the post-burn-in
    increments of ln sigma. Route B runs the normalized chain Z on an
    independent stream and averages (kappa_sigma / 2n) sum beta_i (|W^i|^2 - n).

    Raises:
        HypothesisError: If the objective is not flagged scaling-invariant
    """
    chain = XnesChain(params, objective)
    if not chain.objective.scaling_invariant:
        raise HypothesisError(
            f"Objective {chain.objective.name} is not flagged scaling-invariant about 0; "
            "the normalized chain and the linear rate are only defined under that hypothesis"
        )
    if burn_in is None:
        burn_in = int(DEFAULT_BURN_IN_FRACTION * iterations)
    if not 0 <= burn_in < iterations:
        raise ModelInputError(f"burn_in must satisfy 0 <= burn_in < iterations, got {burn_in} and {iterations}")
    if not sigma0 > 0:
        raise ModelInputError(f"sigma0 must be positive, got {sigma0}")
    x0 = as_state(chain, x0)

    route_a = _log_sigma_increments(chain, x0, sigma0, iterations, np.random.default_rng((seed, 0)))[burn_in:]
    route_b = _z_chain_increments(chain, x0 / sigma0, iterations, np.random.default_rng((seed, 1)))[burn_in:]
    estimate_a, se_a = batch_means(route_a, batches)
    estimate_b, se_b = batch_means(route_b, batches)
    agree = abs(estimate_a - estimate_b) <= AGREEMENT_SE_MULTIPLIER * np.sqrt(se_a ** 2 + se_b ** 2)
    if not agree:
        logger.warning(f"Rate routes disagree: {estimate_a:.5f} +- {se_a:.5f} vs {estimate_b:.5f} +- {se_b:.5f}")

    behaviour = _behaviour(estimate_a, se_a)
    logger.info(f"xNES rate {estimate_a:.5f} ({behaviour}) over {iterations - burn_in} iterations")
    return RateEstimate(
        per_iteration_log_step_ratio=estimate_a,
        expectation_route=estimate_b,
        se_log_step_ratio=se_a,
        se_expectation=se_b,
        iterations=iterations,
        burn_in=burn_in,
        batches=min(batches, iterations - burn_in),
        routes_agree=bool(agree),
        behaviour=behaviour,
    )


def empirical_return_periods(model: ChainModel, x_star, epsilon: float, steps: int, seed: int,
                             x0=None) -> ReturnPeriodReport:
    """Entry times of the chain started at x0 (default x*) into B(x*, epsilon), and the gcd of their gaps.

    A time t is an entry when the state is in the ball at t and outside it at
    t - 1; time 0 counts as an entry when x0 lies in the ball. Staying inside
    the ball adds no entries.
    """
    if not epsilon > 0:
        raise ModelInputError(f"epsilon must be positive, got {epsilon}")
    x_star = as_state(model, x_star)
    trajectory = run_chain(model, x_star if x0 is None else x0, steps, seed)
    inside = np.linalg.norm(trajectory.states - x_star, axis=1) < epsilon
    entries = inside & ~np.concatenate(([False], inside[:-1]))
    times = [int(t) for t in np.flatnonzero(entries)]
    gaps = [b - a for a, b in zip(times, times[1:])]
    if not gaps:
        logger.warning(f"No return to B({x_star.tolist()}, {epsilon}) observed in {steps} steps")
    return ReturnPeriodReport(
        x_star=x_star.tolist(),
        epsilon=epsilon,
        steps=steps,
        return_times=times,
        gaps=gaps,
        gcd=lengths_gcd(gaps),
    )
