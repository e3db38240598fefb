"""Built-in chains: additive random walk, selection walk and the normalized xNES chain."""

import importlib
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats
from scipy.special import gammaln, logsumexp

from chainverifier.control_model import ChainModel
from chainverifier.controllability import DifferentiationError
from chainverifier.objectives import ObjectiveFn, get_objective, sphere

logger = logging.getLogger(__name__)

POSITIVITY_SE_MULTIPLIER = 3.0
TIE_JITTER = 1e-9
CHI2_TAIL_TERMS = 30
# ncx2.sf below this is recomputed as a Poisson mixture in log-space.
NCX2_LOG_FALLBACK = 1e-250


def normal_logpdf(w: np.ndarray) -> np.ndarray:
    """Log-density of the standard multivariate normal over the last axis."""
    return np.sum(stats.norm.logpdf(w), axis=-1)


def exact_sphere_q(z, v) -> np.ndarray:
    """Q_z(v) = P(|z + N|^2 <= |z + v|^2) via the (noncentral) chi-square distribution."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    level = np.sum((z + v) ** 2, axis=-1)
    nc = float(np.sum(z * z))
    if nc == 0.0:
        return stats.chi2.cdf(level, z.size)
    return stats.ncx2.cdf(level, z.size, nc)


def chi2_logsf(level, df) -> np.ndarray:
    """log P(chi2_df > level), kept finite where the survival function underflows.

    Underflowing entries use the asymptotic series of the upper incomplete gamma
    function, Gamma(a, x) ~ x^(a-1) e^(-x) sum_k (a-1)...(a-k) / x^k.
    """
    level, df = np.broadcast_arrays(np.asarray(level, dtype=float), np.asarray(df, dtype=float))
    shape = level.shape
    level, df = level.reshape(-1), df.reshape(-1)
    with np.errstate(divide="ignore"):
        out = np.array(stats.chi2.logsf(level, df), dtype=float).reshape(-1)
    under = np.isneginf(out) & (level > 0)
    if np.any(under):
        a = df[under] / 2.0
        x = level[under] / 2.0
        factors = (a[:, None] - np.arange(1, CHI2_TAIL_TERMS + 1)) / x[:, None]
        series = 1.0 + np.sum(np.cumprod(factors, axis=1), axis=1)
        out[under] = (a - 1.0) * np.log(x) - x - gammaln(a) + np.log(series)
    return out.reshape(shape)


def noncentral_chi2_logsf(level, df: int, nc: float, fallback_below: float = NCX2_LOG_FALLBACK) -> np.ndarray:
    """log P(chi2_df(nc) > level).

    Survivals below ``fallback_below`` are recomputed in log-space from the
    Poisson mixture sum_j Pois(j; nc/2) P(chi2_{df+2j} > level).
    """
    level = np.asarray(level, dtype=float)
    shape = level.shape
    level = level.reshape(-1)
    sf = np.asarray(stats.ncx2.sf(level, df, nc), dtype=float).reshape(-1)
    with np.errstate(divide="ignore"):
        out = np.log(sf)
    far = sf < fallback_below
    if np.any(far):
        half = nc / 2.0
        top = max(half + 12.0 * np.sqrt(half), float(level[far].max()) / 2.0)
        j = np.arange(int(np.ceil(top + 12.0 * np.sqrt(top + 1.0))) + 20)
        terms = stats.poisson.logpmf(j, half) + chi2_logsf(level[far][:, None], df + 2 * j)
        out[far] = logsumexp(terms, axis=1)
    return out.reshape(shape)


def exact_sphere_log_survival(z, v) -> np.ndarray:
    """log(1 - Q_z(v)) for the sphere, accumulated in log-space in both tails."""
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    level = np.sum((z + v) ** 2, axis=-1)
    nc = float(np.sum(z * z))
    if nc == 0.0:
        return chi2_logsf(level, z.size)
    return noncentral_chi2_logsf(level, z.size, nc)


class QEvaluator:
    """Evaluates Q_z^f(v) = P(f(z + N) <= f(z + v)).

    The sphere uses the exact chi-square route. Other objectives reuse one
    fixed set of ``samples`` standard normal draws (common random numbers),
    so repeated evaluations are deterministic.
    """

    def __init__(self, objective: ObjectiveFn, n: int, samples: int = 20000, seed: int = 0,
                 exact: Optional[bool] = None):
        self.objective = objective
        self.n = n
        self.samples = samples
        self.exact = objective.is_sphere if exact is None else exact
        self._normals = None
        if not self.exact:
            self._normals = np.random.default_rng(seed).standard_normal((samples, n))

    def evaluate(self, z, v) -> Tuple[np.ndarray, np.ndarray]:
        """Return (Q estimate, standard error) over the leading axes of v."""
        z = np.asarray(z, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.exact:
            q = exact_sphere_q(z, v)
            return q, np.zeros_like(q)
        reference = np.sort(self.objective(z + self._normals))
        counts = np.searchsorted(reference, self.objective(z + v), side="right")
        q = counts / self.samples
        return q, np.sqrt(q * (1.0 - q) / self.samples)

    def log_survival(self, z, v) -> np.ndarray:
        """log(1 - Q); Monte-Carlo survivals within 3 standard errors of zero count as zero."""
        if self.exact:
            return exact_sphere_log_survival(z, v)
        q, se = self.evaluate(z, v)
        survival = 1.0 - q
        positive = survival > POSITIVITY_SE_MULTIPLIER * se
        with np.errstate(divide="ignore"):
            return np.where(positive, np.log(np.where(positive, survival, 1.0)), -np.inf)


def q_value(f: ObjectiveFn, z, w_mu, samples: int = 20000, seed: int = 0,
            exact: Optional[bool] = None) -> Tuple[float, float]:
    """Estimate Q_z^f(w_mu) with its standard error.

    Uses the exact evaluator when f is flagged as the sphere (unless
    ``exact=False``), else the Monte-Carlo frequency of f(z + N) <= f(z + w_mu).
    """
    if samples < 1000:
        raise ValueError(f"q_value needs at least 1000 samples, got {samples}")
    z = np.asarray(z, dtype=float).reshape(-1)
    evaluator = QEvaluator(f, z.size, samples, seed, exact=exact)
    q, se = evaluator.evaluate(z, np.asarray(w_mu, dtype=float).reshape(-1))
    return float(q), float(se)


class RandomWalk(ChainModel):
    """Phi_{k+1} = Phi_k + U_{k+1} with standard normal increments."""

    name = "random-walk"
    supports_autodiff = True

    def __init__(self, n: int = 1):
        super().__init__(n=n, p=n, m=n)

    def step(self, x, w, xp=np):
        return x + w

    def sample_control(self, x, rng):
        return rng.standard_normal(self.n)

    def sample_control_batch(self, x, count, rng):
        return rng.standard_normal((count, self.n))

    def log_density(self, x, w):
        return float(normal_logpdf(np.asarray(w, dtype=float)))

    def log_density_batch(self, x, ws):
        return normal_logpdf(np.asarray(ws, dtype=float))

    def path_hint(self, y, center, radius, k, rng):
        blocks = np.zeros((k, self.p))
        blocks[-1] = np.asarray(center, dtype=float) - np.asarray(y, dtype=float)
        return blocks


class SelectionWalk(ChainModel):
    """Phi_{k+1} = Phi_k + alpha(Phi_k, (U^1, U^2)): keep the better of two normal steps.

    The sampler follows alpha(x, u) = (u1 - u2) 1{f(x+u1) <= f(x+u2)} + u2
    literally; the density 2 p_N(w) P(f(x+w) < f(x+U)) uses the strict
    inequality. Both agree almost everywhere when level sets are negligible.
    """

    name = "selection-walk"
    supports_autodiff = True

    def __init__(self, objective: Optional[ObjectiveFn] = None, q_samples: int = 20000, q_seed: int = 0):
        super().__init__(n=1, p=1, m=2)
        self.objective = objective or sphere()
        self._q = None if self.objective.is_sphere else QEvaluator(self.objective, 1, q_samples, q_seed)

    def step(self, x, w, xp=np):
        return x + w

    def alpha(self, x, u) -> np.ndarray:
        u1 = np.asarray(u[0:1], dtype=float)
        u2 = np.asarray(u[1:2], dtype=float)
        better = float(self.objective(x + u1) <= self.objective(x + u2))
        return (u1 - u2) * better + u2

    def sample_control(self, x, rng):
        return self.alpha(np.asarray(x, dtype=float), rng.standard_normal(2))

    def sample_control_batch(self, x, count, rng):
        x = np.asarray(x, dtype=float).reshape(1)
        u = rng.standard_normal((count, 2, 1))
        better = self.objective(x + u[:, 0]) <= self.objective(x + u[:, 1])
        return np.where(better[:, None], u[:, 0], u[:, 1])

    def _log_win_probability(self, x, ws: np.ndarray) -> np.ndarray:
        if self._q is not None:
            return self._q.log_survival(x, ws)
        # f = x^2: {u : |x+u| > |x+w|} is the union of two rays.
        a = np.abs(x[0] + ws[..., 0])
        return np.logaddexp(stats.norm.logcdf(-a - x[0]), stats.norm.logsf(a - x[0]))

    def log_density_batch(self, x, ws):
        ws = np.asarray(ws, dtype=float).reshape(-1, 1)
        x = np.asarray(x, dtype=float).reshape(1)
        return np.log(2.0) + normal_logpdf(ws) + self._log_win_probability(x, ws)

    def log_density(self, x, w):
        return float(self.log_density_batch(x, np.asarray(w, dtype=float).reshape(1, 1))[0])

    def path_hint(self, y, center, radius, k, rng):
        blocks = np.zeros((k, 1))
        blocks[-1] = np.asarray(center, dtype=float) - np.asarray(y, dtype=float)
        return blocks


class XnesParams(BaseModel):
    """Parameters of the xNES chain with covariance restricted to sigma^2 I."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid", json_schema_extra={
        "example": {
            "n": 3,
            "lambda": 4,
            "mu": 2,
            "weights": [0.5, 0.5],
            "kappa_m": 1.0,
            "kappa_sigma": 1.0,
            "objective": "sphere"
        }
    })

    n: int = Field(..., ge=1, description="Search space dimension")
    lam: int = Field(..., ge=1, alias="lambda", description="Population size")
    mu: int = Field(..., ge=1, description="Number of selected steps")
    weights: Optional[List[float]] = Field(None, description="Recombination weights, default equal")
    kappa_m: float = Field(1.0, gt=0, description="Learning rate of the mean")
    kappa_sigma: float = Field(1.0, gt=0, description="Learning rate of the step-size")
    objective: str = Field("sphere", description="Catalog objective name")
    objective_params: Dict[str, float] = Field(default_factory=dict)
    q_samples: int = Field(20000, ge=1000, description="Monte-Carlo samples for Q when not exact")
    q_seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_selection(self) -> "XnesParams":
        if self.mu > self.lam:
            raise ValueError(f"mu={self.mu} must not exceed lambda={self.lam}")
        if self.weights is None:
            self.weights = [1.0 / self.mu] * self.mu
        if len(self.weights) != self.mu:
            raise ValueError(f"Expected {self.mu} weights, got {len(self.weights)}")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"Weights must sum to 1, got {sum(self.weights)}")
        return self


@dataclass(frozen=True)
class SelectionOutcome:
    """Ranking S of the lambda candidates and the mu selected steps."""

    permutation: np.ndarray
    selected: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return self.selected.reshape(-1)


class XnesChain(ChainModel):
    """Normalized xNES chain Z_{k+1} = F_xNES(Z_k, W_{k+1}) on a scaling-invariant objective."""

    name = "xnes"
    supports_autodiff = True

    def __init__(self, params: XnesParams, objective: Optional[ObjectiveFn] = None):
        super().__init__(n=params.n, p=params.n * params.mu, m=params.n * params.lam)
        self.params = params
        self.objective = objective or get_objective(params.objective, **params.objective_params)
        self.weights = np.asarray(params.weights, dtype=float)
        self.q = QEvaluator(self.objective, params.n, params.q_samples, params.q_seed)
        self._log_coefficient = float(gammaln(params.lam + 1) - gammaln(params.lam - params.mu + 1))

    def step(self, z, w, xp=np):
        n = self.n
        blocks = xp.reshape(w, (self.params.mu, n))
        weights = xp.asarray(self.weights)
        numerator = z + self.params.kappa_m * (weights @ blocks)
        exponent = self.params.kappa_sigma / (2 * n) * xp.sum(weights * (xp.sum(blocks * blocks, axis=1) - n))
        return numerator * xp.exp(-exponent)

    def log_step_change(self, w) -> float:
        """ln(sigma_{k+1} / sigma_k) = (kappa_sigma / 2n) sum beta_i (|w^i|^2 - n)."""
        blocks = np.asarray(w, dtype=float).reshape(self.params.mu, self.n)
        return float(self.params.kappa_sigma / (2 * self.n)
                     * np.sum(self.weights * (np.sum(blocks * blocks, axis=1) - self.n)))

    def select(self, z, u) -> SelectionOutcome:
        """Rank the candidates z + u^i by f, ties in natural index order, keep the first mu."""
        u = np.asarray(u, dtype=float).reshape(self.params.lam, self.n)
        values = self.objective(np.asarray(z, dtype=float) + u)
        permutation = np.argsort(values, kind="stable")
        return SelectionOutcome(permutation=permutation, selected=u[permutation[: self.params.mu]])

    def sample_control(self, z, rng):
        return self.select(z, rng.standard_normal((self.params.lam, self.n))).flat

    def sample_control_batch(self, z, count, rng):
        u = rng.standard_normal((count, self.params.lam, self.n))
        values = self.objective(np.asarray(z, dtype=float) + u)
        order = np.argsort(values, axis=1, kind="stable")[:, : self.params.mu]
        return np.take_along_axis(u, order[:, :, None], axis=1).reshape(count, self.p)

    def log_density_batch(self, z, ws):
        z = np.asarray(z, dtype=float).reshape(self.n)
        mu, lam = self.params.mu, self.params.lam
        blocks = np.asarray(ws, dtype=float).reshape(-1, mu, self.n)
        out = self._log_coefficient + normal_logpdf(blocks.reshape(blocks.shape[0], -1))
        if mu > 1:
            values = self.objective(z + blocks)
            ordered = np.all(np.diff(values, axis=1) > 0, axis=1)
            out = np.where(ordered, out, -np.inf)
        if lam > mu:
            out = out + (lam - mu) * self.q.log_survival(z, blocks[:, -1, :])
        return out

    def log_density(self, z, w):
        return float(self.log_density_batch(z, np.asarray(w, dtype=float).reshape(1, -1))[0])

    def _tied(self, z, w) -> np.ndarray:
        blocks = np.asarray(w, dtype=float).reshape(self.params.mu, self.n)
        values = self.objective(np.asarray(z, dtype=float) + blocks)
        _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
        return counts[inverse] > 1

    def check_differentiable(self, z, w):
        if self.params.mu > 1 and np.any(self._tied(z, w)):
            raise DifferentiationError(
                "Selected steps tie in f-value; F_xNES is only differentiated where the ranking is unambiguous"
            )

    def break_ties(self, z, w, rng):
        if self.params.mu == 1:
            return w
        tied = self._tied(z, w)
        if not np.any(tied):
            return w
        blocks = np.asarray(w, dtype=float).reshape(self.params.mu, self.n).copy()
        blocks[tied] += TIE_JITTER * rng.standard_normal((int(tied.sum()), self.n))
        return blocks.reshape(-1)

    def kill_block(self, y, radius: float, rng: np.random.Generator, attempts: int = 8,
                   max_norm: float = 200.0) -> Optional[np.ndarray]:
        """One control block in O_y^1 sending y into B(0, radius).

        F_xNES(y, w) -> 0 as |w| grows, so rank lambda candidates of
        (slightly different) norms r by f and grow r until the image is close
        enough to zero.
        """
        y = np.asarray(y, dtype=float)
        for _ in range(attempts):
            r = 1.0
            while r <= max_norm:
                directions = rng.standard_normal((self.params.lam, self.n))
                directions /= np.linalg.norm(directions, axis=1, keepdims=True)
                scales = r * (1.0 + 0.1 * rng.random(self.params.lam))
                w = self.select(y, directions * scales[:, None]).flat
                if np.linalg.norm(self.step(y, w)) < radius and self.log_density(y, w) > -np.inf:
                    return w
                r *= 1.25
        return None

    def path_hint(self, y, center, radius, k, rng):
        """Sampled prefix of k - 1 steps, then one large step onto a neighborhood of zero."""
        if np.any(np.asarray(center, dtype=float) != 0.0):
            return None
        state = np.asarray(y, dtype=float)
        blocks = []
        for _ in range(k - 1):
            w = self.sample_control(state, rng)
            blocks.append(w)
            state = np.asarray(self.step(state, w), dtype=float)
        kill = self.kill_block(state, radius, rng)
        if kill is None:
            return None
        blocks.append(kill)
        return np.vstack(blocks)


def selection_density(params: XnesParams, z, w, objective: Optional[ObjectiveFn] = None) -> float:
    """Density of the mu selected steps among lambda ranked standard normal steps.

    mu = 1: lambda (1 - Q(w))^(lambda-1) p_N(w); mu > 1:
    lambda!/(lambda-mu)! 1{f(z+w^1) < ... < f(z+w^mu)} (1 - Q(w^mu))^(lambda-mu) prod p_N(w^i),
    accumulated in log-space.
    """
    return XnesChain(params, objective).density(np.asarray(z, dtype=float), np.asarray(w, dtype=float))


def selection_normalization(params: XnesParams, z, samples: int, seed: int,
                            objective: Optional[ObjectiveFn] = None) -> Tuple[float, float]:
    """Monte-Carlo total mass of the selection density, sampling blocks from the normal product.

    Returns (mean, standard error); the mean should be 1.
    """
    chain = XnesChain(params, objective)
    rng = np.random.default_rng(seed)
    ws = rng.standard_normal((samples, chain.p))
    z = np.asarray(z, dtype=float)
    ratios = np.exp(chain.log_density_batch(z, ws) - normal_logpdf(ws))
    return float(ratios.mean()), float(ratios.std(ddof=1) / np.sqrt(samples))


def make_random_walk(n: int = 1) -> RandomWalk:
    """Create the additive random walk.

    Args:
        n: State dimension

    Returns:
        RandomWalk with standard normal increments
    """
    return RandomWalk(n)


def make_selection_walk(f: Optional[ObjectiveFn] = None, q_samples: int = 20000, q_seed: int = 0) -> SelectionWalk:
    """Create the one-dimensional selection walk.

    Args:
        f: Objective ranking the two candidate steps, f(x) = x^2 when omitted
        q_samples: Monte-Carlo samples for the win probability of non-sphere objectives
        q_seed: Seed of those samples

    Returns:
        SelectionWalk; a warning is logged when f does not have negligible level sets
    """
    if f is not None and not f.levels_negligible:
        logger.warning(f"Objective {f.name} is not flagged with negligible level sets; the density may be wrong")
    return SelectionWalk(f, q_samples, q_seed)


def make_xnes_chain(params: XnesParams, objective: Optional[ObjectiveFn] = None) -> XnesChain:
    """Create the normalized xNES chain.

    Args:
        params: Dimension, population, weights and learning rates
        objective: Objective overriding the catalog entry named in params

    Returns:
        XnesChain
    """
    return XnesChain(params, objective)


def load_external_model(factory: str, **params) -> ChainModel:
    """Build a model from a 'package.module:callable' reference.

    Args:
        factory: 'package.module:callable' returning a ChainModel
        **params: Keyword arguments for the callable (``model.params`` in a run config)

    Returns:
        The model the callable built

    Raises:
        ValueError: If the reference is malformed, rejects params or does not yield a ChainModel
    """
    module_name, _, attribute = factory.partition(":")
    if not module_name or not attribute:
        raise ValueError(f"External model factory must look like 'package.module:callable', got {factory!r}")
    try:
        module = importlib.import_module(module_name)
        builder = getattr(module, attribute)
    except (ImportError, AttributeError) as e:
        raise ValueError(f"Cannot load external model factory {factory!r}: {e}")
    try:
        model = builder(**params)
    except TypeError as e:
        raise ValueError(f"model.params {sorted(params)} do not fit external factory {factory!r}: {e}")
    if not isinstance(model, ChainModel):
        raise ValueError(f"External factory {factory!r} returned {type(model).__name__}, not a ChainModel")
    return model


def create_model(kind: str, **kwargs) -> ChainModel:
    """Factory function to create a chain model based on kind.

    Args:
        kind: 'random-walk', 'selection-walk', 'xnes' or 'external'
        **kwargs: Additional arguments for the model

    Returns:
        Configured chain model

    Raises:
        ValueError: If kind is invalid
    """
    if kind == "random-walk":
        return make_random_walk(kwargs.get("n", 1))
    elif kind == "selection-walk":
        objective = get_objective(kwargs.get("objective", "sphere"), **kwargs.get("objective_params", {}))
        return make_selection_walk(objective, kwargs.get("q_samples", 20000), kwargs.get("q_seed", 0))
    elif kind == "xnes":
        return make_xnes_chain(XnesParams(**kwargs))
    elif kind == "external":
        return load_external_model(kwargs["factory"], **kwargs.get("params", {}))
    else:
        raise ValueError(f"Invalid model kind: {kind}. Must be 'random-walk', 'selection-walk', 'xnes' or 'external'")
