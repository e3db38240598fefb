"""Objective functions ranked by the selection-based chains."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from chainverifier.models import ScalingCounterexample, ScalingInvarianceReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveFn:
    """Objective f: R^n -> R evaluated over the last axis of its argument.

    The flags are user assertions (hypotheses of the selection-density and
    convergence results), not facts the toolkit proves.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    levels_negligible: bool = True
    scaling_invariant: bool = False
    is_sphere: bool = False

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float))


def sphere() -> ObjectiveFn:
    """f(x) = |x|^2; Q is evaluated exactly through the chi-square distribution."""
    return ObjectiveFn("sphere", lambda x: np.sum(x * x, axis=-1), scaling_invariant=True, is_sphere=True)


def norm() -> ObjectiveFn:
    """f(x) = |x|."""
    # Same sublevel sets as the sphere, so the exact sphere Q evaluator applies.
    return ObjectiveFn("norm", lambda x: np.linalg.norm(x, axis=-1), scaling_invariant=True, is_sphere=True)


def ellipsoid(condition: float = 100.0) -> ObjectiveFn:
    """Axis-aligned ellipsoid with coefficients spread log-uniformly up to ``condition``."""

    def evaluate(x: np.ndarray) -> np.ndarray:
        n = x.shape[-1]
        exponents = np.arange(n) / (n - 1) if n > 1 else np.zeros(1)
        return np.sum(condition ** exponents * x * x, axis=-1)

    return ObjectiveFn("ellipsoid", evaluate, scaling_invariant=True)


def wavy_norm(amplitude: float = 2.0) -> ObjectiveFn:
    """f(x) = |x| + a sin|x|; radial profile is monotone, hence scaling-invariant, iff a <= 1."""

    def evaluate(x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x, axis=-1)
        return r + amplitude * np.sin(r)

    return ObjectiveFn("wavy_norm", evaluate, scaling_invariant=amplitude <= 1.0)


OBJECTIVES = {
    "sphere": sphere,
    "norm": norm,
    "ellipsoid": ellipsoid,
    "wavy_norm": wavy_norm,
}


def get_objective(name: str, **kwargs) -> ObjectiveFn:
    """Factory function returning a catalog objective by name.

    Raises:
        ValueError: If the name is unknown
    """
    try:
        factory = OBJECTIVES[name]
    except KeyError:
        raise ValueError(f"Invalid objective: {name}. Must be one of {sorted(OBJECTIVES)}")
    return factory(**kwargs)


def check_scaling_invariance(f: ObjectiveFn, x_star, trials: int, seed: int,
                             rho: Optional[float] = None, scale: float = 5.0,
                             max_counterexamples: int = 5) -> ScalingInvarianceReport:
    """Spot-check that comparisons of f survive scaling about x_star.

    Samples x, y ~ N(x_star, scale^2 I) and rho log-uniform in [1e-2, 1e2]
    (or the fixed ``rho``) and records triples where the comparison flips.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    x_star = np.asarray(x_star, dtype=float).reshape(-1)
    n = x_star.size
    rng = np.random.default_rng(seed)
    xs = x_star + scale * rng.standard_normal((trials, n))
    ys = x_star + scale * rng.standard_normal((trials, n))
    if rho is None:
        rhos = 10.0 ** rng.uniform(-2.0, 2.0, trials)
    else:
        rhos = np.full(trials, float(rho))

    before = f(xs) <= f(ys)
    after = f(x_star + rhos[:, None] * (xs - x_star)) <= f(x_star + rhos[:, None] * (ys - x_star))
    flipped = np.flatnonzero(before != after)

    counterexamples = [
        ScalingCounterexample(x=xs[i].tolist(), y=ys[i].tolist(), rho=float(rhos[i]))
        for i in flipped[:max_counterexamples]
    ]
    if flipped.size:
        logger.info(f"Objective {f.name} is not scaling-invariant about {x_star}: {flipped.size}/{trials} flips")
    return ScalingInvarianceReport(
        objective=f.name,
        x_star=x_star.tolist(),
        trials=trials,
        passed=flipped.size == 0,
        counterexamples=counterexamples,
    )
