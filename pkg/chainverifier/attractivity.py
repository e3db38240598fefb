"""Path search and attractivity certificates.

A certificate is sampled evidence: every path it holds has been re-validated
with ``control_model.is_path``, but only finitely many origins and lengths
are ever tried. A failed search is reported as a value, never raised.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import qmc

from chainverifier.control_model import (
    ChainModel,
    ModelInputError,
    as_sequence,
    as_state,
    extended_log_density,
    extended_transition,
    in_control_set,
    is_path,
    sample_sequence,
)
from chainverifier.models import (
    AttractivityCertificate,
    AttractivityFailure,
    AttractivityKind,
    PathCertificate,
    ReturnLengthSet,
)
from chainverifier.periods import eventual_horizon, lengths_gcd

logger = logging.getLogger(__name__)

THREADS_ENV = "CHAINVERIFIER_THREADS"
DEFAULT_ORIGIN_COUNT = 32

AttractivityResult = Union[AttractivityCertificate, AttractivityFailure]


class SearchBudget(BaseModel):
    """Effort spent by find_path on one (origin, length) pair."""

    model_config = ConfigDict(extra="forbid", json_schema_extra={
        "example": {
            "restarts": 64,
            "refinement_iterations": 200,
            "shrink_factor": 0.5,
            "initial_step": 1.0,
            "min_step": 1e-12,
            "use_hints": True
        }
    })

    restarts: int = Field(64, ge=0, description="Random restarts drawn from the control sampler")
    refinement_iterations: int = Field(200, ge=0, description="Coordinate-descent sweeps per restart")
    shrink_factor: float = Field(0.5, gt=0, lt=1, description="Step multiplier after a sweep without progress")
    initial_step: float = Field(1.0, gt=0)
    min_step: float = Field(1e-12, gt=0)
    use_hints: bool = Field(True, description="Try the model's analytic path hint first")


def worker_count() -> int:
    """Thread count from CHAINVERIFIER_THREADS (default 1)."""
    raw = os.getenv(THREADS_ENV, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if count < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {count}")
    return count


def _map_ordered(fn: Callable, items: Sequence) -> List:
    threads = min(worker_count(), max(len(items), 1))
    if threads == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))


def default_origins(low: float, high: float, n: int, count: int = DEFAULT_ORIGIN_COUNT,
                    extremes: Sequence = ()) -> List[np.ndarray]:
    """Deterministic low-discrepancy origins in the box [low, high]^n plus user extremes."""
    if not high > low:
        raise ValueError(f"Origin box needs low < high, got [{low}, {high}]")
    points = qmc.Halton(d=n, scramble=False).random(count)
    origins = [np.asarray(p, dtype=float) for p in qmc.scale(points, [low] * n, [high] * n)]
    origins.extend(np.asarray(e, dtype=float).reshape(n) for e in extremes)
    return origins


def _certificate(model: ChainModel, y, ws, center, radius: float, source: str) -> Optional[PathCertificate]:
    if not is_path(model, y, ws, center, radius):
        return None
    blocks = as_sequence(model, ws)
    end = extended_transition(model, y, blocks)
    log_value = extended_log_density(model, y, blocks)
    return PathCertificate(
        origin=[float(v) for v in as_state(model, y)],
        sequence=[[float(v) for v in block] for block in blocks],
        target_center=[float(v) for v in as_state(model, center)],
        radius=radius,
        achieved_distance=float(np.linalg.norm(end - center)),
        log_density_value=log_value,
        density_value=float(np.exp(log_value)),
        threshold=model.density_positivity_threshold,
        source=source,
    )


def _distance(model: ChainModel, y, blocks, center) -> float:
    if not in_control_set(model, y, blocks):
        return np.inf
    return float(np.linalg.norm(extended_transition(model, y, blocks) - center))


def refine(model: ChainModel, y, blocks: np.ndarray, center, radius: float,
           budget: SearchBudget) -> np.ndarray:
    """Compass search on the flattened controls minimizing |S_y^k(ws) - center|.

    Moves leaving the control set are rejected; the step shrinks after a
    sweep without progress.
    """
    current = np.array(blocks, dtype=float)
    best = _distance(model, y, current, center)
    if not np.isfinite(best):
        return current
    step_size = budget.initial_step
    flat = current.reshape(-1)
    for _ in range(budget.refinement_iterations):
        if best < radius or step_size < budget.min_step:
            break
        improved = False
        for i in range(flat.size):
            for direction in (1.0, -1.0):
                trial = flat.copy()
                trial[i] += direction * step_size
                value = _distance(model, y, trial.reshape(current.shape), center)
                if value < best:
                    flat, best, improved = trial, value, True
                    break
        if not improved:
            step_size *= budget.shrink_factor
    return flat.reshape(current.shape)


def find_path(model: ChainModel, y, center, radius: float, k: int,
              budget: Optional[SearchBudget] = None, seed: int = 0,
              seed_key: Tuple[int, ...] = (0,)) -> Optional[PathCertificate]:
    """Search a k-steps path from y into B(center, radius).

    Tries the model's path hint, then random restarts sampled along the
    trajectory, each followed by local refinement. Restart r draws from
    ``default_rng((seed, *seed_key, k, r))``. Returns None when the budget is
    exhausted; that is absence of evidence, not a disproof.
    """
    if not radius > 0:
        raise ModelInputError(f"Target radius must be positive, got {radius}")
    if k < 1:
        raise ModelInputError(f"Path length k must be at least 1, got {k}")
    budget = budget or SearchBudget()
    y = as_state(model, y)
    center = as_state(model, center)

    if budget.use_hints:
        hint = model.path_hint(y, center, radius, k, np.random.default_rng((seed, *seed_key, k, budget.restarts)))
        if hint is not None:
            hint = as_sequence(model, hint)
            certificate = _certificate(model, y, hint, center, radius, "hint")
            if certificate is None:
                certificate = _certificate(model, y, refine(model, y, hint, center, radius, budget),
                                           center, radius, "refined")
            if certificate is not None:
                return certificate

    for restart in range(budget.restarts):
        rng = np.random.default_rng((seed, *seed_key, k, restart))
        blocks = sample_sequence(model, y, k, rng)
        certificate = _certificate(model, y, blocks, center, radius, "restart")
        if certificate is None:
            certificate = _certificate(model, y, refine(model, y, blocks, center, radius, budget),
                                       center, radius, "refined")
        if certificate is not None:
            return certificate

    logger.debug(f"No {k}-steps path from {y} into B({center}, {radius})")
    return None


def _vectors(model: ChainModel, points) -> List[List[float]]:
    return [[float(v) for v in as_state(model, p)] for p in points]


def certify_globally_attracting(model: ChainModel, x_star, origins: Sequence, epsilon: float, k_max: int,
                                budget: Optional[SearchBudget] = None, seed: int = 0) -> AttractivityResult:
    """For every origin, look for a path of some length k <= k_max into B(x_star, epsilon)."""
    if not origins:
        raise ModelInputError("At least one origin is required")
    if k_max < 1:
        raise ModelInputError(f"k_max must be at least 1, got {k_max}")
    x_star = as_state(model, x_star)
    origins = [as_state(model, o) for o in origins]

    def search(item):
        index, origin = item
        for k in range(1, k_max + 1):
            certificate = find_path(model, origin, x_star, epsilon, k, budget, seed, (0, index))
            if certificate is not None:
                return certificate
        return None

    found = _map_ordered(search, list(enumerate(origins)))
    paths = [c for c in found if c is not None]
    failures = [o for o, c in zip(origins, found) if c is None]
    if failures:
        logger.info(f"Globally attracting check failed for {len(failures)}/{len(origins)} origins")
        return AttractivityFailure(
            candidate=x_star.tolist(),
            kind=AttractivityKind.GLOBALLY,
            epsilon=epsilon,
            tested_origins=_vectors(model, origins),
            failures=_vectors(model, failures),
            paths=paths,
            horizon=k_max,
            reason=f"No path of length <= {k_max} found from {len(failures)} origin(s)",
        )
    logger.info(f"Globally attracting certificate for {x_star.tolist()} over {len(origins)} origins")
    return AttractivityCertificate(
        candidate=x_star.tolist(),
        kind=AttractivityKind.GLOBALLY,
        epsilon=epsilon,
        tested_origins=_vectors(model, origins),
        paths=paths,
        horizon=k_max,
    )


def certify_steadily_attracting(model: ChainModel, x_star, origins: Sequence, epsilon: float, T: int,
                                span: int = 8, budget: Optional[SearchBudget] = None,
                                seed: int = 0) -> AttractivityResult:
    """For every origin, look for a path of EVERY length T..T+span into B(x_star, epsilon).

    The finite span stands in for "every k >= T".
    """
    if span < 1:
        raise ModelInputError(f"span must be at least 1, got {span}")
    if T < 1:
        raise ModelInputError(f"T must be at least 1, got {T}")
    if not origins:
        raise ModelInputError("At least one origin is required")
    x_star = as_state(model, x_star)
    origins = [as_state(model, o) for o in origins]
    lengths = list(range(T, T + span + 1))

    def search(item):
        index, origin = item
        found = []
        for k in lengths:
            certificate = find_path(model, origin, x_star, epsilon, k, budget, seed, (0, index))
            if certificate is None:
                return found, False
            found.append(certificate)
        return found, True

    results = _map_ordered(search, list(enumerate(origins)))
    paths = [c for found, _ in results for c in found]
    failures = [o for o, (_, ok) in zip(origins, results) if not ok]
    if failures:
        logger.info(f"Steadily attracting check failed for {len(failures)}/{len(origins)} origins")
        return AttractivityFailure(
            candidate=x_star.tolist(),
            kind=AttractivityKind.STEADILY_UNIFORM,
            epsilon=epsilon,
            tested_origins=_vectors(model, origins),
            failures=_vectors(model, failures),
            paths=paths,
            horizon=T + span,
            lengths=lengths,
            reason=f"Some length in [{T}, {T + span}] has no path from {len(failures)} origin(s)",
        )
    logger.info(f"Steadily attracting certificate for {x_star.tolist()} with lengths {T}..{T + span}")
    return AttractivityCertificate(
        candidate=x_star.tolist(),
        kind=AttractivityKind.STEADILY_UNIFORM,
        epsilon=epsilon,
        tested_origins=_vectors(model, origins),
        paths=paths,
        horizon=T + span,
        lengths=lengths,
    )


def certify_fixed_point(model: ChainModel, x_star, tol: float, budget: Optional[SearchBudget] = None,
                        seed: int = 0) -> Optional[PathCertificate]:
    """Single control block w in O_{x*}^1 with |step(x*, w) - x*| < tol, or None.

    The zero block is tried before the search.
    """
    if not tol > 0:
        raise ModelInputError(f"Fixed-point tolerance must be positive, got {tol}")
    x_star = as_state(model, x_star)
    certificate = _certificate(model, x_star, np.zeros((1, model.p)), x_star, tol, "zero")
    if certificate is None:
        certificate = find_path(model, x_star, x_star, tol, 1, budget, seed, (1,))
    if certificate is None:
        logger.info(f"No fixed-point control found at {x_star.tolist()}")
    return certificate


def combine_fixed_point(globally: AttractivityCertificate, fixed_point: PathCertificate) -> AttractivityCertificate:
    """Steadily attracting certificate from a globally one plus a control that stays at x*."""
    if globally.kind not in (AttractivityKind.GLOBALLY, AttractivityKind.ATTAINABLE):
        raise ModelInputError(f"Expected a globally attracting certificate, got kind {globally.kind.value}")
    if globally.candidate != fixed_point.origin or fixed_point.target_center != fixed_point.origin:
        raise ModelInputError("Fixed-point path must start and end at the certified candidate")
    if fixed_point.length != 1:
        raise ModelInputError(f"Fixed-point path must have length 1, got {fixed_point.length}")
    return AttractivityCertificate(
        candidate=globally.candidate,
        kind=AttractivityKind.STEADILY_FIXED_POINT,
        epsilon=globally.epsilon,
        tested_origins=globally.tested_origins,
        paths=globally.paths,
        horizon=globally.horizon,
        fixed_point=fixed_point,
    )


def certify_attainable(model: ChainModel, x_star, origins: Sequence, k_max: int, tol: float = 1e-9,
                       budget: Optional[SearchBudget] = None, seed: int = 0) -> AttractivityResult:
    """Globally attracting search with a round-off radius: x* itself is hit from every origin."""
    result = certify_globally_attracting(model, x_star, origins, tol, k_max, budget, seed)
    return result.model_copy(update={"kind": AttractivityKind.ATTAINABLE})


def return_lengths(model: ChainModel, x_star, epsilon_return: float, k_max: int,
                   budget: Optional[SearchBudget] = None, seed: int = 0) -> ReturnLengthSet:
    """Lengths k <= k_max with a path from x* back into B(x*, epsilon_return)."""
    if k_max < 1:
        raise ModelInputError(f"k_max must be at least 1, got {k_max}")
    x_star = as_state(model, x_star)
    found = _map_ordered(
        lambda k: find_path(model, x_star, x_star, epsilon_return, k, budget, seed, (2,)),
        list(range(1, k_max + 1)),
    )
    paths = [c for c in found if c is not None]
    lengths = [c.length for c in paths]
    period = lengths_gcd(lengths)
    if not lengths:
        logger.warning(f"No return path to {x_star.tolist()} found up to k={k_max}; gcd reported as 0")
    else:
        logger.info(f"Return lengths {lengths} at {x_star.tolist()}, gcd {period}")
    return ReturnLengthSet(
        candidate=x_star.tolist(),
        lengths=lengths,
        gcd=period,
        epsilon_return=epsilon_return,
        k_max=k_max,
        eventual_horizon=eventual_horizon(lengths),
        paths=paths,
    )
