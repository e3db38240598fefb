"""Deterministic control model underlying a chain Phi_{k+1} = F(Phi_k, alpha(Phi_k, U_{k+1})).

Holds the model abstraction plus the extended transition map S_x^k, the
extended density p_x^k and the k-steps-path predicate that the rest of the
package consumes.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


class VerificationError(Exception):
    """Base class for errors raised by the verification toolkit."""
    pass


class ModelInputError(VerificationError, ValueError):
    """Raised when states or controls do not fit the model."""
    pass


class ChainModel(ABC):
    """Abstract chain model: step map F, control sampler alpha(x, U) and density p_x(w).

    Subclasses implement ``step`` against an array namespace ``xp`` so the same
    code runs on numpy arrays and, when ``supports_autodiff`` is set, on jax
    tracers for forward-mode differentiation.
    """

    name: str = "model"
    supports_autodiff: bool = False

    def __init__(self, n: int, p: int, m: int, density_positivity_threshold: float = 0.0):
        """Initialize model dimensions.

        Args:
            n: State dimension
            p: Control block dimension
            m: Raw noise dimension
            density_positivity_threshold: Density cut tau deciding membership in O_x^1
        """
        for label, value in (("n", n), ("p", p), ("m", m)):
            if int(value) != value or value < 1:
                raise ModelInputError(f"Model dimension {label} must be a positive integer, got {value}")
        if not np.isfinite(density_positivity_threshold) or density_positivity_threshold < 0:
            raise ModelInputError(
                f"density_positivity_threshold must be nonnegative, got {density_positivity_threshold}"
            )
        self.n = int(n)
        self.p = int(p)
        self.m = int(m)
        self.density_positivity_threshold = float(density_positivity_threshold)

    @abstractmethod
    def step(self, x, w, xp=np):
        """Evaluate F(x, w)."""
        pass

    @abstractmethod
    def sample_control(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw a control block distributed as alpha(x, U_1)."""
        pass

    @abstractmethod
    def log_density(self, x: np.ndarray, w: np.ndarray) -> float:
        """Log of the density representative p_x(w); -inf where it vanishes."""
        pass

    def sample_control_batch(self, x: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` iid control blocks at x, shape (count, p)."""
        return np.array([self.sample_control(x, rng) for _ in range(count)], dtype=float).reshape(count, self.p)

    def density(self, x: np.ndarray, w: np.ndarray) -> float:
        """Density p_x(w), exponentiated from the log form.

        Args:
            x: State
            w: Control block

        Returns:
            p_x(w); 0.0 outside the support or where the density underflows
        """
        return float(np.exp(self.log_density(x, w)))

    def log_density_batch(self, x: np.ndarray, ws: np.ndarray) -> np.ndarray:
        """Log-densities of a stack of control blocks ``ws`` of shape (M, p) at state x."""
        return np.array([self.log_density(x, w) for w in ws], dtype=float)

    def path_hint(self, y: np.ndarray, center: np.ndarray, radius: float, k: int,
                  rng: np.random.Generator) -> Optional[np.ndarray]:
        """Analytic guess of a k-steps path from y into B(center, radius), or None."""
        return None

    def check_differentiable(self, x: np.ndarray, w: np.ndarray) -> None:
        """Raise if F should not be differentiated at (x, w)."""
        return None

    def break_ties(self, x: np.ndarray, w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Return w nudged off any selection tie at state x."""
        return w


class CallableModel(ChainModel):
    """Chain model assembled from plain callables.

    Either ``log_density_fn`` or ``density_fn`` must be given. When
    ``supports_autodiff`` is True, ``step_fn`` is called as ``step_fn(x, w, xp)``.
    """

    def __init__(
        self,
        n: int,
        p: int,
        step_fn: Callable,
        sampler_fn: Callable[[np.ndarray, np.random.Generator], np.ndarray],
        log_density_fn: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
        density_fn: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
        m: Optional[int] = None,
        name: str = "callable",
        density_positivity_threshold: float = 0.0,
        hint_fn: Optional[Callable] = None,
        supports_autodiff: bool = False,
    ):
        super().__init__(n, p, m if m is not None else p, density_positivity_threshold)
        if log_density_fn is None and density_fn is None:
            raise ModelInputError("CallableModel needs log_density_fn or density_fn")
        self.name = name
        self.supports_autodiff = supports_autodiff
        self._step_fn = step_fn
        self._sampler_fn = sampler_fn
        self._log_density_fn = log_density_fn
        self._density_fn = density_fn
        self._hint_fn = hint_fn

    def step(self, x, w, xp=np):
        """Call step_fn, passing the array namespace only to autodiff-aware callables."""
        if self.supports_autodiff:
            return self._step_fn(x, w, xp)
        return self._step_fn(x, w)

    def sample_control(self, x, rng):
        """Call sampler_fn and reshape its draw to one block of size p."""
        return np.asarray(self._sampler_fn(x, rng), dtype=float).reshape(self.p)

    def log_density(self, x, w):
        """Log-density from log_density_fn, or the log of density_fn.

        Raises:
            ModelInputError: If density_fn returns a negative value
        """
        if self._log_density_fn is not None:
            return float(self._log_density_fn(x, w))
        value = float(self._density_fn(x, w))
        if value < 0:
            raise ModelInputError(f"Density evaluator returned a negative value {value}")
        with np.errstate(divide="ignore"):
            return float(np.log(value))

    def path_hint(self, y, center, radius, k, rng):
        """Delegate to hint_fn; None when no hint function was given."""
        if self._hint_fn is None:
            return None
        return self._hint_fn(y, center, radius, k, rng)


def as_state(model: ChainModel, x) -> np.ndarray:
    """Validate and convert a state vector."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape != (model.n,):
        raise ModelInputError(f"State has dimension {arr.size}, model {model.name} expects n={model.n}")
    if not np.all(np.isfinite(arr)):
        raise ModelInputError(f"State has non-finite entries: {arr}")
    return arr


def as_block(model: ChainModel, w) -> np.ndarray:
    """Validate and convert a control block."""
    arr = np.asarray(w, dtype=float).reshape(-1)
    if arr.shape != (model.p,):
        raise ModelInputError(f"Control block has dimension {arr.size}, model {model.name} expects p={model.p}")
    if not np.all(np.isfinite(arr)):
        raise ModelInputError(f"Control block has non-finite entries: {arr}")
    return arr


def as_sequence(model: ChainModel, ws, allow_empty: bool = False) -> np.ndarray:
    """Validate a control sequence and return it as a (k, p) array.

    A flat array whose length is a multiple of p is read block by block.
    """
    arr = np.asarray(ws, dtype=float)
    if arr.ndim <= 1:
        if arr.size % model.p != 0:
            raise ModelInputError(
                f"Flattened control sequence of length {arr.size} is not a multiple of p={model.p}"
            )
        arr = arr.reshape(-1, model.p)
    if arr.ndim != 2 or arr.shape[1] != model.p:
        raise ModelInputError(f"Control sequence has shape {arr.shape}, expected (k, {model.p})")
    if arr.shape[0] == 0 and not allow_empty:
        raise ModelInputError("Control sequence must contain at least one block")
    if not np.all(np.isfinite(arr)):
        raise ModelInputError("Control sequence has non-finite entries")
    return arr


def step(model: ChainModel, x, w) -> np.ndarray:
    """Return F(x, w)."""
    x = as_state(model, x)
    w = as_block(model, w)
    return np.asarray(model.step(x, w), dtype=float).reshape(model.n)


def trajectory(model: ChainModel, x, ws) -> List[np.ndarray]:
    """States S_x^0, ..., S_x^k visited along a control sequence."""
    state = as_state(model, x)
    blocks = as_sequence(model, ws, allow_empty=True)
    states = [state]
    for w in blocks:
        state = np.asarray(model.step(state, w), dtype=float).reshape(model.n)
        states.append(state)
    return states


def extended_transition(model: ChainModel, x, ws, allow_empty: bool = False) -> np.ndarray:
    """Extended transition map S_x^k(w_1, ..., w_k), a left fold of ``step``.

    With ``allow_empty`` an empty sequence returns x (the S_x^0 convention).
    """
    as_sequence(model, ws, allow_empty=allow_empty)
    return trajectory(model, x, ws)[-1]


def extended_log_density(model: ChainModel, x, ws) -> float:
    """log p_x^k(ws), the sum of log p_{S_x^{i-1}}(w_i); stops at the first -inf factor."""
    blocks = as_sequence(model, ws)
    state = as_state(model, x)
    total = 0.0
    for w in blocks:
        factor = model.log_density(state, w)
        if not factor > -np.inf:
            return -np.inf
        total += factor
        state = np.asarray(model.step(state, w), dtype=float).reshape(model.n)
    return float(total)


def extended_density(model: ChainModel, x, ws) -> float:
    """Extended density p_x^k(ws) (may underflow to 0 for long sequences; see the log form)."""
    return float(np.exp(extended_log_density(model, x, ws)))


def in_control_set(model: ChainModel, x, ws) -> bool:
    """Membership of ws in O_x^k, i.e. p_x^k(ws) > tau."""
    log_value = extended_log_density(model, x, ws)
    tau = model.density_positivity_threshold
    if tau == 0.0:
        return bool(log_value > -np.inf)
    return bool(log_value > np.log(tau))


def is_path(model: ChainModel, y, ws, center, radius: float) -> bool:
    """Whether ws is a k-steps path from y into the open ball B(center, radius)."""
    if not radius > 0:
        raise ModelInputError(f"Target radius must be positive, got {radius}")
    target = as_state(model, center)
    if not in_control_set(model, y, ws):
        return False
    end = extended_transition(model, y, ws)
    return bool(np.linalg.norm(end - target) < radius)


def sample_sequence(model: ChainModel, x, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw k control blocks from the sampler along the trajectory they generate from x."""
    state = as_state(model, x)
    blocks = np.empty((k, model.p))
    for i in range(k):
        w = np.asarray(model.sample_control(state, rng), dtype=float).reshape(model.p)
        w = model.break_ties(state, w, rng)
        blocks[i] = w
        state = np.asarray(model.step(state, w), dtype=float).reshape(model.n)
    return blocks
