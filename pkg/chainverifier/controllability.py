"""Jacobians of F, the generalized controllability matrix and its numeric rank."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from chainverifier.control_model import (
    ChainModel,
    VerificationError,
    as_block,
    as_sequence,
    as_state,
    in_control_set,
    sample_sequence,
    trajectory,
)
from chainverifier.models import ForwardAccessibilityReport, RankReport, RankWitness

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-8
FD_STEP = 1e-6
BORDERLINE_FACTOR = 100.0

FORWARD = "forward"
FINITE_DIFFERENCE = "finite-difference"

_JAX = None


class DifferentiationError(VerificationError):
    """Raised when F cannot or must not be differentiated at a point."""
    pass


class NumericRankError(VerificationError):
    """Raised when the singular value decomposition does not converge."""
    pass


class InvalidWitnessError(VerificationError):
    """Raised when a rank witness lies outside the control set O_x^k."""
    pass


def _load_jax():
    """Import jax lazily with 64-bit floats; None when it is not installed."""
    global _JAX
    if _JAX is None:
        try:
            import jax
            jax.config.update("jax_enable_x64", True)
            import jax.numpy as jnp
            _JAX = (jax, jnp)
        except ImportError:
            logger.warning("jax is not installed, falling back to central finite differences")
            _JAX = False
    return _JAX or None


def resolve_method(model: ChainModel, method: str = "auto") -> str:
    """Pick the differentiation route for a model.

    Args:
        model: Model to differentiate
        method: 'auto', 'forward' or 'finite-difference'

    Returns:
        The concrete method name

    Raises:
        DifferentiationError: If forward mode is requested but unavailable
    """
    if method == FINITE_DIFFERENCE:
        return FINITE_DIFFERENCE
    if method not in ("auto", FORWARD):
        raise ValueError(f"Invalid differentiation method: {method}. Must be 'auto', 'forward' or 'finite-difference'")
    available = model.supports_autodiff and _load_jax() is not None
    if method == FORWARD and not available:
        raise DifferentiationError(f"Forward-mode differentiation unavailable for model {model.name}")
    return FORWARD if available else FINITE_DIFFERENCE


def central_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray], point: np.ndarray) -> np.ndarray:
    """Jacobian of fn at point by central differences with h = max(1e-6, 1e-6 |coordinate|)."""
    point = np.asarray(point, dtype=float)
    columns = []
    for i in range(point.size):
        h = max(FD_STEP, FD_STEP * abs(point[i]))
        plus = point.copy()
        minus = point.copy()
        plus[i] += h
        minus[i] -= h
        diff = np.asarray(fn(plus), dtype=float) - np.asarray(fn(minus), dtype=float)
        columns.append(diff.reshape(-1) / (2.0 * h))
    return np.column_stack(columns)


def _jacobian(model: ChainModel, x, w, wrt: str, method: str, strict: bool) -> np.ndarray:
    x = as_state(model, x)
    w = as_block(model, w)
    if strict:
        model.check_differentiable(x, w)
    method = resolve_method(model, method)

    if method == FORWARD:
        jax, jnp = _load_jax()
        if wrt == "x":
            jac = jax.jacfwd(lambda a: model.step(a, jnp.asarray(w), xp=jnp))(jnp.asarray(x))
        else:
            jac = jax.jacfwd(lambda b: model.step(jnp.asarray(x), b, xp=jnp))(jnp.asarray(w))
        jac = np.asarray(jac, dtype=float)
    elif wrt == "x":
        jac = central_difference_jacobian(lambda a: model.step(a, w), x)
    else:
        jac = central_difference_jacobian(lambda b: model.step(x, b), w)

    cols = model.n if wrt == "x" else model.p
    jac = jac.reshape(model.n, cols)
    if not np.all(np.isfinite(jac)):
        raise DifferentiationError(f"Non-finite derivative of F with respect to {wrt} at x={x}, w={w}")
    return jac


def jacobian_x(model: ChainModel, x, w, method: str = "auto", strict: bool = True) -> np.ndarray:
    """dF/dx at (x, w), an n x n matrix."""
    return _jacobian(model, x, w, "x", method, strict)


def jacobian_w(model: ChainModel, x, w, method: str = "auto", strict: bool = True) -> np.ndarray:
    """dF/dw at (x, w), an n x p matrix."""
    return _jacobian(model, x, w, "w", method, strict)


@dataclass(frozen=True)
class ControllabilityMatrix:
    """C_x^k along a control sequence; column block i is A_{k-1}...A_i B_{i-1}."""

    mat: np.ndarray
    base_point: np.ndarray
    sequence: np.ndarray
    method: str

    @property
    def rows(self) -> int:
        return self.mat.shape[0]

    @property
    def cols(self) -> int:
        return self.mat.shape[1]


def controllability_matrix(model: ChainModel, x, ws, method: str = "auto",
                           strict: bool = True) -> ControllabilityMatrix:
    """Assemble the generalized controllability matrix C_x^k(ws).

    A_j and B_j are the Jacobians of F at (S_x^j, w_{j+1}). Products are
    accumulated right to left so every A is evaluated once.
    """
    x = as_state(model, x)
    blocks = as_sequence(model, ws)
    method = resolve_method(model, method)
    states = trajectory(model, x, blocks)
    k = len(blocks)

    column_blocks: List[Optional[np.ndarray]] = [None] * k
    product = np.eye(model.n)
    for i in range(k, 0, -1):
        b = jacobian_w(model, states[i - 1], blocks[i - 1], method, strict)
        column_blocks[i - 1] = product @ b
        if i > 1:
            a = jacobian_x(model, states[i - 1], blocks[i - 1], method, strict)
            product = product @ a

    return ControllabilityMatrix(
        mat=np.hstack(column_blocks),
        base_point=x,
        sequence=blocks,
        method=method,
    )


def numeric_rank(mat, rel_tol: float = DEFAULT_RANK_TOL, method: Optional[str] = None) -> RankReport:
    """Count singular values above rel_tol * sigma_max.

    Raises:
        ValueError: If rel_tol is not positive
        NumericRankError: If the SVD does not converge
    """
    if not rel_tol > 0:
        raise ValueError(f"Relative rank tolerance must be positive, got {rel_tol}")
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    rows, cols = mat.shape
    if mat.size == 0:
        singular_values = np.zeros(0)
    else:
        try:
            singular_values = np.linalg.svd(mat, compute_uv=False)
        except np.linalg.LinAlgError as e:
            raise NumericRankError(f"SVD did not converge: {e}") from e

    sigma_max = float(singular_values[0]) if singular_values.size else 0.0
    if sigma_max == 0.0:
        rank = 0
        borderline = False
    else:
        cut = rel_tol * sigma_max
        rank = int(np.sum(singular_values > cut))
        near = (singular_values > cut / BORDERLINE_FACTOR) & (singular_values < cut * BORDERLINE_FACTOR)
        borderline = bool(np.any(near))

    if borderline:
        logger.warning(f"Borderline numeric rank {rank}: singular values {singular_values} near cut {rel_tol}")

    return RankReport(
        singular_values=[float(s) for s in singular_values],
        numeric_rank=rank,
        tolerance=rel_tol,
        rows=rows,
        cols=cols,
        full_rank=rank == rows,
        borderline=borderline,
        method=method,
    )


def rank_witness(model: ChainModel, x, ws, rel_tol: float = DEFAULT_RANK_TOL,
                 method: str = "auto") -> RankWitness:
    """Rank report of C_x^k(ws) for a witness sequence that must lie in O_x^k.

    Raises:
        InvalidWitnessError: If ws is outside the control set
    """
    blocks = as_sequence(model, ws)
    if not in_control_set(model, x, blocks):
        raise InvalidWitnessError(
            f"Witness sequence is outside the control set O_x^{len(blocks)}: density is not above the threshold"
        )
    cmat = controllability_matrix(model, x, blocks, method=method)
    report = numeric_rank(cmat.mat, rel_tol, method=cmat.method)
    return RankWitness(
        base_point=[float(v) for v in cmat.base_point],
        sequence=[[float(v) for v in block] for block in cmat.sequence],
        report=report,
    )


def rank_condition(model: ChainModel, x, ws, rel_tol: float = DEFAULT_RANK_TOL,
                   method: str = "auto") -> bool:
    """Whether rank C_x^k(ws) = n for a witness in O_x^k."""
    return rank_witness(model, x, ws, rel_tol, method).rank_ok


def find_rank_witness(model: ChainModel, x, k_max: int = 3, tries: int = 16,
                      rel_tol: float = DEFAULT_RANK_TOL, seed: int = 0,
                      method: str = "auto") -> Optional[RankWitness]:
    """Search sampled control sequences at x for a full-rank controllability matrix.

    Returns the first full-rank witness, else the witness of highest rank
    found, else None when no sampled sequence fell inside the control set.
    """
    x = as_state(model, x)
    best: Optional[RankWitness] = None
    for k in range(1, k_max + 1):
        for attempt in range(tries):
            rng = np.random.default_rng((seed, k, attempt))
            blocks = sample_sequence(model, x, k, rng)
            if not in_control_set(model, x, blocks):
                continue
            try:
                witness = rank_witness(model, x, blocks, rel_tol, method)
            except DifferentiationError as e:
                logger.warning(f"Skipping sampled witness: {e}")
                continue
            if witness.rank_ok:
                logger.info(f"Rank witness found at k={k}: rank {witness.report.numeric_rank}")
                return witness
            if best is None or witness.report.numeric_rank > best.report.numeric_rank:
                best = witness
    logger.warning(f"No full-rank witness found at x={x} up to k={k_max}")
    return best


def check_forward_accessibility(model: ChainModel, states: Sequence, k_max: int = 3, tries: int = 16,
                                rel_tol: float = DEFAULT_RANK_TOL, seed: int = 0,
                                method: str = "auto") -> ForwardAccessibilityReport:
    """Sampled check of 'for every x there are k and w in O_x^k with rank C_x^k(w) = n'."""
    witnesses = []
    for index, state in enumerate(states):
        witness = find_rank_witness(model, state, k_max, tries, rel_tol, seed + index, method)
        witnesses.append(witness if witness is not None and witness.rank_ok else None)
    all_ok = all(w is not None for w in witnesses)
    logger.info(f"Forward accessibility over {len(witnesses)} states: all_full_rank={all_ok}")
    return ForwardAccessibilityReport(
        states=[[float(v) for v in as_state(model, s)] for s in states],
        witnesses=witnesses,
        all_full_rank=all_ok,
        k_max=k_max,
    )
