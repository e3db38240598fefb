"""Decision table turning rank and attractivity evidence into a stability verdict."""

import logging
from typing import Optional, Sequence

from chainverifier.control_model import VerificationError
from chainverifier.models import (
    AttractivityCertificate,
    AttractivityKind,
    Conclusion,
    RankWitness,
    ReturnLengthSet,
    StabilityVerdict,
)

logger = logging.getLogger(__name__)

SMALL_SETS = {
    Conclusion.APERIODIC_PHI_IRREDUCIBLE_T_CHAIN: "every compact set is small",
    Conclusion.PHI_IRREDUCIBLE_T_CHAIN: "every compact set is petite",
    Conclusion.INCONCLUSIVE: "no statement about compact sets",
}

_GLOBAL_KINDS = (AttractivityKind.GLOBALLY, AttractivityKind.ATTAINABLE)
_STEADY_KINDS = (AttractivityKind.STEADILY_UNIFORM, AttractivityKind.STEADILY_FIXED_POINT)


class VerdictInputError(VerificationError, ValueError):
    """Raised when the evidence passed to the verdict refers to different candidates."""
    pass


def _same_candidate(candidate: Sequence[float], other: Sequence[float], label: str) -> None:
    if list(candidate) != list(other):
        raise VerdictInputError(f"Candidate mismatch: {label} is about {list(other)}, expected {list(candidate)}")


def assemble_verdict(rank: Optional[RankWitness],
                     globally: Optional[AttractivityCertificate] = None,
                     steadily: Optional[AttractivityCertificate] = None,
                     returns: Optional[ReturnLengthSet] = None,
                     candidate: Optional[Sequence[float]] = None) -> StabilityVerdict:
    """Apply the decision table.

    rank ok + steadily attracting -> aperiodic phi-irreducible T-chain;
    rank ok + globally attracting -> phi-irreducible T-chain; otherwise
    inconclusive. A steadily certificate also counts as globally attracting.
    Failure reports (or None) count as missing evidence.

    Raises:
        VerdictInputError: If the pieces of evidence are about different candidates
    """
    globally = globally if isinstance(globally, AttractivityCertificate) else None
    steadily = steadily if isinstance(steadily, AttractivityCertificate) else None
    if globally is not None and globally.kind not in _GLOBAL_KINDS:
        raise VerdictInputError(f"Expected a globally attracting certificate, got kind {globally.kind.value}")
    if steadily is not None and steadily.kind not in _STEADY_KINDS:
        raise VerdictInputError(f"Expected a steadily attracting certificate, got kind {steadily.kind.value}")

    sources = [
        ("rank witness", rank.base_point if rank is not None else None),
        ("globally certificate", globally.candidate if globally is not None else None),
        ("steadily certificate", steadily.candidate if steadily is not None else None),
        ("return lengths", returns.candidate if returns is not None else None),
    ]
    if candidate is None:
        candidate = next((point for _, point in sources if point is not None), None)
    if candidate is None:
        raise VerdictInputError("No candidate: supply it or at least one piece of evidence")
    candidate = [float(v) for v in candidate]
    for label, point in sources:
        if point is not None:
            _same_candidate(candidate, point, label)

    if globally is None and steadily is not None:
        globally = steadily.as_globally()

    rank_ok = rank is not None and rank.rank_ok
    if rank_ok and steadily is not None:
        conclusion = Conclusion.APERIODIC_PHI_IRREDUCIBLE_T_CHAIN
    elif rank_ok and globally is not None:
        conclusion = Conclusion.PHI_IRREDUCIBLE_T_CHAIN
    else:
        conclusion = Conclusion.INCONCLUSIVE

    period_lower_bound = returns.gcd if returns is not None and returns.gcd > 1 else None
    if period_lower_bound is not None and steadily is not None:
        logger.warning(f"Return lengths have gcd {period_lower_bound} although a steadily certificate exists")

    logger.info(f"Verdict for {candidate}: {conclusion.value}")
    return StabilityVerdict(
        candidate=candidate,
        rank_ok=rank_ok,
        rank_witness=rank,
        globally=globally,
        steadily=steadily,
        returns=returns,
        period_lower_bound=period_lower_bound,
        conclusion=conclusion,
        small_sets=SMALL_SETS[conclusion],
        borderline_rank=rank is not None and rank.report.borderline,
    )
