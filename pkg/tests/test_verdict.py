"""Tests for the verdict decision table."""

from itertools import product

import pytest

from chainverifier.models import (
    VERDICT_CAVEAT,
    AttractivityCertificate,
    AttractivityFailure,
    AttractivityKind,
    Conclusion,
    RankReport,
    RankWitness,
    ReturnLengthSet,
)
from chainverifier.verdict import VerdictInputError, assemble_verdict

ORDER = {
    Conclusion.INCONCLUSIVE: 0,
    Conclusion.PHI_IRREDUCIBLE_T_CHAIN: 1,
    Conclusion.APERIODIC_PHI_IRREDUCIBLE_T_CHAIN: 2,
}


def _witness(full_rank=True, point=(0.0,)):
    report = RankReport(singular_values=[1.0 if full_rank else 0.0], numeric_rank=int(full_rank),
                        tolerance=1e-8, rows=1, cols=1, full_rank=full_rank)
    return RankWitness(base_point=list(point), sequence=[[0.1]], report=report)


def _certificate(kind, point=(0.0,)):
    return AttractivityCertificate(candidate=list(point), kind=kind, epsilon=0.1,
                                   tested_origins=[[1.0]], paths=[], horizon=3)


def _returns(lengths, gcd, point=(0.0,)):
    return ReturnLengthSet(candidate=list(point), lengths=lengths, gcd=gcd, epsilon_return=0.01, k_max=6)


@pytest.fixture
def globally():
    return _certificate(AttractivityKind.GLOBALLY)


@pytest.fixture
def steadily():
    return _certificate(AttractivityKind.STEADILY_UNIFORM)


def test_rank_and_steadily_is_aperiodic(steadily):
    """rank ok + steadily attracting gives an aperiodic phi-irreducible T-chain."""
    verdict = assemble_verdict(_witness(), steadily=steadily)
    assert verdict.conclusion == Conclusion.APERIODIC_PHI_IRREDUCIBLE_T_CHAIN
    assert verdict.small_sets == "every compact set is small"
    assert verdict.globally is not None
    assert verdict.caveat == VERDICT_CAVEAT


def test_rank_and_globally_is_irreducible(globally):
    """rank ok + globally attracting gives a phi-irreducible T-chain."""
    verdict = assemble_verdict(_witness(), globally=globally)
    assert verdict.conclusion == Conclusion.PHI_IRREDUCIBLE_T_CHAIN
    assert verdict.small_sets == "every compact set is petite"


def test_missing_rank_is_inconclusive(globally, steadily):
    """Attractivity alone proves nothing."""
    assert assemble_verdict(None, globally, steadily).conclusion == Conclusion.INCONCLUSIVE
    assert assemble_verdict(_witness(False), globally, steadily).conclusion == Conclusion.INCONCLUSIVE


def test_period_lower_bound_without_steadily():
    """gcd 2 and no steadily certificate: inconclusive with period bound 2."""
    verdict = assemble_verdict(_witness(), returns=_returns([2, 4, 6], 2))
    assert verdict.conclusion == Conclusion.INCONCLUSIVE
    assert verdict.period_lower_bound == 2


def test_gcd_one_gives_no_bound(steadily):
    """gcd 1 is not counter-evidence."""
    verdict = assemble_verdict(_witness(), steadily=steadily, returns=_returns([1, 2], 1))
    assert verdict.period_lower_bound is None


def test_failure_reports_count_as_missing():
    """A failure report never upgrades the conclusion."""
    failure = AttractivityFailure(candidate=[0.0], kind=AttractivityKind.GLOBALLY, epsilon=0.1,
                                  tested_origins=[[1.0]], failures=[[1.0]], horizon=3)
    verdict = assemble_verdict(_witness(), globally=failure)
    assert verdict.conclusion == Conclusion.INCONCLUSIVE
    assert verdict.globally is None


def test_candidate_mismatch_raises(globally):
    """Evidence about different candidates is an input error."""
    with pytest.raises(VerdictInputError, match="Candidate mismatch"):
        assemble_verdict(_witness(point=(1.0,)), globally=globally)
    with pytest.raises(VerdictInputError, match="Candidate mismatch"):
        assemble_verdict(_witness(), globally=globally, returns=_returns([1], 1, point=(2.0,)))


def test_wrong_certificate_kind_raises(steadily):
    """A steadily certificate passed as globally evidence is rejected."""
    with pytest.raises(VerdictInputError, match="globally"):
        assemble_verdict(_witness(), globally=steadily)


def test_no_evidence_needs_a_candidate():
    """Without evidence the candidate must be given."""
    with pytest.raises(VerdictInputError, match="No candidate"):
        assemble_verdict(None)
    assert assemble_verdict(None, candidate=[0.0]).conclusion == Conclusion.INCONCLUSIVE


def test_borderline_rank_is_surfaced():
    """The borderline flag of the rank report reaches the verdict."""
    witness = _witness()
    witness.report.borderline = True
    assert assemble_verdict(witness, candidate=[0.0]).borderline_rank


def test_removing_evidence_never_upgrades():
    """The decision table is monotone in every piece of evidence."""
    pieces = {
        "rank": _witness(),
        "globally": _certificate(AttractivityKind.GLOBALLY),
        "steadily": _certificate(AttractivityKind.STEADILY_FIXED_POINT),
    }

    def conclude(mask):
        chosen = {name: (value if keep else None) for (name, value), keep in zip(pieces.items(), mask)}
        return ORDER[assemble_verdict(chosen["rank"], chosen["globally"], chosen["steadily"],
                                      candidate=[0.0]).conclusion]

    masks = list(product([False, True], repeat=3))
    for full in masks:
        for partial in masks:
            if all(p <= f for p, f in zip(partial, full)):
                assert conclude(partial) <= conclude(full)
