"""Serializable data models for certificates, verdicts and reports."""

from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

Vector = List[float]

VERDICT_CAVEAT = (
    "Certificates are sampled numerical evidence over finitely many origins, "
    "path lengths and control sequences; they are not proofs."
)


class RankReport(BaseModel):
    """Numeric rank of a matrix from its singular values."""

    singular_values: Vector = Field(..., description="Singular values in nonincreasing order")
    numeric_rank: int = Field(..., ge=0, description="Number of singular values above tolerance * sigma_max")
    tolerance: float = Field(..., gt=0, description="Relative tolerance used for the cut")
    rows: int = Field(..., ge=0)
    cols: int = Field(..., ge=0)
    full_rank: bool = Field(..., description="numeric_rank equals the number of rows (state dimension)")
    borderline: bool = Field(False, description="A singular value lies within a factor 100 of the cut")
    method: Optional[str] = Field(None, description="Differentiation method behind the matrix")

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "singular_values": [1.7320508075688772],
            "numeric_rank": 1,
            "tolerance": 1e-8,
            "rows": 1,
            "cols": 3,
            "full_rank": True,
            "borderline": False,
            "method": "forward"
        }
    })


class RankWitness(BaseModel):
    """Control sequence at a base point together with the rank of its controllability matrix."""

    base_point: Vector
    sequence: List[Vector]
    report: RankReport

    @property
    def rank_ok(self) -> bool:
        return self.report.full_rank


class PathCertificate(BaseModel):
    """Evidence that a concrete control sequence is a k-steps path into a ball."""

    origin: Vector
    sequence: List[Vector] = Field(..., description="Control blocks w_1..w_k")
    target_center: Vector
    radius: float = Field(..., gt=0)
    achieved_distance: float = Field(..., ge=0)
    log_density_value: float = Field(..., description="log p_y^k(sequence)")
    density_value: float = Field(..., ge=0, description="p_y^k(sequence); may underflow to 0, see log form")
    threshold: float = Field(..., ge=0, description="Density positivity threshold applied")
    source: str = Field(..., description="hint, restart or refined")

    @property
    def length(self) -> int:
        return len(self.sequence)


class AttractivityKind(str, Enum):
    GLOBALLY = "globally"
    STEADILY_UNIFORM = "steadily-uniform"
    STEADILY_FIXED_POINT = "steadily-fixed-point"
    ATTAINABLE = "attainable"


class AttractivityCertificate(BaseModel):
    """Every tested origin reached the neighborhood of the candidate."""

    status: Literal["certified"] = "certified"
    candidate: Vector
    kind: AttractivityKind
    epsilon: float = Field(..., gt=0)
    tested_origins: List[Vector]
    paths: List[PathCertificate]
    horizon: int = Field(..., ge=1, description="k_max, or T + span for the uniform variant")
    lengths: List[int] = Field(default_factory=list, description="Path lengths demanded from every origin")
    fixed_point: Optional[PathCertificate] = None
    failures: List[Vector] = Field(default_factory=list)

    def as_globally(self) -> "AttractivityCertificate":
        """Globally attracting certificate implied by a steadily attracting one."""
        if self.kind == AttractivityKind.GLOBALLY:
            return self
        first_paths = []
        seen = set()
        for path in self.paths:
            key = tuple(path.origin)
            if key not in seen:
                seen.add(key)
                first_paths.append(path)
        return AttractivityCertificate(
            candidate=self.candidate,
            kind=AttractivityKind.GLOBALLY,
            epsilon=self.epsilon,
            tested_origins=self.tested_origins,
            paths=first_paths,
            horizon=self.horizon,
        )


class AttractivityFailure(BaseModel):
    """Failure report: origins for which no path was found within the budget."""

    status: Literal["failed"] = "failed"
    candidate: Vector
    kind: AttractivityKind
    epsilon: float
    tested_origins: List[Vector]
    failures: List[Vector]
    paths: List[PathCertificate] = Field(default_factory=list, description="Paths found before giving up")
    horizon: int
    lengths: List[int] = Field(default_factory=list)
    reason: str = ""


class ReturnLengthSet(BaseModel):
    """Lengths k for which a verified return path x* -> B(x*, epsilon_return) exists."""

    candidate: Vector
    lengths: List[int] = Field(default_factory=list)
    gcd: int = Field(..., ge=0, description="0 when no return length was found")
    epsilon_return: float = Field(..., gt=0)
    k_max: int = Field(..., ge=1)
    eventual_horizon: Optional[int] = Field(
        None, description="Smallest t0 with every t >= t0 a sum of observed lengths (gcd 1 only)"
    )
    paths: List[PathCertificate] = Field(default_factory=list)


class Conclusion(str, Enum):
    PHI_IRREDUCIBLE_T_CHAIN = "phi-irreducible-T-chain"
    APERIODIC_PHI_IRREDUCIBLE_T_CHAIN = "aperiodic-phi-irreducible-T-chain"
    INCONCLUSIVE = "inconclusive"


class StabilityVerdict(BaseModel):
    """Conclusion assembled from the rank witness and attractivity evidence."""

    candidate: Vector
    rank_ok: bool
    rank_witness: Optional[RankWitness] = None
    globally: Optional[AttractivityCertificate] = None
    steadily: Optional[AttractivityCertificate] = None
    returns: Optional[ReturnLengthSet] = None
    period_lower_bound: Optional[int] = Field(
        None, description="gcd of return lengths when > 1, counter-evidence against aperiodicity"
    )
    conclusion: Conclusion
    small_sets: str = Field(..., description="What the conclusion says about compact sets")
    borderline_rank: bool = False
    caveat: str = VERDICT_CAVEAT


class ScalingCounterexample(BaseModel):
    x: Vector
    y: Vector
    rho: float


class ScalingInvarianceReport(BaseModel):
    """Spot-check of f(x) <= f(y) <=> f(x* + rho(x - x*)) <= f(x* + rho(y - x*))."""

    objective: str
    x_star: Vector
    trials: int
    passed: bool
    counterexamples: List[ScalingCounterexample] = Field(default_factory=list)


class DensityBin(BaseModel):
    left: float
    right: float
    count: int
    empirical: float
    analytic: float


class DensityCheckReport(BaseModel):
    """Histogram of sampled controls against the bin-averaged analytic density."""

    state: Vector
    coordinate: Optional[int] = Field(None, description="Marginal coordinate, None for scalar controls")
    samples: int
    l1_distance: float
    threshold: Optional[float] = None
    passed: Optional[bool] = None
    empty_bins: int
    bins: List[DensityBin]


class RateEstimate(BaseModel):
    """Two estimates of the xNES linear convergence rate lim (1/k) ln(sigma_k / sigma_0)."""

    per_iteration_log_step_ratio: float = Field(..., description="Route A: (X, sigma) chain")
    expectation_route: float = Field(..., description="Route B: occupation average on the normalized chain")
    se_log_step_ratio: float = Field(..., ge=0)
    se_expectation: float = Field(..., ge=0)
    iterations: int
    burn_in: int
    batches: int
    routes_agree: bool = Field(..., description="|A - B| <= 4 * sqrt(seA^2 + seB^2)")
    behaviour: str = Field(..., description="convergence, divergence or undecided")
    note: str = (
        "Route B replaces the invariant-measure expectation of the integral against p_z by a single "
        "occupation average over realized selected steps."
    )


class ReturnPeriodReport(BaseModel):
    """Empirical return times of a simulated chain into B(x*, epsilon)."""

    x_star: Vector
    epsilon: float
    steps: int
    return_times: List[int]
    gaps: List[int]
    gcd: int


class ForwardAccessibilityReport(BaseModel):
    """Sampled check that the rank condition holds somewhere from every tested state."""

    states: List[Vector]
    witnesses: List[Optional[RankWitness]]
    all_full_rank: bool
    k_max: int


class PathQueryResult(BaseModel):
    y: Vector
    center: Vector
    radius: float
    k: int
    found: bool
    certificate: Optional[PathCertificate] = None


class _RunReport(BaseModel):
    tool_version: str
    config: Dict[str, Any] = Field(..., description="Echo of the validated run config")
    wall_clock_seconds: float = Field(..., ge=0, description="Only field allowed to differ between identical runs")


class VerdictReport(_RunReport):
    """Everything `analyze` computed, plus the verdict."""

    verdict: StabilityVerdict
    globally_result: Union[AttractivityCertificate, AttractivityFailure] = Field(..., discriminator="status")
    steadily_result: Union[AttractivityCertificate, AttractivityFailure] = Field(..., discriminator="status")
    fixed_point: Optional[PathCertificate] = None
    returns: ReturnLengthSet
    rank_reports: List[RankReport] = Field(default_factory=list)


class DensityReport(_RunReport):
    checks: List[DensityCheckReport]
    all_passed: Optional[bool] = Field(None, description="None when no threshold was configured")


class RateReport(_RunReport):
    rate: RateEstimate


class PathsReport(_RunReport):
    results: List[PathQueryResult]
