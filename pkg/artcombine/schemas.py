from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Union
import logging
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from artcombine.config import settings
from artcombine.correlation import CorrelationMatrix

logger = logging.getLogger(__name__)


class Method(str, Enum):
    FISHER = "fisher"
    SIDAK = "sidak"
    BONFERRONI = "bonferroni"
    SIMES = "simes"
    RTP = "rtp"
    ART = "art"
    ARTP = "artp"
    ARTA = "arta"


class PValueVector(BaseModel):
    """Per-test p-values with the declared total number of tests L

    When fewer than L values are given they are the k smallest, ascending.
    """

    values: List[float] = Field(..., min_length=1, description="p-values in (0, 1]")
    L: int = Field(..., ge=1, description="Total number of tests")
    clamped: bool = Field(default=False, description="Some values were raised to the floor")

    @field_validator("values")
    @classmethod
    def _in_unit_interval(cls, values: List[float]) -> List[float]:
        for i, value in enumerate(values):
            if not math.isfinite(value) or value < 0.0 or value > 1.0:
                raise ValueError(f"p-value #{i + 1} = {value} is outside [0, 1]")
        return values

    @model_validator(mode="after")
    def _clamp_and_check_head(self) -> "PValueVector":
        if len(self.values) > self.L:
            raise ValueError(f"{len(self.values)} p-values supplied but L = {self.L}")
        if self.is_head and any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("A truncated head of p-values must be sorted ascending")

        floor = settings.pvalue_floor
        if any(v < floor for v in self.values):
            logger.warning(f"Clamping p-values below {floor} to the floor")
            self.values = [max(v, floor) for v in self.values]
            self.clamped = True
        return self

    @property
    def is_head(self) -> bool:
        return len(self.values) < self.L

    @property
    def count(self) -> int:
        return len(self.values)

    def sorted_values(self) -> List[float]:
        return sorted(self.values)

    def head(self, k: int) -> List[float]:
        """The k smallest values, ascending"""
        if k > len(self.values):
            raise ValueError(f"k = {k} exceeds the {len(self.values)} available p-values")
        return self.sorted_values()[:k]

    @classmethod
    def full(cls, values) -> "PValueVector":
        values = [float(v) for v in values]
        return cls(values=values, L=len(values))


class TruncationSpec(BaseModel):
    """Truncation point k out of L tests"""

    k: int = Field(..., ge=1)
    L: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _k_within_L(self) -> "TruncationSpec":
        if self.k > self.L:
            raise ValueError(f"k = {self.k} exceeds L = {self.L}")
        return self


class CombinedResult(BaseModel):
    """Method tag, statistic value, combined p-value and diagnostics"""

    method: Method
    statistic: float
    p_combined: float = Field(..., ge=0.0, le=1.0)
    diagnostics: Dict[str, Any] = Field(default_factory=dict)


class AdaptiveSpec(BaseModel):
    """Candidate truncation points with partial-sum weights"""

    candidate_ks: List[int] = Field(..., min_length=1)
    weights: List[float] = Field(..., min_length=1)
    L: int = Field(..., ge=1)
    mvn_target_se: float = Field(default_factory=lambda: settings.mvn_target_se, gt=0)

    @model_validator(mode="after")
    def _check(self) -> "AdaptiveSpec":
        ks = self.candidate_ks
        if ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError(f"Candidate truncation points must be strictly increasing and >= 1: {ks}")
        if ks[-1] > self.L:
            raise ValueError(f"Largest candidate k = {ks[-1]} exceeds L = {self.L}")
        if len(self.weights) < ks[-1]:
            raise ValueError(f"Need {ks[-1]} weights, got {len(self.weights)}")
        if any(w <= 0 for w in self.weights):
            raise ValueError("Weights must be positive")
        return self

    @property
    def max_k(self) -> int:
        return self.candidate_ks[-1]

    @classmethod
    def default(cls, k: int, L: int, weights: str = "equal", **kwargs) -> "AdaptiveSpec":
        """Candidates {1..k} with equal or sparse-signal weights"""
        if weights == "equal":
            lam = [1.0] * k
        elif weights == "sparse":
            lam = [math.sqrt(k / j) for j in range(1, k + 1)]
        else:
            raise ValueError(f"Unknown weight scheme '{weights}'")
        return cls(candidate_ks=list(range(1, k + 1)), weights=lam, L=L, **kwargs)


class MvnSpec(BaseModel):
    """Rectangle Pr(T_1 <= b_1, ..., T_d <= b_d) for T ~ MVN(0, R)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dimension: int = Field(..., ge=1)
    correlation: CorrelationMatrix
    upper_bounds: List[float]
    target_se: float = Field(default_factory=lambda: settings.mvn_target_se, gt=0)
    max_points: int = Field(default_factory=lambda: settings.mvn_max_points, ge=1000)

    @model_validator(mode="after")
    def _dimensions_agree(self) -> "MvnSpec":
        if self.correlation.order != self.dimension or len(self.upper_bounds) != self.dimension:
            raise ValueError(
                f"Dimension mismatch: dimension {self.dimension}, correlation order "
                f"{self.correlation.order}, {len(self.upper_bounds)} bounds"
            )
        return self


class MvnResult(BaseModel):
    probability: float
    se_estimate: float
    n_points: int
    converged: bool


class HeadSample(BaseModel):
    """k smallest of L uniform order statistics"""

    k: int = Field(..., ge=1)
    L: int = Field(..., ge=1)
    values: List[float]
    log_product: float

    @model_validator(mode="after")
    def _check(self) -> "HeadSample":
        if len(self.values) != self.k or self.k > self.L:
            raise ValueError(f"Head of {len(self.values)} values does not match k = {self.k}, L = {self.L}")
        if any(v < 0.0 or v > 1.0 for v in self.values):
            raise ValueError("Head values must lie in [0, 1]")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("Head values must be nondecreasing")
        return self


class DecorrelatedHead(BaseModel):
    """Head with the k-th value scaled by sigma, shuffled"""

    k: int
    L: int
    values: List[float]
    scaled_position: int = Field(..., description="Index of the sigma-scaled entry after shuffling")


class HaplotypeRow(BaseModel):
    pattern: str = Field(..., description="Allele pattern, 1 marks the counted allele")
    frequency: float = Field(..., ge=0.0, le=1.0)

    @field_validator("pattern")
    @classmethod
    def _binary(cls, pattern: str) -> str:
        pattern = pattern.strip()
        if not pattern or set(pattern) - {"0", "1"}:
            raise ValueError(f"Haplotype pattern '{pattern}' must be a string of 0/1")
        return pattern


class HaplotypeTable(BaseModel):
    """Haplotype patterns over n_snps SNPs with their frequencies"""

    n_snps: int = Field(..., ge=1)
    rows: List[HaplotypeRow] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check(self) -> "HaplotypeTable":
        patterns = [row.pattern for row in self.rows]
        bad = [p for p in patterns if len(p) != self.n_snps]
        if bad:
            raise ValueError(f"Pattern '{bad[0]}' does not have {self.n_snps} SNPs")
        if len(set(patterns)) != len(patterns):
            raise ValueError("Haplotype patterns must be distinct")
        total = sum(row.frequency for row in self.rows)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"Haplotype frequencies sum to {total:.8f}, expected 1")
        return self


class ConstantEffect(BaseModel):
    kind: Literal["constant"] = "constant"
    mu: float = 0.0


class UniformEffect(BaseModel):
    kind: Literal["uniform"] = "uniform"
    mu_lo: float
    mu_hi: float

    @model_validator(mode="after")
    def _ordered(self) -> "UniformEffect":
        if self.mu_hi < self.mu_lo:
            raise ValueError("mu_hi must not be below mu_lo")
        return self


class SparseEffect(BaseModel):
    kind: Literal["sparse"] = "sparse"
    fraction: float = Field(..., gt=0.0, le=1.0)
    mu: float


EffectLaw = Annotated[Union[ConstantEffect, UniformEffect, SparseEffect], Field(discriminator="kind")]


class IndependentSource(BaseModel):
    kind: Literal["independent"] = "independent"


class RandomCorrelationSource(BaseModel):
    kind: Literal["random"] = "random"
    rho: float = 0.5
    delta: float = Field(default=1.0, gt=0.0)


class FileCorrelationSource(BaseModel):
    kind: Literal["file"] = "file"
    path: str


CorrelationSource = Annotated[
    Union[IndependentSource, RandomCorrelationSource, FileCorrelationSource], Field(discriminator="kind")
]

STUDY_METHODS = ("rtp", "art", "artp", "arta", "simes", "fisher", "sidak")


class SimStudyConfig(BaseModel):
    """One simulation study cell"""

    B: int = Field(default_factory=lambda: settings.default_B, ge=1)
    L: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    effect_law: EffectLaw = Field(default_factory=ConstantEffect)
    correlation_source: CorrelationSource = Field(default_factory=IndependentSource)
    methods: List[str] = Field(default_factory=lambda: ["rtp", "art", "artp", "arta", "simes"])
    decorrelate_flag: bool = False
    resample_effects: bool = True
    redraw_correlation: bool = False
    seed: int = 0

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, methods: List[str]) -> List[str]:
        unknown = sorted(set(methods) - set(STUDY_METHODS))
        if unknown:
            raise ValueError(f"Unknown study methods: {unknown}")
        if not methods:
            raise ValueError("At least one method is required")
        return list(dict.fromkeys(methods))

    @model_validator(mode="after")
    def _k_within_L(self) -> "SimStudyConfig":
        if self.k > self.L:
            raise ValueError(f"k = {self.k} exceeds L = {self.L}")
        if self.redraw_correlation and self.correlation_source.kind != "random":
            raise ValueError("redraw_correlation needs a random correlation source")
        return self

    @property
    def correlated(self) -> bool:
        return self.correlation_source.kind != "independent"


class StudyRow(BaseModel):
    method: str
    variant: Literal["plain", "decorr"]
    rejection_rate: float
    se: float
    B: int
    seed: int
    k: int
    L: int
    alpha: float


class StudyReport(BaseModel):
    rows: List[StudyRow]
    performance: Dict[str, Any] = Field(default_factory=dict)

    def rate(self, method: str, variant: str = "plain") -> float:
        for row in self.rows:
            if row.method == method and row.variant == variant:
                return row.rejection_rate
        raise KeyError(f"No row for {method}/{variant}")

    def as_records(self) -> List[Dict[str, Any]]:
        return [row.model_dump() for row in self.rows]


class RunManifest(BaseModel):
    """Resolved invocation, echoed for reproducibility"""

    subcommand: str
    input_paths: Dict[str, Optional[str]] = Field(default_factory=dict)
    method: Optional[str] = None
    k: Optional[int] = None
    L: Optional[int] = None
    alpha: Optional[float] = None
    seed: Optional[int] = None
    B: Optional[int] = None
    output: Optional[str] = None
    options: Dict[str, Any] = Field(default_factory=dict)
    settings: Dict[str, Any] = Field(default_factory=dict)


class ArtaStatistic(BaseModel):
    """Partial sums of transformed p-values and the candidate-wise marginal p-values"""

    partial_sums: List[float]
    marginal_ps: List[float]
    min_p: float
    argmin_k: int
    z_clamped: bool = False
