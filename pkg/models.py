# models.py
"""
Data models for quadlab.
Uses dataclasses for type safety and validation.
"""

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from errors import DomainError

UINT64_MAX = 2**64 - 1


class Command(Enum):
    """Subcommands of the batch front-end."""
    ENUMERATE = "enumerate"
    SWEEP = "sweep"
    SAMPLE = "sample"
    CHARFN = "charfn"
    DENSITY = "density"
    COMPARE = "compare"
    MOMENTS = "moments"
    TAILS = "tails"
    MINIMA = "minima"
    BRIDGE = "bridge"
    SMALLVALUES = "smallvalues"


class SampleSource(Enum):
    """Where an empirical distribution comes from."""
    FAMILY = "family"
    MODEL = "model"


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon}")


@dataclass(frozen=True)
class FundamentalDiscriminant:
    """
    A validated fundamental discriminant, the index of the family.

    Attributes:
        d: The discriminant itself (nonzero; d = 1 is allowed)
    """
    d: int

    def __post_init__(self) -> None:
        from discriminants import is_fundamental_discriminant
        if not is_fundamental_discriminant(self.d):
            raise DomainError(f"{self.d} is not a fundamental discriminant")

    @property
    def signum(self) -> int:
        return 1 if self.d > 0 else -1

    def __int__(self) -> int:
        return self.d


@dataclass(frozen=True)
class FamilySlice:
    """
    All fundamental discriminants with |d| <= bound, sorted by |d| then sign.

    Attributes:
        bound: The bound N
        members: Read-only int64 array of discriminants
        include_d1: Whether d = 1 was admitted
    """
    bound: int
    members: np.ndarray
    include_d1: bool = True

    def __post_init__(self) -> None:
        self.members.setflags(write=False)

    @property
    def count(self) -> int:
        return int(self.members.shape[0])

    def __len__(self) -> int:
        return self.count

    def density(self) -> float:
        """Share of integers up to the bound that are members (tends to 6/pi^2)."""
        return self.count / self.bound


@dataclass(frozen=True)
class TruncationParams:
    """
    Evaluation regime of the truncated Dirichlet polynomial.

    Attributes:
        epsilon: Offset from the critical line, s = 1/2 + epsilon
        lambda_value: Truncation length, an element of Z + 1/2, at least 2.5
        consistency_tol: Largest accepted gap between the values at lambda and 2*lambda;
            None derives it from the spread of the audited block of the polynomial
        audit_fraction: Share of the family audited for self-consistency
        large_value_factor: Multiple of the tail benchmark that flags a value
    """
    epsilon: float
    lambda_value: float
    consistency_tol: Optional[float] = None
    audit_fraction: float = 0.01
    large_value_factor: float = 4.0

    def __post_init__(self) -> None:
        _check_epsilon(self.epsilon)
        if self.lambda_value < 2.5 or (self.lambda_value - 0.5) != math.floor(self.lambda_value):
            raise DomainError(f"lambda must lie in Z + 1/2 and be >= 2.5, got {self.lambda_value}")
        if self.consistency_tol is not None and self.consistency_tol <= 0:
            raise DomainError(f"consistency tolerance must be positive, got {self.consistency_tol}")
        if not 0.0 <= self.audit_fraction <= 1.0:
            raise DomainError(f"audit fraction must lie in [0, 1], got {self.audit_fraction}")

    @property
    def s(self) -> float:
        return 0.5 + self.epsilon

    @property
    def cutoff(self) -> int:
        """Largest n included in the sum."""
        return int(self.lambda_value)

    @property
    def audit_lambda(self) -> float:
        """The doubled truncation length used by the self-consistency audit."""
        return 2.0 * self.lambda_value + 0.5

    @classmethod
    def for_bound(
        cls,
        bound: int,
        epsilon: float,
        exponent: float = 0.6,
        cap: int = 10**7,
        **kwargs,
    ) -> 'TruncationParams':
        """Default truncation policy: lambda = N^exponent rounded into Z + 1/2, capped."""
        base = min(int(math.floor(bound ** exponent)), cap)
        return cls(epsilon=epsilon, lambda_value=max(base, 2) + 0.5, **kwargs)


@dataclass(frozen=True)
class LogDerivValue:
    """
    L'/L(1/2 + epsilon, chi_D) estimated by the truncated Dirichlet polynomial.

    Attributes:
        discriminant: The discriminant D
        value: Estimated value
        lambda_used: Truncation length used
        consistency_gap: |value(lambda) - value(2*lambda)|, None when not audited
        flagged: Member of the computable exceptional set
    """
    discriminant: int
    value: float
    lambda_used: float
    consistency_gap: Optional[float] = None
    flagged: bool = False

    @property
    def audited(self) -> bool:
        return self.consistency_gap is not None


@dataclass(frozen=True)
class ModelConfig:
    """
    Random model regime.

    Attributes:
        epsilon: Offset from the critical line
        prime_cutoff: Largest prime P kept in the Euler form
        seed: 64-bit key of the counter-based generator
    """
    epsilon: float
    prime_cutoff: int = 10**5
    seed: int = 42

    def __post_init__(self) -> None:
        _check_epsilon(self.epsilon)
        if self.prime_cutoff < 2:
            raise DomainError(f"prime cutoff must be >= 2, got {self.prime_cutoff}")
        if not 0 <= self.seed <= UINT64_MAX:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def s(self) -> float:
        return 0.5 + self.epsilon


@dataclass(frozen=True)
class ModelSampleBatch:
    """
    Monte Carlo samples of the truncated random Euler product.

    Attributes:
        config: Model regime the samples were drawn under
        samples: float64 array of samples, sample i at index i
        tail_estimate: Second-moment size of the neglected primes p > P
    """
    config: ModelConfig
    samples: np.ndarray
    tail_estimate: float

    @property
    def count(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class MomentEstimate:
    """Monte Carlo moment of order k with jackknife standard errors."""
    k: int
    mean: float
    stderr: float
    abs_mean: float
    abs_stderr: float


@dataclass(frozen=True)
class CharFnCurve:
    """
    Sampled characteristic function of the random model.

    Attributes:
        taus: Abscissae
        values: Complex values of the truncated product
        tail_estimates: Bound on |log(neglected factors)| at each tau
    """
    epsilon: float
    prime_cutoff: int
    taus: np.ndarray
    values: np.ndarray
    tail_estimates: np.ndarray


@dataclass
class EmpiricalDistribution:
    """
    Sorted sample multiset with right-continuous CDF.

    total_count may exceed the number of samples when excluded entries
    still count in the denominator; the CDF then tops out below 1.
    """
    sorted_samples: np.ndarray
    source: SampleSource
    total_count: int = 0

    def __post_init__(self) -> None:
        if self.total_count == 0:
            self.total_count = int(self.sorted_samples.shape[0])

    @property
    def count(self) -> int:
        return int(self.sorted_samples.shape[0])

    def cdf(self, z):
        """Evaluate (#samples <= z) / total_count by binary search."""
        hits = np.searchsorted(self.sorted_samples, z, side="right")
        return hits / self.total_count


@dataclass(frozen=True)
class DensityCurve:
    """
    Density of the model recovered from its characteristic function.

    Attributes:
        grid: Increasing abscissae
        values: Density values on the grid
        cutoff: Inversion cutoff T
        intervals: Number of Simpson intervals on [0, T] at convergence
    """
    grid: np.ndarray
    values: np.ndarray
    cutoff: float
    intervals: int

    def total_mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid of the density, starting from 0 at the left end."""
        from scipy.integrate import cumulative_trapezoid
        return cumulative_trapezoid(self.values, self.grid, initial=0.0)


@dataclass(frozen=True)
class DiscrepancyRow:
    """One row of the discrepancy report."""
    bound: int
    family_size: int
    flagged: int
    ks: float
    benchmark: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MomentRow:
    """One row of the moment comparison report."""
    k: int
    bound: int
    family_moment: float
    exact_moment: float
    truncation_gap: float
    euler_moment: float
    mc_moment: float
    mc_stderr: float
    gap_root: float
    benchmark: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BridgeRow:
    """Family average of chi_D(n) against its orthogonality value."""
    n: int
    bound: int
    average: float
    expected: float
    normalized_gap: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunConfig:
    """
    Run configuration assembled from defaults, environment, config file and flags.

    Centralizes all configuration with type hints and defaults.
    """
    command: Command = Command.ENUMERATE

    # Arithmetic side
    epsilon: float = 0.25
    bound: int = 10**4
    bounds: List[int] = field(default_factory=lambda: [10**3, 10**4])
    include_d1: bool = True
    memory_budget_mb: int = 2048

    # Truncation policy
    lambda_value: Optional[float] = None
    lambda_exponent: float = 0.6
    lambda_cap: int = 10**7
    consistency_tol: Optional[float] = None
    audit_fraction: float = 0.01
    large_value_factor: float = 4.0
    k_max: int = 6

    # Random model
    prime_cutoff: int = 10**5
    samples: int = 10**5
    seed: int = 42

    # Characteristic function and density
    taus: List[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 5.0, 10.0])
    grid_min: float = -12.0
    grid_max: float = 12.0
    grid_points: int = 1201

    # Reports
    k_values: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    n_values: List[int] = field(default_factory=lambda: list(range(2, 51)))
    eta: float = 0.05

    # Runtime
    threads: int = 1
    out_dir: str = "out"

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    def truncation_for(self, bound: int) -> TruncationParams:
        """Truncation parameters for a family bound under this configuration."""
        extra = dict(
            consistency_tol=self.consistency_tol,
            audit_fraction=self.audit_fraction,
            large_value_factor=self.large_value_factor,
        )
        if self.lambda_value is not None:
            return TruncationParams(self.epsilon, self.lambda_value, **extra)
        return TruncationParams.for_bound(
            bound, self.epsilon, self.lambda_exponent, self.lambda_cap, **extra
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.epsilon, self.prime_cutoff, self.seed)

    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_min, self.grid_max, self.grid_points)


def benchmark_pair(bound: int, epsilon: float) -> Tuple[float, float]:
    """
    The two scales attached to a family bound.

    Returns:
        ((log log N / log N)^(1/2 + eps), (log N / log log N)^(1/2 - eps)),
        the discrepancy scale and the large-value scale
    """
    log_n = math.log(bound)
    loglog_n = math.log(log_n)
    return (loglog_n / log_n) ** (0.5 + epsilon), (log_n / loglog_n) ** (0.5 - epsilon)
