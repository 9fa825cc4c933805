# distribution_lab.py
"""
Comparison of the family distribution with the random model.

The limiting distribution F_eps is realized twice: by Monte Carlo samples
and by inverting the characteristic function. Every bound compared here has
an ineffective constant, so reports carry ratios and trends, not verdicts.
"""

import logging
import math
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from discriminants import character_average, enumerate_family
from errors import CutoffError, DomainError
from lfun import evaluate_family, family_moment
from models import (
    BridgeRow,
    DensityCurve,
    DiscrepancyRow,
    EmpiricalDistribution,
    LogDerivValue,
    ModelConfig,
    ModelSampleBatch,
    MomentRow,
    SampleSource,
    TruncationParams,
    benchmark_pair,
)
from random_model import (
    charfn_curve,
    euler_form_moment,
    exact_moment,
    expected_Xn,
    mc_moment,
    moment_truncation_gap,
    sample_L,
)

logger = logging.getLogger(__name__)

INVERSION_TOLERANCE = 1e-12
DENSITY_STEP_TOLERANCE = 1e-7
MAX_SIMPSON_INTERVALS = 1 << 15
# most negative density value accepted as quadrature noise
DENSITY_FLOOR = -1e-6


def empirical_cdf(
    samples: Sequence[float],
    source: SampleSource,
    total_count: Optional[int] = None,
) -> EmpiricalDistribution:
    """
    Sorted copy of the samples with an O(log n) right-continuous CDF.

    Args:
        samples: Nonempty sample values
        source: Family or model
        total_count: Denominator, when excluded entries still count

    Raises:
        DomainError: On empty input
    """
    data = np.sort(np.asarray(samples, dtype=np.float64))
    if data.shape[0] == 0:
        raise DomainError("empirical CDF of an empty sample")
    return EmpiricalDistribution(data, source, total_count or int(data.shape[0]))


def model_orientation(value: float) -> float:
    """
    Map L'/L(1/2 + eps, chi_D) onto the orientation of the model series.

    The model sums Lambda(n) X_n / n^s with a plus sign, so it describes
    sum Lambda(n) chi_D(n) / n^s = -L'/L.
    """
    return -value


def family_distribution(values: Sequence[LogDerivValue]) -> EmpiricalDistribution:
    """Unflagged family values in model orientation, flagged entries kept in the denominator."""
    kept = [model_orientation(v.value) for v in values if not v.flagged]
    if not kept:
        raise DomainError("every value of the sweep is flagged")
    return empirical_cdf(kept, SampleSource.FAMILY, total_count=len(values))


def model_distribution(batch: ModelSampleBatch) -> EmpiricalDistribution:
    return empirical_cdf(batch.samples, SampleSource.MODEL)


def ks_distance(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """
    Exact sup |F_a - F_b| over the union of jump points.

    Both CDFs are step functions, so the supremum is attained at a jump.
    """
    if a.count == 0 or b.count == 0:
        raise DomainError("KS distance needs two nonempty distributions")
    jumps = np.concatenate([a.sorted_samples, b.sorted_samples])
    return float(np.max(np.abs(a.cdf(jumps) - b.cdf(jumps))))


def find_inversion_cutoff(
    epsilon: float,
    prime_cutoff: int,
    tolerance: float = INVERSION_TOLERANCE,
    start: float = 1.0,
    limit: float = 1e4,
) -> float:
    """
    Smallest doubling of `start` where |phi| stays below tolerance on [T, 2T].

    Raises:
        CutoffError: If no such T is found below `limit`
    """
    tau = start
    while tau <= limit:
        window = np.linspace(tau, 2.0 * tau, 33)
        if np.all(np.abs(charfn_curve(window, epsilon, prime_cutoff).values) < tolerance):
            return tau
        tau *= 2.0
    raise CutoffError(f"|phi| does not fall below {tolerance} before tau={limit}")


def _inversion_values(grid: np.ndarray, cutoff: float, intervals: int, epsilon: float, prime_cutoff: int) -> np.ndarray:
    taus = np.linspace(0.0, cutoff, intervals + 1)
    phi = charfn_curve(taus, epsilon, prime_cutoff).values
    phase = np.outer(grid, taus)
    # Re(exp(-i tau t) phi(tau)); phi(-tau) = conj(phi(tau)) folds [-T, T] onto [0, T]
    integrand = np.cos(phase) * phi.real + np.sin(phase) * phi.imag
    return simpson(integrand, x=taus, axis=1) / math.pi


def density_from_charfn(
    epsilon: float,
    grid: Sequence[float],
    cutoff: Optional[float] = None,
    prime_cutoff: int = 10**5,
    intervals: int = 512,
) -> DensityCurve:
    """
    Density M_eps(t) = (1/pi) int_0^T Re(exp(-i tau t) phi(tau)) d tau on a grid.

    Composite Simpson on [0, T]; the step is halved until the sup change
    falls below 1e-7.

    Args:
        epsilon: Offset from the critical line
        grid: Increasing abscissae
        cutoff: Inversion cutoff T; searched for when None
        prime_cutoff: Largest prime in the characteristic function
        intervals: Initial number of Simpson intervals (even)

    Raises:
        CutoffError: If |phi(T)| is not below 1e-12
    """
    grid = np.asarray(grid, dtype=np.float64)
    if cutoff is None:
        cutoff = find_inversion_cutoff(epsilon, prime_cutoff)
    else:
        edge = abs(charfn_curve([cutoff], epsilon, prime_cutoff).values[0])
        if edge >= INVERSION_TOLERANCE:
            raise CutoffError(f"|phi({cutoff})| = {edge:.3e} is not below {INVERSION_TOLERANCE}")

    n = intervals + intervals % 2
    values = _inversion_values(grid, cutoff, n, epsilon, prime_cutoff)
    change = math.inf
    while n < MAX_SIMPSON_INTERVALS:
        n *= 2
        refined = _inversion_values(grid, cutoff, n, epsilon, prime_cutoff)
        change = float(np.max(np.abs(refined - values)))
        values = refined
        logger.debug(f"Density with {n} intervals, sup change {change:.3e}")
        if change < DENSITY_STEP_TOLERANCE:
            break
    else:
        logger.warning(
            f"Density not converged at {n} intervals: sup change {change:.3e} above {DENSITY_STEP_TOLERANCE}"
        )
    lowest = float(values.min())
    if lowest < DENSITY_FLOOR:
        logger.warning(f"Density dips to {lowest:.3e} below {DENSITY_FLOOR} on the grid")
    logger.info(f"Density inverted on {grid.shape[0]} points, T={cutoff}, {n} intervals")
    return DensityCurve(grid=grid, values=values, cutoff=float(cutoff), intervals=n)


def density_cdf_gap(density: DensityCurve, model: EmpiricalDistribution) -> float:
    """Sup gap between the cumulative density and the Monte Carlo CDF on the grid."""
    return float(np.max(np.abs(density.cdf() - model.cdf(density.grid))))


def tail_frequency(values: Sequence[LogDerivValue], bound: int, epsilon: float) -> float:
    """
    Share of the family with unflagged |value| >= (log N / log log N)^(1/2 - eps).
    """
    if not values:
        return 0.0
    _, scale = benchmark_pair(bound, epsilon)
    hits = sum(1 for v in values if not v.flagged and abs(v.value) >= scale)
    return hits / len(values)


def min_abs_value(values: Sequence[LogDerivValue]) -> Tuple[int, float]:
    """
    The unflagged entry closest to zero.

    Returns:
        (discriminant, |value|)
    """
    kept = [v for v in values if not v.flagged]
    if not kept:
        raise DomainError("no unflagged values to minimize over")
    best = min(kept, key=lambda v: abs(v.value))
    return best.discriminant, abs(best.value)


def small_value_share(values: Sequence[LogDerivValue], eta: float) -> float:
    """Psi_N(eta) / |F(N)|: share of the family with unflagged |value| <= eta."""
    if not values:
        return 0.0
    return sum(1 for v in values if not v.flagged and abs(v.value) <= eta) / len(values)


def model_small_value_probability(model: EmpiricalDistribution, eta: float) -> float:
    """P(L_eps in [-eta, eta]) from an empirical model distribution."""
    below = np.searchsorted(model.sorted_samples, -eta, side="left")
    upto = np.searchsorted(model.sorted_samples, eta, side="right")
    return float(upto - below) / model.total_count


def moment_exponent(epsilon: float) -> float:
    """eps^2 (eps + 3) / 12, the power saving in the moment comparison."""
    return epsilon ** 2 * (epsilon + 3.0) / 12.0


def moment_benchmark(k: int, bound: int, epsilon: float) -> float:
    """log N / N^(eps^2 (eps + 3) / (12 k))."""
    return math.log(bound) / bound ** (moment_exponent(epsilon) / k)


def discrepancy_rows(
    sweeps: Mapping[int, Sequence[LogDerivValue]],
    model: EmpiricalDistribution,
    epsilon: float,
) -> List[DiscrepancyRow]:
    """One discrepancy row per family bound, ascending."""
    rows = []
    for bound in sorted(sweeps):
        values = sweeps[bound]
        ks = ks_distance(family_distribution(values), model)
        benchmark, _ = benchmark_pair(bound, epsilon)
        rows.append(DiscrepancyRow(
            bound=bound,
            family_size=len(values),
            flagged=sum(v.flagged for v in values),
            ks=ks,
            benchmark=benchmark,
            ratio=ks / benchmark,
        ))
        logger.info(f"N={bound}: KS={ks:.5f}, benchmark={benchmark:.5f}")
    return rows


def discrepancy_report(
    bounds: Sequence[int],
    epsilon: float,
    params_for: Callable[[int], TruncationParams],
    model_config: ModelConfig,
    samples: int = 10**5,
    threads: int = 1,
    evaluate: Callable[..., List[LogDerivValue]] = evaluate_family,
    sample: Callable[..., ModelSampleBatch] = sample_L,
) -> List[DiscrepancyRow]:
    """
    KS distance between the family and model CDFs for each N, with the
    benchmark (log log N / log N)^(1/2 + eps).

    Args:
        bounds: Increasing family bounds
        epsilon: Offset from the critical line
        params_for: Truncation policy per bound
        model_config: Random model regime
        samples: Monte Carlo sample count
        threads: Thread budget
        evaluate: Family sweep function, called as evaluate(N, params, threads=...)
        sample: Model sampler, called as sample(model_config, samples, threads)
    """
    if list(bounds) != sorted(set(bounds)):
        raise DomainError(f"bounds must be strictly increasing, got {list(bounds)}")
    model = model_distribution(sample(model_config, samples, threads))
    sweeps = {n: evaluate(n, params_for(n), threads=threads) for n in bounds}
    return discrepancy_rows(sweeps, model, epsilon)


def trend_summary(rows: Sequence[DiscrepancyRow]) -> Dict[str, object]:
    """Trend facts of a discrepancy report: decreasing KS and the largest ratio."""
    ks = [row.ks for row in rows]
    return {
        "ks_strictly_decreasing": all(b < a for a, b in zip(ks, ks[1:])),
        "max_ratio": max((row.ratio for row in rows), default=0.0),
        "rows": len(rows),
    }


def moment_rows(
    k_values: Sequence[int],
    values: Sequence[LogDerivValue],
    bound: int,
    params: TruncationParams,
    batch: ModelSampleBatch,
) -> List[MomentRow]:
    """
    Per k: family moment of -L'/L, exact model moment at the same lambda with its truncation
    gap (the growth of that moment when lambda is quadrupled), exact Euler-form moment at P, Monte Carlo moment, gap^(1/k) and
    the benchmark log N / N^(eps^2 (eps + 3) / (12 k)).
    """
    epsilon = params.epsilon
    rows = []
    for k in k_values:
        # (-L'/L)^k = (-1)^k (L'/L)^k
        family = (-1) ** k * family_moment(k, values)
        exact = exact_moment(k, epsilon, params.lambda_value)
        mc = mc_moment(k, batch)
        rows.append(MomentRow(
            k=k,
            bound=bound,
            family_moment=family,
            exact_moment=exact,
            truncation_gap=moment_truncation_gap(k, epsilon, params.lambda_value),
            euler_moment=euler_form_moment(k, epsilon, batch.config.prime_cutoff),
            mc_moment=mc.mean,
            mc_stderr=mc.stderr,
            gap_root=abs(family - exact) ** (1.0 / k),
            benchmark=moment_benchmark(k, bound, epsilon),
        ))
        logger.info(f"k={k}: family={family:.5f}, model={exact:.5f}, MC={mc.mean:.5f}+-{mc.stderr:.5f}")
    return rows


def moment_compare(
    k_values: Sequence[int],
    bound: int,
    epsilon: float,
    params: TruncationParams,
    model_config: ModelConfig,
    samples: int = 10**5,
    threads: int = 1,
    k_max: int = 6,
    evaluate: Callable[..., List[LogDerivValue]] = evaluate_family,
    sample: Callable[..., ModelSampleBatch] = sample_L,
) -> List[MomentRow]:
    """
    Moment comparison table for one family bound.

    Raises:
        DomainError: If some k exceeds k_max
    """
    if any(k > k_max for k in k_values):
        raise DomainError(f"moments are compared up to k_max={k_max}")
    if params.epsilon != epsilon or model_config.epsilon != epsilon:
        raise DomainError("truncation and model regimes must share epsilon")
    values = evaluate(bound, params, threads=threads)
    batch = sample(model_config, samples, threads)
    return moment_rows(k_values, values, bound, params, batch)


def bridge_rows(n_values: Sequence[int], bounds: Sequence[int]) -> List[BridgeRow]:
    """
    |E_N(X_n) - E(X_n)| N^(1/2) / (n^(1/4) log n) for n >= 2 and each N.
    """
    rows = []
    for bound in bounds:
        family = enumerate_family(bound)
        for n in n_values:
            if n < 2:
                continue
            average = character_average(n, family)
            expected = expected_Xn(n)
            scale = n ** 0.25 * math.log(n) / math.sqrt(bound)
            rows.append(BridgeRow(
                n=n,
                bound=bound,
                average=average,
                expected=expected,
                normalized_gap=abs(average - expected) / scale,
            ))
    return rows
