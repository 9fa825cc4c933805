# lfun.py
"""
Values of L'/L(1/2 + epsilon, chi_D) from truncated Dirichlet polynomials.

(L'/L)^k(s, chi_D) is approximated by (-1)^k sum_{n <= lambda} Lambda_k(n) chi_D(n) / n^s,
where Lambda_k is the k-fold Dirichlet convolution of the von Mangoldt function.
Zeros are never computed; a value is flagged when it is implausibly large or
when doubling lambda moves it by more than the consistency tolerance.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from discriminants import enumerate_family
from errors import CutoffError, DomainError
from kernels import dirichlet_polynomials, set_thread_budget
from models import FamilySlice, FundamentalDiscriminant, LogDerivValue, TruncationParams, benchmark_pair

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 6
SWEEP_CHUNK = 4096
# automatic consistency tolerance, in block standard deviations
CONSISTENCY_SIGMAS = 6.0
MIN_SWEEP_BOUND = 3


def smallest_prime_factors(limit: int) -> np.ndarray:
    """Smallest prime factor of every n in 0..limit (0 for n < 2)."""
    spf = np.zeros(limit + 1, dtype=np.int64)
    for p in range(2, math.isqrt(limit) + 1):
        if spf[p] == 0:
            seg = spf[p * p::p]
            seg[seg == 0] = p
    rest = np.flatnonzero(spf == 0)
    rest = rest[rest >= 2]
    spf[rest] = rest
    return spf


def von_mangoldt_table(limit: int, spf: Optional[np.ndarray] = None) -> np.ndarray:
    """Lambda(n) for n in 0..limit."""
    if spf is None:
        spf = smallest_prime_factors(limit)
    table = np.zeros(limit + 1, dtype=np.float64)
    primes = np.flatnonzero(spf == np.arange(limit + 1))
    primes = primes[primes >= 2]
    for p in primes.tolist():
        log_p = math.log(p)
        q = p
        while q <= limit:
            table[q] = log_p
            q *= p
    return table


def von_mangoldt(n: int) -> float:
    """
    Lambda(n): log p if n = p^j for a prime p and j >= 1, else 0.

    Args:
        n: Positive integer

    Returns:
        The von Mangoldt value
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if n == 1:
        return 0.0
    p = next((q for q in range(2, math.isqrt(n) + 1) if n % q == 0), n)
    while n % p == 0:
        n //= p
    return math.log(p) if n == 1 else 0.0


def dirichlet_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Dirichlet convolution (a * b)(n) = sum_{de = n} a(d) b(e) on 0..M.

    Loops over the support of a; pass the sparser operand first.
    """
    size = min(a.shape[0], b.shape[0])
    limit = size - 1
    out = np.zeros(size, dtype=np.float64)
    for d in np.flatnonzero(a[:size]).tolist():
        if d == 0:
            continue
        reach = limit // d
        out[d::d][:reach] += a[d] * b[1:reach + 1]
    return out


class VonMangoldtTables:
    """
    Dense tables of Lambda_k on 0..limit, built once and then read-only.

    Lambda_k is obtained as Lambda * Lambda_{k-1}, extended lazily up to k_max.
    """

    def __init__(self, limit: int, k_max: int = DEFAULT_K_MAX):
        """
        Build the sieve and the k = 1 table.

        Args:
            limit: Largest n covered
            k_max: Largest convolution power that may be requested
        """
        if limit < 1:
            raise DomainError(f"table limit must be >= 1, got {limit}")
        self.limit = limit
        self.k_max = k_max
        self.spf = smallest_prime_factors(limit)
        self.spf.setflags(write=False)
        first = von_mangoldt_table(limit, self.spf)
        first.setflags(write=False)
        self._tables: Dict[int, np.ndarray] = {1: first}
        logger.info(f"von Mangoldt tables built up to {limit}")

    def table(self, k: int) -> np.ndarray:
        """The Lambda_k table, building missing powers on demand."""
        if not 1 <= k <= self.k_max:
            raise CutoffError(f"k={k} outside the stored range 1..{self.k_max}")
        for j in range(2, k + 1):
            if j not in self._tables:
                built = dirichlet_convolve(self._tables[1], self._tables[j - 1])
                built.setflags(write=False)
                self._tables[j] = built
                logger.debug(f"Lambda_{j} table built")
        return self._tables[k]

    def lambda_k(self, n: int, k: int) -> float:
        """
        Lambda_k(n), the k-fold convolution of Lambda at n.

        Raises:
            CutoffError: If n exceeds the table bound or k exceeds k_max
        """
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        if n > self.limit:
            raise CutoffError(f"n={n} exceeds the table bound {self.limit}")
        return float(self.table(k)[n])

    def weights(self, k: int, s: float, cutoff: int) -> np.ndarray:
        """(-1)^k Lambda_k(n) / n^s for n <= cutoff, as a row of length cutoff + 1."""
        if cutoff > self.limit:
            raise CutoffError(f"cutoff {cutoff} exceeds the table bound {self.limit}")
        n = np.arange(cutoff + 1, dtype=np.float64)
        n[0] = 1.0
        row = self.table(k)[: cutoff + 1] / n ** s
        row[0] = 0.0
        return -row if k % 2 else row

    def partial_sum(self, k: int, sigma: float, lambda_value: float) -> float:
        """sum_{n <= lambda} Lambda_k(n) / n^sigma."""
        cutoff = int(lambda_value)
        if cutoff > self.limit:
            raise CutoffError(f"lambda {lambda_value} exceeds the table bound {self.limit}")
        n = np.arange(1, cutoff + 1, dtype=np.float64)
        return math.fsum((self.table(k)[1: cutoff + 1] / n ** sigma).tolist())


def partial_sum_bound(k: int, sigma: float, lambda_value: float) -> float:
    """The growth scale (log lambda)^k lambda^(1 - sigma) of the partial sums."""
    return math.log(lambda_value) ** k * lambda_value ** (1.0 - sigma)


def principal_main_term(s: float, lambda_value: float) -> float:
    """
    lambda^(1 - s) / (1 - s), the pole contribution carried by the principal
    character's polynomial: sum_{n <= x} Lambda(n) / n^s = x^(1-s)/(1-s) - zeta'/zeta(s) + o(1).
    """
    return lambda_value ** (1.0 - s) / (1.0 - s)


def consistency_scale(tables: VonMangoldtTables, params: TruncationParams) -> float:
    """
    Standard deviation of value(2*lambda + 1/2) - value(lambda) when chi_D(n)
    behaves like independent signs: sqrt(sum_{lambda < n <= 2*lambda + 1/2} Lambda(n)^2 / n^(2s)).
    """
    low, high = params.cutoff, int(params.audit_lambda)
    if high > tables.limit:
        raise CutoffError(f"audit cutoff {high} exceeds the table bound {tables.limit}")
    n = np.arange(low + 1, high + 1, dtype=np.float64)
    block = tables.table(1)[low + 1: high + 1] ** 2 / n ** (2.0 * params.s)
    return math.sqrt(math.fsum(block.tolist()))


def consistency_tolerance(tables: VonMangoldtTables, params: TruncationParams) -> float:
    """The configured tolerance, or CONSISTENCY_SIGMAS block deviations when it is automatic."""
    if params.consistency_tol is not None:
        return params.consistency_tol
    return CONSISTENCY_SIGMAS * consistency_scale(tables, params)


def truncated_logderiv_pow(
    discriminant: FundamentalDiscriminant,
    k: int,
    params: TruncationParams,
    tables: Optional[VonMangoldtTables] = None,
) -> float:
    """
    (-1)^k sum_{n <= lambda} Lambda_k(n) chi_D(n) / n^(1/2 + eps).

    For k = 1 this is the estimate of L'/L(1/2 + eps, chi_D).

    Raises:
        CutoffError: If the tables do not cover lambda
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    cutoff = params.cutoff
    if tables is None:
        tables = VonMangoldtTables(cutoff, k_max=max(k, 1))
    row = tables.weights(k, params.s, cutoff)
    ds = np.array([int(discriminant)], dtype=np.int64)
    return float(dirichlet_polynomials(ds, row[np.newaxis, :], tables.spf[: cutoff + 1])[0, 0])


def power_consistency_gap(
    discriminant: FundamentalDiscriminant,
    params: TruncationParams,
    tables: Optional[VonMangoldtTables] = None,
) -> float:
    """
    |Lambda_2 polynomial - (Lambda polynomial)^2| at the same lambda.

    With a_n = Lambda(n) chi_D(n) / n^s this is the sum of a_{n1} a_{n2} over
    n1, n2 <= lambda with n1 n2 > lambda, which stays of order one as lambda grows.
    """
    if tables is None:
        tables = VonMangoldtTables(params.cutoff, k_max=2)
    first = truncated_logderiv_pow(discriminant, 1, params, tables)
    second = truncated_logderiv_pow(discriminant, 2, params, tables)
    return abs(second - first * first)


class FamilyEvaluator:
    """
    Sweeps a family of discriminants at one truncation regime.

    Tables are built once up to the audit cutoff 2*lambda + 1/2 and shared
    across every chunk; an optional storage backend makes sweeps resumable.

    The principal character (D = 1) is judged on its value with the pole term
    principal_main_term removed, for both the large-value test and the audit
    gap; its reported value stays the plain truncated polynomial.
    """

    def __init__(
        self,
        params: TruncationParams,
        tables: Optional[VonMangoldtTables] = None,
        threads: int = 1,
    ):
        """
        Args:
            params: Truncation regime
            tables: Optional prebuilt tables covering the audit cutoff
            threads: Thread budget for the compiled kernels
        """
        self.params = params
        audit_cutoff = int(params.audit_lambda)
        if tables is None or tables.limit < audit_cutoff:
            tables = VonMangoldtTables(audit_cutoff, k_max=1)
        self.tables = tables
        self.threads = set_thread_budget(threads)
        self._weights = tables.weights(1, params.s, params.cutoff)[np.newaxis, :]
        self._audit_weights = tables.weights(1, params.s, audit_cutoff)[np.newaxis, :]
        self._spf = tables.spf[: params.cutoff + 1]
        self._audit_spf = tables.spf[: audit_cutoff + 1]
        self._audit_stride = (
            max(1, int(round(1.0 / params.audit_fraction))) if params.audit_fraction > 0 else 0
        )
        self.tolerance = consistency_tolerance(tables, params)
        self._pole = principal_main_term(params.s, params.lambda_value)
        self._audit_pole = principal_main_term(params.s, params.audit_lambda)
        logger.debug(f"Consistency tolerance {self.tolerance:.6g} at lambda={params.lambda_value}")

    def _values(self, ds: np.ndarray) -> np.ndarray:
        return dirichlet_polynomials(ds, self._weights, self._spf)[:, 0]

    def _audit_values(self, ds: np.ndarray) -> np.ndarray:
        return dirichlet_polynomials(ds, self._audit_weights, self._audit_spf)[:, 0]

    def evaluate_chunk(self, family: FamilySlice, start: int, stop: int) -> List[LogDerivValue]:
        """
        Evaluate members start..stop-1 of the family.

        Audited entries are every stride-th member plus every value at or
        above the flag threshold; flags combine the two criteria.
        """
        params = self.params
        ds = family.members[start:stop]
        values = self._values(ds)
        principal = ds == 1
        judged = np.where(principal, values + self._pole, values)

        _, large_scale = benchmark_pair(family.bound, params.epsilon)
        flag_threshold = params.large_value_factor * large_scale
        index = np.arange(start, stop)
        audit_mask = np.abs(judged) >= flag_threshold
        if self._audit_stride:
            audit_mask |= index % self._audit_stride == 0
        gaps = np.full(ds.shape[0], np.nan)
        if audit_mask.any():
            audited_values = self._audit_values(ds[audit_mask])
            audited_values = np.where(principal[audit_mask], audited_values + self._audit_pole, audited_values)
            gaps[audit_mask] = np.abs(audited_values - judged[audit_mask])

        results = []
        for d, value, level, gap in zip(ds.tolist(), values.tolist(), judged.tolist(), gaps.tolist()):
            audited = not math.isnan(gap)
            flagged = abs(level) >= flag_threshold or (audited and gap > self.tolerance)
            results.append(LogDerivValue(
                discriminant=d,
                value=value,
                lambda_used=params.lambda_value,
                consistency_gap=gap if audited else None,
                flagged=flagged,
            ))
        return results

    def evaluate(self, family: FamilySlice, storage=None) -> List[LogDerivValue]:
        """
        Evaluate the whole family, skipping members already in storage.

        Args:
            family: The family to sweep
            storage: Optional SweepStorage used as a resumable cache

        Returns:
            One LogDerivValue per member, in family order
        """
        if family.bound < MIN_SWEEP_BOUND:
            raise DomainError(f"family sweeps need N >= {MIN_SWEEP_BOUND}, got {family.bound}")
        done: Dict[int, LogDerivValue] = {}
        if storage is not None:
            done = storage.load(family.bound, self.params)
            if done:
                logger.info(f"Resuming sweep of F({family.bound}): {len(done)} values cached")

        results: List[LogDerivValue] = []
        for start in range(0, family.count, SWEEP_CHUNK):
            stop = min(start + SWEEP_CHUNK, family.count)
            chunk_ds = family.members[start:stop].tolist()
            if all(d in done for d in chunk_ds):
                results.extend(done[d] for d in chunk_ds)
                continue
            chunk = self.evaluate_chunk(family, start, stop)
            fresh = [v for v in chunk if v.discriminant not in done]
            merged = [done.get(v.discriminant, v) for v in chunk]
            if storage is not None and fresh:
                storage.append(family.bound, self.params, fresh)
            results.extend(merged)
            logger.debug(f"Sweep chunk {start}..{stop} of {family.count} evaluated")

        if storage is not None:
            storage.save(family.bound, self.params, results)
        flagged = sum(v.flagged for v in results)
        logger.info(f"Sweep of F({family.bound}) complete: {len(results)} values, {flagged} flagged")
        return results


def evaluate_family(
    bound: int,
    params: TruncationParams,
    storage=None,
    threads: int = 1,
    include_d1: bool = True,
) -> List[LogDerivValue]:
    """
    One LogDerivValue per member of F(N).

    Args:
        bound: The bound N (>= 3)
        params: Truncation regime
        storage: Optional resumable cache
        threads: Thread budget
        include_d1: Whether d = 1 belongs to the family
    """
    family = enumerate_family(bound, include_d1=include_d1)
    return FamilyEvaluator(params, threads=threads).evaluate(family, storage)


def family_moment(k: int, values: Sequence[LogDerivValue]) -> float:
    """
    E_N(1_{E^c} L^k): mean of value^k over unflagged entries.

    Flagged entries contribute zero but stay in the denominator.
    """
    if not values:
        raise DomainError("family moment of an empty sweep")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    return math.fsum(v.value ** k for v in values if not v.flagged) / len(values)
