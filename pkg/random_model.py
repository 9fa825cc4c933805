# random_model.py
"""
The random Euler product model of L'/L(1/2 + epsilon, chi_D).

Independent X_p take the values -1, 0, 1 with probabilities
p/(2(p+1)), 1/(p+1), p/(2(p+1)); the model is
L_eps = sum_p (log p) X_p / (p^s - X_p), truncated at p <= P.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats

from errors import DomainError, FeasibilityError
from models import CharFnCurve, ModelConfig, ModelSampleBatch, MomentEstimate

logger = logging.getLogger(__name__)

# raw 64-bit words drawn per sampling block
SAMPLE_BLOCK_WORDS = 1 << 22
# complex entries per chunk of the characteristic function product
CHARFN_CHUNK_ENTRIES = 1 << 21
EXACT_MOMENT_MAX_K = 64
EXACT_MOMENT_MAX_CUTOFF = 10**8


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % q for q in range(3, math.isqrt(n) + 1, 2))


def primes_up_to(limit: int) -> np.ndarray:
    """All primes p <= limit, ascending, as int64."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.flatnonzero(sieve).astype(np.int64)


def _factorize(n: int) -> Dict[int, int]:
    factors: Dict[int, int] = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            factors[p] = factors.get(p, 0) + 1
            n //= p
        p += 1
    if n > 1:
        factors[n] = factors.get(n, 0) + 1
    return factors


def xp_distribution(p: int) -> Tuple[Fraction, Fraction, Fraction]:
    """
    Law of X_p as exact rationals (P(-1), P(0), P(+1)).

    Raises:
        DomainError: If p is not prime
    """
    if not is_prime(p):
        raise DomainError(f"X_p is defined for primes only, got {p}")
    side = Fraction(p, 2 * (p + 1))
    return side, Fraction(1, p + 1), side


def expected_Xn(n: int) -> float:
    """
    E(X_n): prod_{p | n} p/(p+1) when n is a perfect square, else 0.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    factors = _factorize(n)
    if any(e % 2 for e in factors.values()):
        return 0.0
    value = Fraction(1)
    for p in factors:
        value *= Fraction(p, p + 1)
    return float(value)


def euler_values(epsilon: float, primes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-prime values of (log p) X_p / (p^s - X_p).

    Returns:
        (value at X_p = +1, value at X_p = -1)
    """
    s = 0.5 + epsilon
    log_p = np.log(primes.astype(np.float64))
    p_s = primes.astype(np.float64) ** s
    return log_p / (p_s - 1.0), -log_p / (p_s + 1.0)


def tail_second_moment(epsilon: float, prime_cutoff: int) -> float:
    """
    sum_{p > P} (log p)^2 / p^(1 + 2 eps), by comparison with
    the integral of log x / x^(1 + 2 eps) from P to infinity.
    """
    log_p = math.log(prime_cutoff)
    return prime_cutoff ** (-2.0 * epsilon) * (log_p / (2.0 * epsilon) + 1.0 / (4.0 * epsilon ** 2))


def _thresholds(primes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # exact floor(2^64 * P(X_p = -1)) and floor(2^64 * P(X_p <= 0))
    low = [(p << 64) // (2 * (p + 1)) for p in primes.tolist()]
    high = [((p + 2) << 64) // (2 * (p + 1)) for p in primes.tolist()]
    return np.array(low, dtype=np.uint64), np.array(high, dtype=np.uint64)


class EulerProductSampler:
    """
    Counter-based sampler of the truncated random Euler product.

    Sample i consumes the Philox words i*W .. (i+1)*W - 1 of the stream
    keyed by the seed (W = prime count rounded up to a multiple of 4),
    so every sample is a pure function of (seed, i).
    """

    def __init__(self, config: ModelConfig):
        """
        Args:
            config: Model regime
        """
        self.config = config
        self.primes = primes_up_to(config.prime_cutoff)
        self.plus, self.minus = euler_values(config.epsilon, self.primes)
        self.low, self.high = _thresholds(self.primes)
        self.width = -(-self.primes.shape[0] // 4) * 4
        self.block = max(1, SAMPLE_BLOCK_WORDS // self.width)
        logger.info(
            f"Sampler ready: {self.primes.shape[0]} primes up to {config.prime_cutoff}, "
            f"block of {self.block} samples"
        )

    def draw_x(self, start: int, stop: int) -> np.ndarray:
        """X_p for samples start..stop-1 as an int8 array (samples, primes)."""
        bitgen = np.random.Philox(key=self.config.seed, counter=start * self.width // 4)
        raw = bitgen.random_raw((stop - start) * self.width).reshape(stop - start, self.width)
        raw = raw[:, : self.primes.shape[0]]
        x = np.ones(raw.shape, dtype=np.int8)
        x[raw < self.high] = 0
        x[raw < self.low] = -1
        return x

    def draw(self, start: int, stop: int) -> np.ndarray:
        """Samples start..stop-1 of the stream."""
        x = self.draw_x(start, stop)
        contributions = np.where(x > 0, self.plus, np.where(x < 0, self.minus, 0.0))
        return contributions.sum(axis=1)

    def sample(self, count: int, threads: int = 1) -> np.ndarray:
        """The first `count` samples, computed in blocks over a thread pool."""
        bounds = [(a, min(a + self.block, count)) for a in range(0, count, self.block)]
        if threads <= 1 or len(bounds) == 1:
            parts = [self.draw(a, b) for a, b in bounds]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda ab: self.draw(*ab), bounds))
        return np.concatenate(parts) if parts else np.zeros(0)


def sample_L(config: ModelConfig, count: int, threads: int = 1) -> ModelSampleBatch:
    """
    Draw `count` independent samples of sum_{p <= P} (log p) X_p / (p^s - X_p).

    Args:
        config: Model regime (epsilon, P, seed)
        count: Number of samples (>= 1)
        threads: Worker threads; the samples do not depend on it

    Returns:
        ModelSampleBatch with the second-moment tail estimate of p > P
    """
    if count < 1:
        raise DomainError(f"sample count must be >= 1, got {count}")
    samples = EulerProductSampler(config).sample(count, threads)
    logger.info(f"{count} model samples drawn (eps={config.epsilon}, P={config.prime_cutoff}, seed={config.seed})")
    return ModelSampleBatch(config, samples, tail_second_moment(config.epsilon, config.prime_cutoff))


def exact_first_moment(epsilon: float, prime_cutoff: int) -> float:
    """
    E of the truncated Euler form: sum_{p <= P} (log p) (p/(p+1)) / (p^(1 + 2 eps) - 1).
    """
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    terms = (
        math.log(p) * (p / (p + 1)) / (p ** (1.0 + 2.0 * epsilon) - 1.0)
        for p in primes_up_to(prime_cutoff).tolist()
    )
    return math.fsum(terms)


def _independent_sum_moments(
    laws: Sequence[Tuple[Sequence[float], Sequence[float]]],
    k: int,
) -> List[float]:
    """
    Raw moments E[S^j], j = 0..k, of a sum S of independent discrete variables.

    Args:
        laws: One (probabilities, values) pair per summand; the mass the
            probabilities leave over sits at zero
        k: Highest order

    Returns:
        [E S^0, ..., E S^k]
    """
    binom = [[math.comb(i, j) for j in range(i + 1)] for i in range(k + 1)]
    moments = [1.0] + [0.0] * k
    for probs, vals in laws:
        own = [1.0] + [math.fsum(q * v ** j for q, v in zip(probs, vals)) for j in range(1, k + 1)]
        moments = [
            math.fsum(binom[i][j] * moments[i - j] * own[j] for j in range(i + 1))
            for i in range(k + 1)
        ]
    return moments


def _check_moment_range(k: int, epsilon: float) -> None:
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon}")
    if not 1 <= k <= EXACT_MOMENT_MAX_K:
        raise FeasibilityError(f"exact moments support 1 <= k <= {EXACT_MOMENT_MAX_K}, got {k}")


def exact_moment(k: int, epsilon: float, lambda_value: float) -> float:
    """
    E[(sum_{n <= lambda} Lambda(n) X_n / n^s)^k], exactly.

    Grouping the polynomial by primes, each prime contributes
    Y_p = (log p) sum_{p^j <= lambda} X_p^j / p^(js), which takes one value on
    X_p = 1, another on X_p = -1 and 0 on X_p = 0. The Y_p are independent,
    so the moments follow from the binomial recursion over primes; this is
    the orthogonality relation applied to every k-tuple at once.

    Raises:
        FeasibilityError: Outside 1 <= k <= 64 or lambda <= 10^8
    """
    _check_moment_range(k, epsilon)
    if lambda_value > EXACT_MOMENT_MAX_CUTOFF:
        raise FeasibilityError(f"exact moments support lambda <= {EXACT_MOMENT_MAX_CUTOFF}, got {lambda_value}")
    s = 0.5 + epsilon
    cutoff = int(lambda_value)
    laws = []
    for p in primes_up_to(cutoff).tolist():
        log_p = math.log(p)
        plus, minus = [], []
        q, j = p, 1
        while q <= cutoff:
            term = log_p / q ** s
            plus.append(term)
            minus.append(term if j % 2 == 0 else -term)
            q *= p
            j += 1
        side = p / (2.0 * (p + 1))
        laws.append(((side, side), (math.fsum(minus), math.fsum(plus))))
    return _independent_sum_moments(laws, k)[k]


def brute_force_moment(k: int, epsilon: float, lambda_value: float) -> float:
    """
    Literal expansion over all k-tuples of prime powers n_i <= lambda:
    sum prod_i Lambda(n_i)/n_i^s * E(X_{n_1 ... n_k}). Exponential in k.
    """
    s = 0.5 + epsilon
    cutoff = int(lambda_value)
    powers = []
    for p in primes_up_to(cutoff).tolist():
        q = p
        while q <= cutoff:
            powers.append((q, math.log(p) / q ** s))
            q *= p
    terms = []
    for combo in itertools.product(powers, repeat=k):
        n = math.prod(q for q, _ in combo)
        mean = expected_Xn(n)
        if mean:
            terms.append(math.prod(w for _, w in combo) * mean)
    return math.fsum(terms)


def euler_form_moment(k: int, epsilon: float, prime_cutoff: int) -> float:
    """E[(sum_{p <= P} (log p) X_p / (p^s - X_p))^k], exactly."""
    _check_moment_range(k, epsilon)
    primes = primes_up_to(prime_cutoff)
    plus, minus = euler_values(epsilon, primes)
    laws = [
        ((p / (2.0 * (p + 1)),) * 2, (b, a))
        for p, a, b in zip(primes.tolist(), plus.tolist(), minus.tolist())
    ]
    return _independent_sum_moments(laws, k)[k]


def moment_truncation_gap(k: int, epsilon: float, lambda_value: float) -> float:
    """
    exact_moment at 4*lambda + 3/2 minus exact_moment at lambda.

    Every term of the moment expansion is nonnegative, so exact_moment grows with
    lambda and this change measures how much of the moment still lies beyond lambda.
    """
    longer = min(4.0 * lambda_value + 1.5, EXACT_MOMENT_MAX_CUTOFF - 0.5)
    return exact_moment(k, epsilon, longer) - exact_moment(k, epsilon, lambda_value)


def series_form_value(assignment: Dict[int, int], s: float, cutoff: int) -> float:
    """sum_{n <= cutoff} Lambda(n) x_n / n^s for one realization {x_p}."""
    terms = []
    for p, x in sorted(assignment.items()):
        log_p = math.log(p)
        q, j = p, 1
        while q <= cutoff:
            terms.append(log_p * x ** j / q ** s)
            q *= p
            j += 1
    return math.fsum(terms)


def euler_form_value(assignment: Dict[int, int], s: float) -> float:
    """sum_p (log p) x_p / (p^s - x_p) for one realization {x_p}."""
    return math.fsum(math.log(p) * x / (p ** s - x) for p, x in sorted(assignment.items()))


def _expm1_i(x: np.ndarray) -> np.ndarray:
    # e^{ix} - 1 without cancellation for small x
    half = np.sin(0.5 * x)
    return -2.0 * half * half + 1j * np.sin(x)


def charfn_curve(taus: Sequence[float], epsilon: float, prime_cutoff: int) -> CharFnCurve:
    """
    phi(tau) = E[exp(i tau L_eps)] as the product over p <= P of
    1/(p+1) + p/(2(p+1)) [exp(i tau a_p) + exp(-i tau b_p)],
    a_p = log p/(p^s - 1), b_p = log p/(p^s + 1).

    Factors are accumulated in ascending p in extended precision.
    """
    if prime_cutoff < 2:
        raise DomainError(f"prime cutoff must be >= 2, got {prime_cutoff}")
    taus = np.asarray(taus, dtype=np.float64).reshape(-1)
    primes = primes_up_to(prime_cutoff)
    plus, minus = euler_values(epsilon, primes)
    weight = primes / (2.0 * (primes + 1.0))

    product = np.ones(taus.shape[0], dtype=np.clongdouble)
    chunk = max(1, CHARFN_CHUNK_ENTRIES // max(1, taus.shape[0]))
    for start in range(0, primes.shape[0], chunk):
        sl = slice(start, start + chunk)
        phase_plus = np.outer(taus, plus[sl])
        phase_minus = np.outer(taus, minus[sl])
        factors = 1.0 + weight[sl] * (_expm1_i(phase_plus) + _expm1_i(phase_minus))
        for column in factors.T.astype(np.clongdouble):
            product *= column

    tails = taus ** 2 * tail_second_moment(epsilon, prime_cutoff)
    return CharFnCurve(
        epsilon=epsilon,
        prime_cutoff=prime_cutoff,
        taus=taus,
        values=product.astype(np.complex128),
        tail_estimates=tails,
    )


def char_fn(tau: float, epsilon: float, prime_cutoff: int) -> Tuple[complex, float]:
    """
    The truncated characteristic function at one tau.

    Returns:
        (phi(tau), tail estimate tau^2 sum_{p > P} (log p)^2 / p^(1 + 2 eps))
    """
    curve = charfn_curve([tau], epsilon, prime_cutoff)
    return complex(curve.values[0]), float(curve.tail_estimates[0])


def charfn_factor_moduli(tau: float, epsilon: float, prime_cutoff: int) -> np.ndarray:
    """|factor_p(tau)| for every p <= P."""
    primes = primes_up_to(prime_cutoff)
    plus, minus = euler_values(epsilon, primes)
    weight = primes / (2.0 * (primes + 1.0))
    factors = 1.0 + weight * (_expm1_i(tau * plus) + _expm1_i(tau * minus))
    return np.abs(factors)


def fit_decay_slope(curve: CharFnCurve, tau_min: float = 10.0, tau_max: float = 200.0) -> float:
    """
    Least-squares slope of log(-log|phi(tau)|) against log tau on [tau_min, tau_max].

    The decay exp(-C tau^(1/(1/2 + eps))) predicts a slope of 1/(1/2 + eps).
    """
    mask = (curve.taus >= tau_min) & (curve.taus <= tau_max)
    moduli = np.abs(curve.values[mask])
    usable = (moduli > 0) & (moduli < 1)
    if usable.sum() < 2:
        raise DomainError("not enough tau values in the fitting window")
    x = np.log(curve.taus[mask][usable])
    y = np.log(-np.log(moduli[usable]))
    return float(stats.linregress(x, y).slope)


def _jackknife_mean(values: np.ndarray) -> Tuple[float, float]:
    n = values.shape[0]
    mean = math.fsum(values.tolist()) / n
    if n < 2:
        return mean, 0.0
    leave_one_out = (mean * n - values) / (n - 1)
    spread = math.fsum(((leave_one_out - leave_one_out.mean()) ** 2).tolist())
    return mean, math.sqrt((n - 1) / n * spread)


def mc_moment(k: int, batch: ModelSampleBatch) -> MomentEstimate:
    """
    Sample means of L^k and |L|^k with delete-one jackknife standard errors.
    """
    if batch.count == 0:
        raise DomainError("moment of an empty sample batch")
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    powered = batch.samples ** k
    mean, stderr = _jackknife_mean(powered)
    abs_mean, abs_stderr = _jackknife_mean(np.abs(powered))
    return MomentEstimate(k=k, mean=mean, stderr=stderr, abs_mean=abs_mean, abs_stderr=abs_stderr)


def moment_growth(batch: ModelSampleBatch, k_values: Sequence[int]) -> List[Tuple[int, float, float]]:
    """
    (k, (E|L|^k)^(1/k), (E|L|^k)^(1/k) / k^(1/2 - eps)) for each k.
    """
    exponent = 0.5 - batch.config.epsilon
    rows = []
    for k in k_values:
        root = mc_moment(k, batch).abs_mean ** (1.0 / k)
        rows.append((k, root, root / k ** exponent))
    return rows
