# kernels.py
"""
Compiled inner loops of the family sweeps.

Every parallel loop writes each output slot from exactly one iteration and
sums sequentially inside it, so results do not depend on the thread count.
"""

import logging

import numba as nb
import numpy as np

logger = logging.getLogger(__name__)


def set_thread_budget(threads: int) -> int:
    """
    Clamp and apply the numba thread budget.

    Args:
        threads: Requested number of threads

    Returns:
        The number of threads actually in use
    """
    usable = max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(usable)
    logger.debug(f"numba thread budget set to {usable}")
    return usable


@nb.njit(cache=True)
def jacobi_odd(a, n):
    """Jacobi symbol (a/n) for odd positive n."""
    a = a % n
    result = 1
    while a != 0:
        while a % 2 == 0:
            a //= 2
            r = n % 8
            if r == 3 or r == 5:
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a = a % n
    if n == 1:
        return result
    return 0


@nb.njit(cache=True)
def kronecker_symbol(d, n):
    """Kronecker symbol (d/n) for n >= 0."""
    if n == 0:
        return 1 if (d == 1 or d == -1) else 0
    result = 1
    while n % 2 == 0:
        n //= 2
        if d % 2 == 0:
            return 0
        r = d % 8
        if r == 3 or r == 5:
            result = -result
    if n == 1:
        return result
    return result * jacobi_odd(d, n)


@nb.njit(parallel=True, cache=True)
def kronecker_column(ds, n):
    """chi_d(n) for every d in ds."""
    out = np.empty(ds.shape[0], dtype=np.int8)
    for i in nb.prange(ds.shape[0]):
        out[i] = kronecker_symbol(ds[i], n)
    return out


@nb.njit(cache=True)
def _fill_characters(d, spf, chi):
    # completely multiplicative: chi(n) = chi(p) chi(n / p) with p = spf(n)
    chi[0] = 0
    chi[1] = 1
    for n in range(2, chi.shape[0]):
        p = spf[n]
        if p == n:
            chi[n] = kronecker_symbol(d, n)
        else:
            chi[n] = chi[p] * chi[n // p]


@nb.njit(parallel=True, cache=True)
def dirichlet_polynomials(ds, weights, spf):
    """
    Evaluate sum_n weights[j, n] chi_d(n) for every d and every weight row.

    Args:
        ds: int64 discriminants
        weights: float64 array (rows, M + 1); zero beyond each row's cutoff
        spf: smallest prime factor table covering 0..M

    Returns:
        float64 array (len(ds), rows), Kahan-compensated sums
    """
    rows = weights.shape[0]
    size = weights.shape[1]
    out = np.empty((ds.shape[0], rows), dtype=np.float64)
    for i in nb.prange(ds.shape[0]):
        chi = np.empty(size, dtype=np.int8)
        _fill_characters(ds[i], spf, chi)
        for j in range(rows):
            total = 0.0
            comp = 0.0
            for n in range(1, size):
                c = chi[n]
                if c == 0:
                    continue
                w = weights[j, n]
                if w == 0.0:
                    continue
                y = c * w - comp
                t = total + y
                comp = (t - total) - y
                total = t
            out[i, j] = total
    return out
