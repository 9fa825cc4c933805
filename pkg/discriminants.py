# discriminants.py
"""
The family of fundamental discriminants and their real characters.
Enumerates F(N) with a squarefree sieve and evaluates chi_D(n) = (D/n).
"""

import logging
import math
from typing import Union

import numpy as np

from errors import DomainError, ResourceLimitError
from kernels import kronecker_column
from models import FamilySlice

logger = logging.getLogger(__name__)

# peak working set per unit of N: int64 range and residues (16), the four
# signed parts, their concatenation, |d|, the lexsort order and the sorted copy
# (about 5 each at density 0.61), boolean masks (a few)
_BYTES_PER_BOUND = 64

SIEVE_THRESHOLD = 10**4


def _is_squarefree(m: int) -> bool:
    m = abs(m)
    if m == 0:
        return False
    for p in range(2, math.isqrt(m) + 1):
        if m % (p * p) == 0:
            return False
    return True


def is_fundamental_discriminant(d: int) -> bool:
    """
    Check the definition directly.

    Either d = 1 mod 4 and squarefree, or d = 4m with m = 2, 3 mod 4 and
    m squarefree. Total on the integers: 0 and non-integers give False.
    """
    if not isinstance(d, (int, np.integer)) or d == 0:
        return False
    d = int(d)
    if d % 4 == 1:
        return _is_squarefree(d)
    if d % 4 == 0:
        m = d // 4
        return m % 4 in (2, 3) and _is_squarefree(m)
    return False


def squarefree_sieve(limit: int) -> np.ndarray:
    """
    Flags of squarefree integers 0..limit.

    Strikes multiples of p^2 for every prime p <= sqrt(limit).
    """
    flags = np.ones(limit + 1, dtype=bool)
    flags[0] = False
    root = math.isqrt(limit)
    if root < 2:
        return flags
    prime = np.ones(root + 1, dtype=bool)
    prime[:2] = False
    for p in range(2, math.isqrt(root) + 1):
        if prime[p]:
            prime[p * p::p] = False
    for p in np.flatnonzero(prime).tolist():
        flags[p * p::p * p] = False
    return flags


def enumerate_family(
    bound: int,
    include_d1: bool = True,
    memory_budget_mb: int = 2048,
) -> FamilySlice:
    """
    Enumerate every fundamental discriminant with |d| <= bound.

    Args:
        bound: The bound N (>= 1)
        include_d1: Whether d = 1 belongs to the family
        memory_budget_mb: Largest working memory the sieve may claim

    Returns:
        FamilySlice sorted by |d|, positive before negative

    Raises:
        DomainError: If bound < 1
        ResourceLimitError: If the sieve would exceed the memory budget
    """
    if bound < 1:
        raise DomainError(f"family bound must be >= 1, got {bound}")
    needed_mb = bound * _BYTES_PER_BOUND / 2**20
    if needed_mb > memory_budget_mb:
        raise ResourceLimitError(
            f"N={bound} needs about {needed_mb:.0f} MB, budget is {memory_budget_mb} MB"
        )

    squarefree = squarefree_sieve(bound)
    u = np.arange(bound + 1, dtype=np.int64)
    residue = u % 4

    # odd discriminants: d = u with u = 1 mod 4, or d = -u with u = 3 mod 4
    positive_odd = u[squarefree & (residue == 1)]
    negative_odd = -u[squarefree & (residue == 3)]

    # even discriminants: d = 4m, |m| <= N / 4, m = 2, 3 mod 4 squarefree
    quarter = bound // 4
    v = u[: quarter + 1]
    v_residue = residue[: quarter + 1]
    v_squarefree = squarefree[: quarter + 1]
    positive_even = 4 * v[v_squarefree & ((v_residue == 2) | (v_residue == 3))]
    negative_even = -4 * v[v_squarefree & ((v_residue == 2) | (v_residue == 1))]

    members = np.concatenate([positive_odd, negative_odd, positive_even, negative_even])
    if not include_d1:
        members = members[members != 1]
    order = np.lexsort((members < 0, np.abs(members)))
    members = np.ascontiguousarray(members[order])

    logger.info(f"Family F({bound}) enumerated: {members.shape[0]} discriminants")
    return FamilySlice(bound=bound, members=members, include_d1=include_d1)


def kronecker(d: int, n: int) -> int:
    """
    Kronecker symbol (d/n) for n >= 0.

    Strips factors of two with the (d/2) rule, then runs the binary Jacobi
    recursion with reciprocity flips. O(log min(|d|, n)).

    Args:
        d: Any integer
        n: Nonnegative integer

    Returns:
        -1, 0 or 1
    """
    if n == 0:
        return 1 if abs(d) == 1 else 0
    result = 1
    while n % 2 == 0:
        n //= 2
        if d % 2 == 0:
            return 0
        if d % 8 in (3, 5):
            result = -result
    if n == 1:
        return result

    a = d % n
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a %= n
    return result if n == 1 else 0


def character_values(family: FamilySlice, n: int) -> np.ndarray:
    """chi_D(n) for every D in the family, in family order."""
    if n < 0:
        raise DomainError(f"characters are evaluated at n >= 0, got {n}")
    return kronecker_column(family.members, np.int64(n))


def character_average(n: int, family: Union[int, FamilySlice]) -> float:
    """
    Mean of chi_D(n) over F(N), the arithmetic variable E_N(X_{n,N}).

    Args:
        n: Positive integer
        family: A FamilySlice, or the bound N to enumerate

    Returns:
        The exact mean as a float (integer sum, one division)
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not isinstance(family, FamilySlice):
        family = enumerate_family(int(family))
    total = int(character_values(family, n).sum(dtype=np.int64))
    return total / family.count
