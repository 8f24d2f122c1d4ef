"""
Gaussian elimination over F_p on plain int matrices.

Matrices are lists of row lists.  Pivoting is first-nonzero in column
order, which keeps elimination deterministic.
"""

from __future__ import annotations

from .gf import inv_mod


class SingularMatrixError(ValueError):
    """The linear system has no unique solution over F_p."""


def rank_mod(rows: list[list[int]], p: int) -> int:
    """Rank of a matrix over F_p."""
    if not rows:
        return 0
    m = [[x % p for x in row] for row in rows]
    n_rows, n_cols = len(m), len(m[0])
    rank = 0
    for col in range(n_cols):
        pivot = next((r for r in range(rank, n_rows) if m[r][col]), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        inv_p = inv_mod(m[rank][col], p)
        m[rank] = [x * inv_p % p for x in m[rank]]
        for r in range(n_rows):
            if r != rank and m[r][col]:
                f = m[r][col]
                m[r] = [(a - f * b) % p for a, b in zip(m[r], m[rank])]
        rank += 1
        if rank == n_rows:
            break
    return rank


def solve_mod(a: list[list[int]], b: list[int], p: int) -> list[int]:
    """Solve the square system a·x = b over F_p."""
    n = len(a)
    aug = [[x % p for x in row] + [b[i] % p] for i, row in enumerate(a)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col]), None)
        if pivot is None:
            raise SingularMatrixError("singular coefficient matrix")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv_p = inv_mod(aug[col][col], p)
        aug[col] = [x * inv_p % p for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [(x - f * y) % p for x, y in zip(aug[r], aug[col])]
    return [aug[i][n] for i in range(n)]
