"""
Systematic (N, K) Reed-Solomon code over F_p with erasure decoding.

A codeword is the evaluation at points 0..N-1 of the degree-<K
polynomial interpolating the message on points 0..K-1, so the first K
symbols are the message itself.  Any K symbols determine the codeword
(MDS property), which is what both the storage layer and the PIR
decoder rely on.
"""

from __future__ import annotations

from .gf import check_modulus, inv_mod


class CodeParameterError(ValueError):
    """Invalid (N, K, p) combination."""


class InsufficientDataError(ValueError):
    """Fewer than K known symbols were supplied for erasure decoding."""


class CorruptCodewordError(ValueError):
    """Known symbols are inconsistent with any codeword."""


class MdsCode:
    """Fixed systematic RS code; immutable after construction."""

    def __init__(self, n_total: int, k_msg: int, prime: int):
        if not 0 < k_msg <= n_total:
            raise CodeParameterError(f"need 0 < K <= N, got N={n_total}, K={k_msg}")
        try:
            check_modulus(prime)
        except ValueError as exc:
            raise CodeParameterError(str(exc)) from exc
        if prime < n_total:
            raise CodeParameterError(
                f"prime {prime} < N={n_total}: not enough evaluation points"
            )
        self.n_total = n_total
        self.k_msg = k_msg
        self.prime = prime
        self.eval_points = tuple(range(n_total))
        self._recovery_cache: dict[tuple[int, ...], list[list[int]]] = {}
        self.generator = self.recovery_matrix(tuple(range(k_msg)))

    def recovery_matrix(self, positions: tuple[int, ...]) -> list[list[int]]:
        """K x N matrix R with full codeword = known_values · R.

        Row j is the Lagrange basis polynomial for positions[j] over the
        point set `positions`, evaluated at all N points.
        """
        cached = self._recovery_cache.get(positions)
        if cached is not None:
            return cached
        p = self.prime
        rows = []
        for j, tj in enumerate(positions):
            denom = 1
            for i, ti in enumerate(positions):
                if i != j:
                    denom = denom * (tj - ti) % p
            scale = inv_mod(denom, p)
            row = []
            for x in self.eval_points:
                num = 1
                for i, ti in enumerate(positions):
                    if i != j:
                        num = num * (x - ti) % p
                row.append(num * scale % p)
            rows.append(row)
        self._recovery_cache[positions] = rows
        return rows

    def encode(self, message: list[int]) -> list[int]:
        if len(message) != self.k_msg:
            raise CodeParameterError(
                f"message length {len(message)} != K={self.k_msg}"
            )
        p = self.prime
        gen = self.generator
        return [
            sum(message[j] * gen[j][t] for j in range(self.k_msg)) % p
            for t in range(self.n_total)
        ]

    def erasure_decode(self, known) -> list[int]:
        """Unique codeword agreeing with the known (position, value) pairs.

        The K smallest known positions are authoritative; any extra
        entries are consistency-checked against the interpolation.
        """
        entries = sorted(dict(known).items())
        if len(entries) < self.k_msg:
            raise InsufficientDataError(
                f"{len(entries)} known symbols < K={self.k_msg}"
            )
        for pos, _ in entries:
            if not 0 <= pos < self.n_total:
                raise CodeParameterError(f"position {pos} out of [0:{self.n_total})")
        base = entries[: self.k_msg]
        positions = tuple(pos for pos, _ in base)
        values = [v % self.prime for _, v in base]
        rec = self.recovery_matrix(positions)
        p = self.prime
        codeword = [
            sum(values[j] * rec[j][t] for j in range(self.k_msg)) % p
            for t in range(self.n_total)
        ]
        for pos, val in entries[self.k_msg:]:
            if codeword[pos] != val % p:
                raise CorruptCodewordError(
                    f"symbol at position {pos} disagrees with interpolation"
                )
        return codeword

    def message_of(self, codeword: list[int]) -> list[int]:
        return list(codeword[: self.k_msg])


def make_code(n_total: int, k_msg: int, prime: int) -> MdsCode:
    return MdsCode(n_total, k_msg, prime)
