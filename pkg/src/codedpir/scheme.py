"""
The coded linear PIR protocol itself.

Files live on N servers as rows of (N, K) Reed-Solomon codewords with
lam = n - k rows per file, where n = N/gcd(N,K) and k = K/gcd(N,K).
A retrieval samples a k x M master query whose columns are uniform
partial permutations of [0:n), shifts the desired file's column by the
server index, and lets each server answer in k independent rounds.
Rounds whose query row falls entirely in the dummy range [n-k:n) are
NULL and cost nothing; everything else is one field element.  The
decoder cancels interference by erasure-decoding it across servers and
then erasure-decodes each row of the desired file.

Query matrices are k x M lists of row lists with entries in [0:n);
answers are length-k lists with None marking NULL rounds.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gf import is_prime
from .rs import MdsCode, make_code

DEFAULT_PRIME = 257

STORAGE_FORMAT = "pir-mds-storage/1"
SOURCE_FORMAT = "pir-mds-source/1"


class ParameterError(ValueError):
    """System parameters outside the supported regime."""


class ProtocolError(ValueError):
    """Malformed query or answer."""


class DecodingError(RuntimeError):
    """Internal invariant violated while reconstructing a file."""


@dataclass(frozen=True)
class SystemParams:
    n_servers: int          # N
    k_mds: int              # K
    m_files: int            # M
    prime: int              # p
    d: int                  # gcd(N, K)
    n_reduced: int          # n = N/d
    k_reduced: int          # k = K/d
    rows_per_file: int      # lam = n - k
    file_len: int           # L = K * lam

    @property
    def dummy_low(self) -> int:
        """Start of the dummy-index range [n-k : n)."""
        return self.n_reduced - self.k_reduced


def derive_params(n_servers: int, k_mds: int, m_files: int, prime: int) -> SystemParams:
    if k_mds < 1 or n_servers <= k_mds:
        raise ParameterError(f"need N > K >= 1, got N={n_servers}, K={k_mds}")
    if m_files <= 1:
        raise ParameterError(f"need M > 1, got M={m_files}")
    if not is_prime(prime):
        raise ParameterError(f"p={prime} is not prime")
    if prime < n_servers:
        raise ParameterError(f"p={prime} < N={n_servers}")
    d = math.gcd(n_servers, k_mds)
    n = n_servers // d
    k = k_mds // d
    lam = n - k
    return SystemParams(
        n_servers=n_servers,
        k_mds=k_mds,
        m_files=m_files,
        prime=prime,
        d=d,
        n_reduced=n,
        k_reduced=k,
        rows_per_file=lam,
        file_len=k_mds * lam,
    )


@dataclass(frozen=True)
class ServerStorage:
    """Column t of every encoded file; dummy rows are virtual zeros."""

    server_index: int
    fragments: tuple[tuple[int, ...], ...]  # M fragments of length lam

    def read(self, file_index: int, row: int) -> int:
        frag = self.fragments[file_index]
        return frag[row] if row < len(frag) else 0


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; all package randomness uses this."""
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# storage encoding


def random_sources(params: SystemParams, rng: np.random.Generator) -> list[list[list[int]]]:
    """M random source files, each lam x K over F_p."""
    return [
        rng.integers(0, params.prime, size=(params.rows_per_file, params.k_mds)).tolist()
        for _ in range(params.m_files)
    ]


def encode_system(params: SystemParams, sources, code: MdsCode | None = None):
    """Encode M source files and slice them into N server storages."""
    if code is None:
        code = make_code(params.n_servers, params.k_mds, params.prime)
    if len(sources) != params.m_files:
        raise ParameterError(f"expected {params.m_files} source files, got {len(sources)}")
    encoded = []
    for src in sources:
        if len(src) != params.rows_per_file or any(len(r) != params.k_mds for r in src):
            raise ParameterError(
                f"source must be {params.rows_per_file} x {params.k_mds}"
            )
        encoded.append([code.encode(list(row)) for row in src])
    storages = [
        ServerStorage(
            server_index=t,
            fragments=tuple(
                tuple(enc[j][t] for j in range(params.rows_per_file)) for enc in encoded
            ),
        )
        for t in range(params.n_servers)
    ]
    return encoded, storages


# ---------------------------------------------------------------------------
# queries


def sample_column(params: SystemParams, rng: np.random.Generator) -> list[int]:
    """Uniform k-out-of-n partial permutation (first k of a full shuffle)."""
    return rng.permutation(params.n_reduced)[: params.k_reduced].tolist()


def gen_master_query(params: SystemParams, rng: np.random.Generator) -> list[list[int]]:
    cols = [sample_column(params, rng) for _ in range(params.m_files)]
    return [[cols[i][s] for i in range(params.m_files)] for s in range(params.k_reduced)]


def build_server_query(
    master: list[list[int]], theta: int, server: int, params: SystemParams
) -> list[list[int]]:
    if not 0 <= theta < params.m_files:
        raise ParameterError(f"theta={theta} out of [0:{params.m_files})")
    if not 0 <= server < params.n_servers:
        raise ParameterError(f"server={server} out of [0:{params.n_servers})")
    n = params.n_reduced
    query = [list(row) for row in master]
    for row in query:
        row[theta] = (row[theta] + server) % n
    return query


def validate_query(query: list[list[int]], params: SystemParams) -> None:
    k, m, n = params.k_reduced, params.m_files, params.n_reduced
    if len(query) != k or any(len(row) != m for row in query):
        raise ProtocolError(f"query must be {k} x {m}")
    for row in query:
        for entry in row:
            if not 0 <= entry < n:
                raise ProtocolError(f"query entry {entry} out of [0:{n})")
    for i in range(m):
        col = [query[s][i] for s in range(k)]
        if len(set(col)) != k:
            raise ProtocolError(f"query column {i} has repeated entries")


def sample_master_queries(
    params: SystemParams, rng: np.random.Generator, count: int
) -> np.ndarray:
    """(count, k, M) array of master-query entries, columns uniform on Omega.

    argsort of iid uniforms is a uniform permutation; the first k slots
    of it are a uniform partial permutation, matching sample_column.
    """
    n, k, m = params.n_reduced, params.k_reduced, params.m_files
    perms = np.argsort(rng.random((count, m, n)), axis=2)[:, :, :k]
    return perms.transpose(0, 2, 1)


def enumerate_omega(params: SystemParams):
    """All length-k vectors over [0:n) with distinct entries."""
    return itertools.permutations(range(params.n_reduced), params.k_reduced)


def omega_size(params: SystemParams) -> int:
    n, k = params.n_reduced, params.k_reduced
    return math.perm(n, k)


def query_space_size(params: SystemParams) -> int:
    return omega_size(params) ** params.m_files


def enumerate_query_space(params: SystemParams):
    """All k x M master query matrices (columns range over Omega^M)."""
    omega = list(enumerate_omega(params))
    k, m = params.k_reduced, params.m_files
    for cols in itertools.product(omega, repeat=m):
        yield [[cols[i][s] for i in range(m)] for s in range(k)]


# ---------------------------------------------------------------------------
# answers


def server_answer(
    storage: ServerStorage, query: list[list[int]], params: SystemParams
) -> list[int | None]:
    """k per-round responses; None marks a NULL (silent) round.

    The server sees only its own query, never the desired file index.
    """
    validate_query(query, params)
    p = params.prime
    low = params.dummy_low
    answer: list[int | None] = []
    for row in query:
        if all(entry >= low for entry in row):
            answer.append(None)
        else:
            answer.append(
                sum(storage.read(i, entry) for i, entry in enumerate(row)) % p
            )
    return answer


def realized_download(answers) -> int:
    """Count of transmitted field elements across all servers."""
    return sum(1 for ans in answers for a in ans if a is not None)


# ---------------------------------------------------------------------------
# decoding


def decode(
    answers,
    master: list[list[int]],
    theta: int,
    params: SystemParams,
    code: MdsCode,
) -> list[list[int]]:
    """Reconstruct source file theta from all N answers.

    Per round: identify the K servers whose shifted index lands in the
    dummy range (their answers are pure interference), erasure-decode
    the interference codeword from them, subtract it at the remaining
    servers to expose coded symbols of the desired file, then
    erasure-decode each of the lam rows from its K exposed symbols.
    """
    nn, kk = params.n_servers, params.k_mds
    n, k = params.n_reduced, params.k_reduced
    lam, p, low = params.rows_per_file, params.prime, params.dummy_low
    if len(answers) != nn:
        raise DecodingError(f"expected {nn} answer vectors, got {len(answers)}")

    exposed: dict[int, list[tuple[int, int]]] = {j: [] for j in range(lam)}
    for s in range(k):
        v = master[s][theta]
        delta = [t for t in range(nn) if (v + t) % n >= low]
        if len(delta) != kk:
            raise DecodingError(f"round {s}: |Delta| = {len(delta)} != K={kk}")
        known = []
        for t in delta:
            a = answers[t][s]
            known.append((t, 0 if a is None else a))
        interference = code.erasure_decode(known)
        for t in range(nn):
            j = (v + t) % n
            if j >= low:
                continue
            a = answers[t][s]
            a = 0 if a is None else a
            exposed[j].append((t, (a - interference[t]) % p))

    rows = []
    for j in range(lam):
        if len(exposed[j]) != kk:
            raise DecodingError(f"row {j}: |Lambda| = {len(exposed[j])} != K={kk}")
        codeword = code.erasure_decode(exposed[j])
        rows.append(code.message_of(codeword))
    return rows


def retrieve(
    theta: int,
    storages,
    params: SystemParams,
    rng: np.random.Generator,
    code: MdsCode | None = None,
):
    """Full in-process pipeline; returns (source file, realized download)."""
    if code is None:
        code = make_code(params.n_servers, params.k_mds, params.prime)
    master = gen_master_query(params, rng)
    answers = [
        server_answer(storages[t], build_server_query(master, theta, t, params), params)
        for t in range(params.n_servers)
    ]
    source = decode(answers, master, theta, params, code)
    return source, realized_download(answers)


# ---------------------------------------------------------------------------
# on-disk formats


def storage_to_json(storage: ServerStorage, params: SystemParams) -> dict:
    return {
        "format": STORAGE_FORMAT,
        "params": {
            "n": params.n_servers,
            "k": params.k_mds,
            "m": params.m_files,
            "p": params.prime,
        },
        "server_index": storage.server_index,
        "fragments": [list(frag) for frag in storage.fragments],
    }


def storage_from_json(doc: dict) -> tuple[ServerStorage, SystemParams]:
    if doc.get("format") != STORAGE_FORMAT:
        raise ParameterError(f"unexpected storage format {doc.get('format')!r}")
    pr = doc["params"]
    params = derive_params(pr["n"], pr["k"], pr["m"], pr["p"])
    fragments = tuple(tuple(int(x) for x in frag) for frag in doc["fragments"])
    if len(fragments) != params.m_files or any(
        len(f) != params.rows_per_file for f in fragments
    ):
        raise ParameterError("fragment dimensions do not match params")
    return ServerStorage(int(doc["server_index"]), fragments), params


def save_storage(path, storage: ServerStorage, params: SystemParams) -> None:
    Path(path).write_text(json.dumps(storage_to_json(storage, params)))


def load_storage(path) -> tuple[ServerStorage, SystemParams]:
    return storage_from_json(json.loads(Path(path).read_text()))


def source_to_json(
    rows, file_index: int, params: SystemParams, byte_length: int | None = None
) -> dict:
    doc = {
        "format": SOURCE_FORMAT,
        "params": {
            "n": params.n_servers,
            "k": params.k_mds,
            "m": params.m_files,
            "p": params.prime,
        },
        "file_index": file_index,
        "rows": [list(r) for r in rows],
    }
    if byte_length is not None:
        doc["byte_length"] = byte_length
    return doc


def source_from_json(doc: dict):
    if doc.get("format") != SOURCE_FORMAT:
        raise ParameterError(f"unexpected source format {doc.get('format')!r}")
    rows = [[int(x) for x in row] for row in doc["rows"]]
    return rows, int(doc["file_index"]), doc.get("byte_length")


def ingest_bytes(data: bytes, params: SystemParams):
    """Chunk bytes into lam x K blocks, one block per file, zero-padded.

    Needs p > 255 so every byte maps to a distinct field element.
    Returns (sources, byte_length); byte_length belongs in the manifest
    so the original bytes can be re-extracted after retrieval.
    """
    if params.prime <= 255:
        raise ParameterError(f"byte ingestion needs p > 255, got p={params.prime}")
    block = params.file_len
    n_blocks = max(1, -(-len(data) // block))
    if n_blocks > params.m_files:
        raise ParameterError(
            f"{len(data)} bytes need {n_blocks} blocks but M={params.m_files}"
        )
    padded = data.ljust(params.m_files * block, b"\x00")
    sources = []
    for i in range(params.m_files):
        chunk = padded[i * block : (i + 1) * block]
        sources.append(
            [
                [chunk[r * params.k_mds + c] for c in range(params.k_mds)]
                for r in range(params.rows_per_file)
            ]
        )
    return sources, len(data)


def emit_bytes(sources, byte_length: int) -> bytes:
    """Inverse of ingest_bytes for decoded source files."""
    out = bytearray()
    for rows in sources:
        for row in rows:
            out.extend(row)
    return bytes(out[:byte_length])
