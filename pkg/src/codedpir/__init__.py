"""
Capacity-achieving coded linear PIR over MDS-coded distributed storage.

Retrieve one of M files from N servers holding (N, K) Reed-Solomon
coded fragments without any single server learning which file, at the
exact download-rate capacity and with file length K(N-K)/gcd(N,K).

Submodules: gf (prime field), rs (Reed-Solomon), scheme (the protocol),
analysis (exact formulas and verifiers), sim (experiment harness),
net (TCP transport), cli (the `pir` command).
"""

from .analysis import capacity, expected_download, min_file_length_bound
from .rs import MdsCode, make_code
from .scheme import (
    SystemParams,
    derive_params,
    decode,
    gen_master_query,
    build_server_query,
    server_answer,
    retrieve,
    encode_system,
    make_rng,
)

__all__ = [
    "MdsCode",
    "SystemParams",
    "build_server_query",
    "capacity",
    "decode",
    "derive_params",
    "encode_system",
    "expected_download",
    "gen_master_query",
    "make_code",
    "make_rng",
    "min_file_length_bound",
    "retrieve",
    "server_answer",
]
