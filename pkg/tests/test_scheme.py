import itertools
import json
from collections import Counter

import pytest
from scipy.stats import chisquare

from codedpir import derive_params, encode_system, make_rng
from codedpir import scheme
from codedpir.rs import make_code
from codedpir.scheme import (
    DecodingError,
    ParameterError,
    ProtocolError,
    build_server_query,
    decode,
    gen_master_query,
    retrieve,
    server_answer,
)

from conftest import EXAMPLE_QUERY


class TestDeriveParams:
    def test_worked_example_point(self):
        p = derive_params(5, 3, 3, 7)
        assert (p.n_reduced, p.k_reduced, p.d) == (5, 3, 1)
        assert p.rows_per_file == 2
        assert p.file_len == 6

    def test_reduced_point(self):
        p = derive_params(4, 2, 2, 5)
        assert (p.n_reduced, p.k_reduced, p.d) == (2, 1, 2)
        assert p.rows_per_file == 1
        assert p.file_len == 2

    @pytest.mark.parametrize(
        "args",
        [(3, 3, 2, 5), (2, 3, 2, 5), (5, 3, 1, 7), (5, 3, 3, 6), (5, 3, 3, 3)],
    )
    def test_rejections(self, args):
        with pytest.raises(ParameterError):
            derive_params(*args)


class TestEncodeSystem:
    def test_zero_sources(self):
        params = derive_params(5, 3, 2, 7)
        zeros = [[[0] * 3 for _ in range(2)] for _ in range(2)]
        _, storages = encode_system(params, zeros)
        assert all(all(v == 0 for frag in st.fragments for v in frag) for st in storages)

    def test_unit_rows_give_generator_columns(self):
        params = derive_params(5, 3, 2, 7)
        code = make_code(5, 3, 7)
        units = [[1, 0, 0], [0, 1, 0]]
        sources = [units, [[0] * 3] * 2]
        _, storages = encode_system(params, sources, code)
        for t in range(5):
            assert storages[t].fragments[0] == (
                code.generator[0][t],
                code.generator[1][t],
            )

    def test_reconstruct_from_any_k_storages(self, example_system):
        params, code, sources, _, storages = example_system
        for subset in itertools.combinations(range(5), 3):
            for i in range(params.m_files):
                rows = []
                for j in range(params.rows_per_file):
                    known = [(t, storages[t].fragments[i][j]) for t in subset]
                    rows.append(code.message_of(code.erasure_decode(known)))
                assert rows == sources[i]

    def test_dimension_mismatch(self):
        params = derive_params(5, 3, 2, 7)
        with pytest.raises(ParameterError):
            encode_system(params, [[[0] * 3], [[0] * 3] * 2])


class TestQueries:
    def test_omega_membership(self):
        params = derive_params(5, 3, 3, 7)
        rng = make_rng(5)
        for _ in range(200):
            q = gen_master_query(params, rng)
            for i in range(3):
                col = [q[s][i] for s in range(3)]
                assert len(set(col)) == 3
                assert all(0 <= v < 5 for v in col)

    def test_omega_uniformity_chi2(self):
        # |Omega| = 60 for (5,3); column samples should be uniform on it
        params = derive_params(5, 3, 3, 7)
        assert scheme.omega_size(params) == 60
        rng = make_rng(0)
        samples = scheme.sample_master_queries(params, rng, 100_000)
        counts = Counter(tuple(samples[i, :, 0]) for i in range(samples.shape[0]))
        assert set(counts) == set(scheme.enumerate_omega(params))
        assert chisquare(list(counts.values())).pvalue >= 0.01

    def test_two_element_omega(self):
        params = derive_params(2, 1, 2, 257)
        assert sorted(scheme.enumerate_omega(params)) == [(0,), (1,)]
        rng = make_rng(9)
        seen = {gen_master_query(params, rng)[0][0] for _ in range(50)}
        assert seen == {0, 1}

    def test_build_server_query_worked_values(self):
        assert build_server_query(EXAMPLE_QUERY, 0, 2, derive_params(5, 3, 3, 7)) == [
            [0, 4, 3],
            [2, 1, 0],
            [3, 0, 4],
        ]
        assert build_server_query(EXAMPLE_QUERY, 0, 4, derive_params(5, 3, 3, 7)) == [
            [2, 4, 3],
            [4, 1, 0],
            [0, 0, 4],
        ]

    def test_server_zero_is_identity(self):
        params = derive_params(5, 3, 3, 7)
        assert build_server_query(EXAMPLE_QUERY, 0, 0, params) == EXAMPLE_QUERY

    def test_index_errors(self):
        params = derive_params(5, 3, 3, 7)
        with pytest.raises(ParameterError):
            build_server_query(EXAMPLE_QUERY, 3, 0, params)
        with pytest.raises(ParameterError):
            build_server_query(EXAMPLE_QUERY, 0, 5, params)

    @pytest.mark.parametrize("n,k,m", [(5, 3, 3), (4, 2, 2), (6, 4, 3)])
    def test_shifted_column_coverage(self, n, k, m):
        # each shifted entry value appears exactly d = gcd(N,K) times over servers
        params = derive_params(n, k, m, 257)
        rng = make_rng(n + k)
        for _ in range(20):
            q = gen_master_query(params, rng)
            for s in range(params.k_reduced):
                values = Counter(
                    (q[s][0] + t) % params.n_reduced for t in range(n)
                )
                assert all(values[v] == params.d for v in range(params.n_reduced))


class TestServerAnswer:
    def test_worked_example_answer_table(self, example_system):
        params, _, _, enc, storages = example_system
        # the full answer table of the worked example, desired file 0
        expected = [
            [None,
             (enc[0][0][0] + enc[1][1][0] + enc[2][0][0]) % 7,
             (enc[0][1][0] + enc[1][0][0]) % 7],
            [None,
             (enc[0][1][1] + enc[1][1][1] + enc[2][0][1]) % 7,
             enc[1][0][1]],
            [enc[0][0][2],
             (enc[1][1][2] + enc[2][0][2]) % 7,
             enc[1][0][2]],
            [enc[0][1][3],
             (enc[1][1][3] + enc[2][0][3]) % 7,
             enc[1][0][3]],
            [None,
             (enc[1][1][4] + enc[2][0][4]) % 7,
             (enc[0][0][4] + enc[1][0][4]) % 7],
        ]
        for t in range(5):
            query = build_server_query(EXAMPLE_QUERY, 0, t, params)
            assert server_answer(storages[t], query, params) == expected[t]

    def test_null_rule_is_query_only(self, example_system):
        # NULL positions depend only on the received query rows
        params, _, _, _, storages = example_system
        query = [[2, 4, 3], [0, 1, 0], [3, 2, 4]]
        answers = [server_answer(st, query, params) for st in storages]
        null_patterns = {tuple(a is None for a in ans) for ans in answers}
        assert null_patterns == {(True, False, True)}

    def test_malformed_queries(self, example_system):
        params, _, _, _, storages = example_system
        with pytest.raises(ProtocolError):
            server_answer(storages[0], [[3, 4, 3], [3, 1, 0], [1, 0, 4]], params)
        with pytest.raises(ProtocolError):
            server_answer(storages[0], [[5, 4, 3], [0, 1, 0], [1, 0, 4]], params)
        with pytest.raises(ProtocolError):
            server_answer(storages[0], [[3, 4], [0, 1], [1, 0]], params)


class TestDecode:
    def test_worked_example_realization(self, example_system):
        params, code, sources, _, storages = example_system
        answers = [
            server_answer(st, build_server_query(EXAMPLE_QUERY, 0, st.server_index, params), params)
            for st in storages
        ]
        assert scheme.realized_download(answers) == 12
        assert decode(answers, EXAMPLE_QUERY, 0, params, code) == sources[0]

    def test_all_zero_files(self):
        params = derive_params(5, 3, 3, 7)
        code = make_code(5, 3, 7)
        zeros = [[[0] * 3 for _ in range(2)] for _ in range(3)]
        _, storages = encode_system(params, zeros, code)
        answers = [
            server_answer(storages[t], build_server_query(EXAMPLE_QUERY, 1, t, params), params)
            for t in range(5)
        ]
        assert decode(answers, EXAMPLE_QUERY, 1, params, code) == zeros[1]

    @pytest.mark.parametrize("n,k", [(2, 1), (3, 2), (4, 2), (5, 3), (6, 4)])
    @pytest.mark.parametrize("m", [2, 3])
    def test_randomized_round_trips(self, n, k, m):
        params = derive_params(n, k, m, 257)
        rng = make_rng(n * 31 + k * 7 + m)
        sources = scheme.random_sources(params, rng)
        code = make_code(n, k, 257)
        _, storages = encode_system(params, sources, code)
        for trial in range(10):
            theta = trial % m
            master = gen_master_query(params, rng)
            answers = [
                server_answer(storages[t], build_server_query(master, theta, t, params), params)
                for t in range(n)
            ]
            assert decode(answers, master, theta, params, code) == sources[theta]

    def test_exhaustive_tiny_query_space(self):
        # every master query and theta at (2,1,2)
        params = derive_params(2, 1, 2, 257)
        rng = make_rng(77)
        sources = scheme.random_sources(params, rng)
        code = make_code(2, 1, 257)
        _, storages = encode_system(params, sources, code)
        downloads = set()
        for master in scheme.enumerate_query_space(params):
            for theta in range(2):
                answers = [
                    server_answer(storages[t], build_server_query(master, theta, t, params), params)
                    for t in range(2)
                ]
                assert decode(answers, master, theta, params, code) == sources[theta]
                downloads.add(scheme.realized_download(answers))
        assert downloads == {1, 2}

    def test_corrupt_answers_do_not_decode_silently(self, example_system):
        params, code, sources, _, storages = example_system
        answers = [
            list(server_answer(st, build_server_query(EXAMPLE_QUERY, 0, st.server_index, params), params))
            for st in storages
        ]
        answers[2][0] = (answers[2][0] + 1) % 7  # flip a transmitted element
        decoded = decode(answers, EXAMPLE_QUERY, 0, params, code)
        assert decoded != sources[0]


class TestRetrieve:
    def test_matches_source(self, example_system):
        params, code, sources, _, storages = example_system
        rng = make_rng(2024)
        for theta in range(3):
            source, downloaded = retrieve(theta, storages, params, rng, code)
            assert source == sources[theta]
            # D_rel = L + K*r with 0 <= r <= k
            assert params.file_len <= downloaded <= params.n_servers * params.k_reduced
            assert (downloaded - params.file_len) % params.k_mds == 0


class TestStorageFiles:
    def test_round_trip(self, tmp_path, example_system):
        params, _, _, _, storages = example_system
        path = tmp_path / "storage-2.json"
        scheme.save_storage(path, storages[2], params)
        doc = json.loads(path.read_text())
        assert doc["format"] == "pir-mds-storage/1"
        assert doc["params"] == {"n": 5, "k": 3, "m": 3, "p": 7}
        loaded, loaded_params = scheme.load_storage(path)
        assert loaded == storages[2]
        assert loaded_params == params

    def test_bad_format(self):
        with pytest.raises(ParameterError):
            scheme.storage_from_json({"format": "nope"})

    def test_ingest_round_trip(self):
        params = derive_params(5, 3, 3, 257)
        data = bytes(range(13))
        sources, length = scheme.ingest_bytes(data, params)
        assert length == 13
        assert len(sources) == 3
        assert scheme.emit_bytes(sources, length) == data

    def test_ingest_empty(self):
        params = derive_params(5, 3, 2, 257)
        sources, length = scheme.ingest_bytes(b"", params)
        assert length == 0
        assert sources[0] == [[0] * 3, [0] * 3]

    def test_ingest_too_large(self):
        params = derive_params(5, 3, 2, 257)
        with pytest.raises(ParameterError):
            scheme.ingest_bytes(bytes(100), params)

    def test_ingest_needs_wide_field(self):
        params = derive_params(5, 3, 2, 7)
        with pytest.raises(ParameterError):
            scheme.ingest_bytes(b"abc", params)
