"""
In-process experiment harness: many seeded retrievals against one
system, compared with the exact closed forms.

Files are generated once per run; the download cost does not depend on
file contents, and fixed files keep the per-trial decode check cheap.
Every single decode is compared against its source file, so a passing
run is also a correctness sweep.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction

from . import analysis, scheme
from .rs import make_code
from .scheme import SystemParams


class FailedTrialError(RuntimeError):
    """A decoded file did not match its source."""

    def __init__(self, seed: int, trial: int, theta: int):
        super().__init__(f"decode mismatch at trial {trial} (seed={seed}, theta={theta})")
        self.seed = seed
        self.trial = trial
        self.theta = theta


@dataclass
class TrialStats:
    trials: int
    total_download: int
    per_server_load: list[int]
    empirical_rate: Fraction
    exact_expected_download: Fraction
    exact_rate: Fraction

    @property
    def mean_download(self) -> Fraction:
        return Fraction(self.total_download, self.trials)


def run_trials(
    params: SystemParams,
    n_trials: int,
    seed: int,
    theta_policy: str = "fixed",
    theta: int = 0,
) -> TrialStats:
    """n_trials independent (query, theta) retrievals over fixed random files."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if theta_policy not in ("fixed", "uniform"):
        raise ValueError(f"unknown theta_policy {theta_policy!r}")
    rng = scheme.make_rng(seed)
    code = make_code(params.n_servers, params.k_mds, params.prime)
    sources = scheme.random_sources(params, rng)
    _, storages = scheme.encode_system(params, sources, code)

    masters = scheme.sample_master_queries(params, rng, n_trials)
    if theta_policy == "uniform":
        thetas = rng.integers(0, params.m_files, size=n_trials).tolist()
    else:
        thetas = [theta] * n_trials

    n_servers = params.n_servers
    per_server = [0] * n_servers
    total = 0
    for trial in range(n_trials):
        master = masters[trial].tolist()
        th = thetas[trial]
        answers = [
            scheme.server_answer(
                storages[t], scheme.build_server_query(master, th, t, params), params
            )
            for t in range(n_servers)
        ]
        decoded = scheme.decode(answers, master, th, params, code)
        if decoded != sources[th]:
            raise FailedTrialError(seed, trial, th)
        for t in range(n_servers):
            load = sum(1 for a in answers[t] if a is not None)
            per_server[t] += load
            total += load

    exact = analysis.expected_download(params)
    return TrialStats(
        trials=n_trials,
        total_download=total,
        per_server_load=per_server,
        empirical_rate=Fraction(params.file_len * n_trials, total),
        exact_expected_download=exact,
        exact_rate=analysis.scheme_rate(params),
    )


def exact_expectation_by_enumeration(
    params: SystemParams, budget: int = 10**6, theta: int = 0
) -> Fraction:
    """Mean realized download over the full query space, exactly.

    Counts NULL rounds directly from the per-server queries; this is an
    enumeration-based check on the closed-form expectation, so it uses
    no distributional shortcuts.
    """
    size = scheme.query_space_size(params)
    if size > budget:
        raise analysis.BudgetExceededError(
            f"|query space| = {size} exceeds budget {budget}"
        )
    n, low = params.n_reduced, params.dummy_low
    total = 0
    for master in scheme.enumerate_query_space(params):
        for t in range(params.n_servers):
            for row in master:
                shifted = (
                    (row[i] + t) % n if i == theta else row[i]
                    for i in range(params.m_files)
                )
                if any(e < low for e in shifted):
                    total += 1
    return Fraction(total, size)


def sweep(grid, trials: int, seed: int, theta_policy: str = "fixed"):
    """Run formulas (and optionally trials) per (N, K, M[, p]) grid point.

    Invalid points are recorded as error rows instead of aborting the
    sweep.  Returns a list of row dicts; see rows_to_csv / rows_to_json.
    """
    rows = []
    for point in grid:
        if len(point) == 4:
            n_servers, k_mds, m_files, prime = point
        else:
            n_servers, k_mds, m_files = point
            prime = scheme.DEFAULT_PRIME
        try:
            params = scheme.derive_params(n_servers, k_mds, m_files, prime)
        except scheme.ParameterError as exc:
            rows.append(
                {"N": n_servers, "K": k_mds, "M": m_files, "p": prime, "error": str(exc)}
            )
            continue
        bound = analysis.min_file_length_bound(n_servers, k_mds, m_files)
        row = {
            "N": n_servers,
            "K": k_mds,
            "M": m_files,
            "p": prime,
            "L": params.file_len,
            "trials": trials,
            "mean_download": None,
            "exact_download": analysis.expected_download(params),
            "empirical_rate": None,
            "capacity": analysis.capacity(n_servers, k_mds, m_files),
            "bound": bound.bound,
            "tight": bound.tight,
            # prior-construction file lengths, for side-by-side comparison
            "L_prev_best": k_mds * params.n_reduced ** (m_files - 1),
            "L_original": k_mds * n_servers**m_files,
        }
        if trials > 0:
            stats = run_trials(params, trials, seed, theta_policy=theta_policy)
            row["mean_download"] = stats.mean_download
            row["empirical_rate"] = stats.empirical_rate
        rows.append(row)
    return rows


CSV_COLUMNS = [
    "N", "K", "M", "p", "L", "trials", "mean_download", "exact_download",
    "empirical_rate", "capacity", "bound", "tight",
]


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Fraction):
        return str(value)
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        if "error" in row:
            continue
        writer.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    def plain(value):
        if isinstance(value, Fraction):
            return str(value)
        return value

    return json.dumps([{k: plain(v) for k, v in row.items()} for row in rows], indent=2)
