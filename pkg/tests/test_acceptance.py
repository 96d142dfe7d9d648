"""Acceptance criteria 1 to 11.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion number (see ``conftest.py``).
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import CASE2_GRID, CENTRAL_GRID, HALF_SQRT2, W_GRID
from tan2theta.cli_reporter import main
from tan2theta.instance_lab import GeneratorConfig, run_property_suite, sharpness_2x2, spec_2x2
from tan2theta.linalg_core import symmetric_eigendecomposition
from tan2theta.operator_model import assemble, detect_gap, pair_from_matrices
from tan2theta.subspace_geometry import gap_persistence_check, sectoriality_check

FIXTURES = Path(__file__).parent / "fixtures"
SUITE_COUNT = 1000
SUITE_DIM = 20
GEOMETRIES = ("central", "case1", "case2")


def sharpness_grid():
    return [(a, b, w) for a, b in list(CENTRAL_GRID) + list(CASE2_GRID) for w in W_GRID]


@pytest.fixture(scope="module")
def sharpness_records():
    start = time.perf_counter()
    records = [sharpness_2x2(a, b, w) for a, b, w in sharpness_grid()]
    return records, time.perf_counter() - start


@pytest.fixture(scope="module")
def suites():
    start = time.perf_counter()
    results = {}
    for geometry in GEOMETRIES:
        config = GeneratorConfig(seed=2024, n_plus=SUITE_DIM, n_minus=SUITE_DIM, geometry=geometry,
                                 target_v=(0.1, 10.0), target_scale="log", count=SUITE_COUNT,
                                 random_dims=True)
        results[geometry] = run_property_suite(config)
    return results, time.perf_counter() - start


def all_rows(suites):
    return [r for result in suites[0].values() for r in result.rows]


# --- 1 -----------------------------------------------------------------------

@pytest.mark.criterion(1, "2x2 sharpness: closed form within 1e-10, bounds tight within 1e-6, < 1 s")
def test_sharpness_grid(sharpness_records):
    records, elapsed = sharpness_records
    assert len(records) == len(sharpness_grid()) == 65
    for rec in records:
        closed = math.sin(0.5 * math.atan(2.0 * abs(rec.w) / (rec.beta - rec.alpha)))
        assert abs(rec.exact_numeric - closed) <= 1e-10, rec
        assert abs(rec.central_bound_opt - rec.exact_numeric) <= 1e-6, rec
        if rec.alpha > 0:
            assert rec.case_bound is not None
            assert abs(rec.case_bound - rec.exact_numeric) <= 1e-6, rec
    assert elapsed < 1.0, elapsed


# --- 2 -----------------------------------------------------------------------

@pytest.mark.criterion(2, "mu optimizer lands on the midpoint with v_min = 2|w|/(beta-alpha)")
def test_mu_optimizer(sharpness_records):
    for rec in sharpness_records[0]:
        gap = rec.beta - rec.alpha
        assert abs(rec.mu_star - 0.5 * (rec.alpha + rec.beta)) <= 1e-5 * gap, rec
        assert abs(rec.v_min - 2.0 * abs(rec.w) / gap) <= 1e-8, rec


# --- 3 -----------------------------------------------------------------------

@pytest.mark.criterion(3, "randomized bound validity over 3 x 1000 instances, < 60 s")
def test_random_bound_validity(suites):
    results, elapsed = suites
    for geometry, result in results.items():
        assert len(result.rows) == SUITE_COUNT
        errors = [(r.id, r.error) for r in result.rows if r.error]
        assert not errors, (geometry, errors[:5])
        for r in result.rows:
            assert r.n <= 2 * SUITE_DIM
            assert all(s >= -1e-10 for s in r.slacks.values()), (geometry, r.id, r.slacks)
            assert r.exact < HALF_SQRT2 - 1e-12, (geometry, r.id, r.exact)
        assert result.violation_count == 0, (geometry, result.summary()["failed_checks"])
    assert elapsed < 60.0, elapsed


def test_suite_covers_each_geometry(suites):
    tags = {g: {r.geometry for r in res.rows} for g, res in suites[0].items()}
    assert tags["case1"] == {"CaseI"}
    assert tags["case2"] == {"CaseII"}
    assert "Central" in tags["central"]


# --- 4 -----------------------------------------------------------------------

@pytest.mark.criterion(4, "sign-function identity and mu-independence of sign(B - mu)")
def test_sign_identity(suites):
    for r in all_rows(suites):
        assert r.sign_residual <= 1e-10, (r.id, r.sign_residual)
        assert r.sign_constancy <= 1e-10, (r.id, r.sign_constancy)


# --- 5 -----------------------------------------------------------------------

@pytest.mark.criterion(5, "gap persistence on the suite, negative control flagged")
def test_gap_persistence(suites):
    assert all(r.gap_ok for r in all_rows(suites))
    pair = pair_from_matrices(np.diag([1.0, -1.0]), np.diag([-1.5, 0.0]), np.diag([1.0, -1.0]))
    assert gap_persistence_check(pair, detect_gap(pair.decompA, pair.J)) is False


# --- 6 -----------------------------------------------------------------------

@pytest.mark.criterion(6, "sectoriality margins on the suite and zero margin on the tight instance")
def test_sectoriality(suites):
    for r in all_rows(suites):
        assert r.sectorial_margin >= -1e-8, (r.id, r.sectorial_margin)
        assert r.sectorial_margin_fixed >= -1e-8, (r.id, r.sectorial_margin_fixed)
    pair = assemble(spec_2x2(-1.0, 1.0, 1.0))
    assert abs(sectoriality_check(pair, 0.0, math.atan(1.0))) <= 1e-9


# --- 7 -----------------------------------------------------------------------

@pytest.mark.criterion(7, "case bound never exceeds the relative sin-theta bound")
def test_improvement_ordering(suites):
    rows = suites[0]["case2"].rows
    assert rows
    for r in rows:
        assert r.bounds["case"] <= r.bounds["sin_theta"] + 1e-12, (r.id, r.bounds)


# --- 8 -----------------------------------------------------------------------

@pytest.mark.criterion(8, "Birman-Schwinger: |A|+V positive definite iff v0 < 1 on 500 instances")
def test_birman_schwinger():
    config = GeneratorConfig(seed=99, n_plus=6, n_minus=6, geometry="central", target_v=(0.2, 1.8),
                             target_scale="linear", target_exclude=(1.0 - 1e-3, 1.0 + 1e-3), count=500,
                             random_dims=True)
    result = run_property_suite(config)
    assert len(result.rows) == 500
    assert result.inconclusive_count == 0
    below = 0
    for r in result.rows:
        assert r.error is None, r.error
        assert abs(r.v_base - 1.0) > 1e-3
        assert r.bs_positive_definite == (r.v_base < 1.0), (r.id, r.v_base)
        below += r.v_base < 1.0
    assert 0 < below < 500


# --- 9 -----------------------------------------------------------------------

@pytest.mark.criterion(9, "eigensolver residuals on 200 symmetric matrices, < 20 s")
def test_eigensolver_quality():
    rng = np.random.default_rng(20240)
    sizes = rng.integers(1, 101, size=200)
    sizes[:2] = (1, 100)
    start = time.perf_counter()
    for n in sizes:
        X = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-3, 3)
        M = 0.5 * (X + X.T)
        D = symmetric_eigendecomposition(M)
        scale = max(1.0, np.linalg.norm(M, 2))
        assert np.linalg.norm(M - (D.basis * D.eigenvalues) @ D.basis.T, 2) <= 1e-11 * scale, n
        assert np.linalg.norm(D.basis.T @ D.basis - np.eye(n), 2) <= 1e-12, n
    assert time.perf_counter() - start < 20.0


# --- 10 ----------------------------------------------------------------------

@pytest.mark.criterion(10, "proof diagnostics: kappa values within their closed-form bounds")
def test_proof_diagnostics(suites):
    checked = 0
    for r in all_rows(suites):
        if r.geometry in ("CaseI", "CaseII"):
            assert r.checks.get("kappa") is True, (r.id, r.geometry)
            checked += 1
    assert checked >= 2 * SUITE_COUNT


# --- 11 ----------------------------------------------------------------------

def _cli_runs(out):
    instance = FIXTURES / "mixed_3x3.json"
    return [
        ["analyze", instance, "-o", out / "report.json"],
        ["mu-scan", instance, "-o", out / "scan.csv", "--points", 17],
        ["suite", "--seed", 5, "--count", 10, "--geometry", "case2", "--dims", "4,3", "--target-v", "0.5",
         "-o", out / "suite.csv"],
        ["sharpness", "--alpha", 1, "--beta", 3, "--w-grid", "0.1,1,5", "-o", out / "sharp.csv"],
    ]


@pytest.mark.criterion(11, "CLI outputs byte-identical across runs, exit-code classes")
def test_cli_reproducible(tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / name
        out.mkdir()
        for argv in _cli_runs(out):
            assert main([str(a) for a in argv]) == 0, argv
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert len(outputs[0]) == 5
    assert outputs[0] == outputs[1]
    json.loads(outputs[0]["report.json"])


@pytest.mark.criterion(11, "CLI outputs byte-identical across runs, exit-code classes")
@pytest.mark.parametrize("fixture,code", [
    ("example_tight.json", 0),
    ("case2_tight.json", 0),
    ("truncated.json", 2),
    ("ragged.json", 2),
    ("shape_mismatch.json", 2),
    ("case2_overlap.json", 3),
    ("singular.json", 3),
    ("hint_mismatch.json", 3),
])
def test_cli_exit_codes(tmp_path, fixture, code):
    assert main(["analyze", str(FIXTURES / fixture), "-o", str(tmp_path / "r.json")]) == code


@pytest.mark.criterion(11, "CLI outputs byte-identical across runs, exit-code classes")
def test_cli_violation_exit_code(tmp_path):
    argv = ["suite", "--count", "3", "--corrupt-slack-tolerance", "-o", str(tmp_path / "s.csv")]
    assert main(argv) == 1
