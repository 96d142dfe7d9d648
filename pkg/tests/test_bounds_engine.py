import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import HALF_SQRT2, INV_SQRT3, SIN_HALF_ATAN_2, SIN_HALF_ATAN_2_3, SIN_PI_8, exact_2x2
from tan2theta.bounds_engine import (
    BS_BAND,
    birman_schwinger_check,
    build_report,
    central_tan2theta_bound,
    classical_davis_kahan,
    golden_section_minimize,
    optimize_relative_bound,
    reference_shift,
    proof_diagnostics,
    relative_gap,
    relative_sin_theta,
    semibounded_tan2theta,
)
from tan2theta.errors import DomainError
from tan2theta.instance_lab import GeneratorConfig, generate_instance
from tan2theta.operator_model import (
    BlockOperatorSpec,
    CaseTag,
    RelativeBoundEvaluator,
    assemble,
    detect_gap,
    pair_from_matrices,
)


def example(alpha=-1.0, beta=1.0, w=1.0):
    if alpha < 0 < beta:
        spec = BlockOperatorSpec([[beta]], [[-alpha]], [[w]], layout="central")
    else:
        spec = BlockOperatorSpec([[beta]], [[alpha]], [[w]], layout="case2")
    pair = assemble(spec)
    return pair, detect_gap(pair.decompA, pair.J)


def geometry_of(diag, signs):
    pair = pair_from_matrices(np.diag(diag), np.zeros((len(diag),) * 2), np.diag(signs))
    return pair, detect_gap(pair.decompA, pair.J)


# --- scalar bounds -----------------------------------------------------------

def test_classical_examples():
    assert classical_davis_kahan(0.0, 2.0) == 0.0
    assert classical_davis_kahan(1.0, 2.0) == pytest.approx(SIN_PI_8, rel=1e-15)
    values = [classical_davis_kahan(x, 1.0) for x in np.geomspace(1e-3, 1e12, 60)]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert values[-1] < HALF_SQRT2 and values[-1] == pytest.approx(HALF_SQRT2, abs=1e-9)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_classical_domain(d):
    with pytest.raises(DomainError):
        classical_davis_kahan(1.0, d)


def test_central_examples():
    assert central_tan2theta_bound(0.0) == 0.0
    assert central_tan2theta_bound(1.0) == pytest.approx(SIN_PI_8, rel=1e-15)
    assert central_tan2theta_bound(2.0) == pytest.approx(SIN_HALF_ATAN_2, rel=1e-15)
    with pytest.raises(DomainError):
        central_tan2theta_bound(-0.1)


def test_central_bound_at_two_matches_brute_force_instance():
    # v = 2 for A = diag(1, -1), w = 2 at mu = 0, which is also the optimum
    pair, geom = example(w=2.0)
    report = build_report(pair, geom)
    assert report.exact_norm == pytest.approx(SIN_HALF_ATAN_2, abs=1e-12)
    assert report.central_bound == pytest.approx(SIN_HALF_ATAN_2, abs=1e-9)


def test_case_two_bound_example():
    _, geom = example(1.0, 3.0)
    result = semibounded_tan2theta(INV_SQRT3, geom)
    assert result.delta == pytest.approx(2.0 * INV_SQRT3, rel=1e-15)
    assert result.bound == pytest.approx(SIN_PI_8, rel=1e-14)


def test_case_one_bound_example():
    _, geom = example(-1.0, 2.0)
    assert geom.case_tag is CaseTag.CASE_I
    result = semibounded_tan2theta(1.0 / math.sqrt(2.0), geom)
    assert 2.0 / result.delta / math.sqrt(2.0) == pytest.approx(2.0 / 3.0, rel=1e-15)
    assert result.bound == pytest.approx(SIN_HALF_ATAN_2_3, rel=1e-14)
    assert result.bound == pytest.approx(exact_2x2(-1.0, 2.0, 1.0), abs=1e-15)


def test_case_bound_zero_and_not_applicable():
    _, geom = example(1.0, 3.0)
    assert semibounded_tan2theta(0.0, geom).bound == 0.0
    _, central = example(-2.0, 1.0)
    assert semibounded_tan2theta(0.5, central) is None
    assert relative_gap(central) is None


def test_relative_sin_theta_examples():
    assert relative_sin_theta(INV_SQRT3, 2.0 * INV_SQRT3) == pytest.approx(0.5, rel=1e-15)
    assert relative_sin_theta(0.0, 1.0) == 0.0
    assert relative_sin_theta(10.0, 1.0) == 10.0  # not clamped
    with pytest.raises(DomainError):
        relative_sin_theta(1.0, 0.0)


def test_sin_theta_improvement_on_dense_grid():
    for x in np.linspace(0.0, 50.0, 5001):
        assert math.sin(0.5 * math.atan(2.0 * x)) <= x + 1e-15


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0, 1e6), b=st.floats(0, 1e6))
def test_bounds_monotone_in_v(a, b):
    lo, hi = sorted((a, b))
    assert central_tan2theta_bound(lo) <= central_tan2theta_bound(hi)
    _, geom = example(1.0, 3.0)
    assert semibounded_tan2theta(lo, geom).bound <= semibounded_tan2theta(hi, geom).bound
    assert central_tan2theta_bound(hi) < HALF_SQRT2


# --- optimizer ---------------------------------------------------------------

def test_golden_section_on_parabola():
    x, fx = golden_section_minimize(lambda t: (t - 0.3) ** 2 + 1.0, -1.0, 2.0, 1e-10)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert fx == pytest.approx(1.0, abs=1e-15)


def test_optimizer_symmetric_example():
    pair, geom = example()
    scan = optimize_relative_bound(pair, geom)
    assert scan.mu_star == pytest.approx(0.0, abs=1e-6)
    assert scan.v_min == pytest.approx(1.0, abs=1e-8)
    assert len(scan.samples) == 65
    assert [s[0] for s in scan.samples] == sorted(s[0] for s in scan.samples)


def test_optimizer_shifted_example():
    pair, geom = example(-1.0, 3.0)
    scan = optimize_relative_bound(pair, geom)
    assert scan.mu_star == pytest.approx(1.0, abs=1e-6)
    assert scan.v_min == pytest.approx(0.5, abs=1e-8)


def test_optimizer_zero_coupling_reports_midpoint():
    pair, geom = example(-1.0, 3.0, 0.0)
    scan = optimize_relative_bound(pair, geom)
    assert scan.v_min == 0.0
    assert scan.mu_star == pytest.approx(1.0)


def test_optimizer_never_worse_than_any_sample():
    config = GeneratorConfig(seed=5, n_plus=4, n_minus=3, geometry="case1", target_v=(0.2, 5.0), count=10)
    for i in range(10):
        pair = assemble(generate_instance(config, i))
        geom = detect_gap(pair.decompA, pair.J)
        scan = optimize_relative_bound(pair, geom)
        assert scan.v_min <= min(s[1] for s in scan.samples)
        assert central_tan2theta_bound(scan.v_min) <= min(central_tan2theta_bound(s[1]) for s in scan.samples)


def test_optimizer_rejects_tiny_grid():
    pair, geom = example()
    with pytest.raises(ValueError):
        optimize_relative_bound(pair, geom, grid_points=2)


# --- Birman-Schwinger --------------------------------------------------------

@pytest.mark.parametrize("w,v0,lowest,pd", [(0.5, 0.5, 0.5, True), (2.0, 2.0, -1.0, False), (0.0, 0.0, 1.0, True)])
def test_birman_schwinger_examples(w, v0, lowest, pd):
    pair, geom = example(w=w)
    bs = birman_schwinger_check(pair, geom)
    assert bs.v0 == pytest.approx(v0, abs=1e-15)
    assert bs.min_eig_form == pytest.approx(lowest, abs=1e-15)
    assert bs.positive_definite is pd
    assert bs.consistent is True


def test_birman_schwinger_boundary_is_inconclusive():
    pair, geom = example(w=1.0 + 0.5 * BS_BAND)
    assert birman_schwinger_check(pair, geom).consistent is None


def test_birman_schwinger_needs_central_geometry():
    pair, geom = example(1.0, 3.0)
    with pytest.raises(DomainError):
        birman_schwinger_check(pair, geom)


# --- proof diagnostics -------------------------------------------------------

def test_reference_shift_choices():
    assert reference_shift(geometry_of([2.0, -1.0], [1, -1])[1]) == 0.5
    assert reference_shift(geometry_of([3.0, 1.0], [1, -1])[1]) == 2.0
    assert reference_shift(geometry_of([-1.0, -3.0], [1, -1])[1]) == -2.0
    assert reference_shift(geometry_of([1.0, -2.0], [1, -1])[1]) == 0.0


def test_kappa_plus_case_one_equality():
    pair, geom = geometry_of([2.0, -1.0], [1, -1])
    d = proof_diagnostics(pair, geom)
    assert d.mu == d.mu_reference_choice == 0.5
    assert d.kappa_plus == pytest.approx(math.sqrt(2.0 / 1.5), rel=1e-14)
    assert d.kappa_plus_bound == pytest.approx(math.sqrt(2.0 / 1.5), rel=1e-14)
    assert d.ok


def test_kappa_minus_case_two():
    pair, geom = geometry_of([3.0, 1.0], [1, -1])
    d = proof_diagnostics(pair, geom)
    assert d.kappa_minus == pytest.approx(1.0, rel=1e-14)
    assert d.kappa_minus_bound == pytest.approx(1.0, rel=1e-14)


def test_kappa_at_zero_shift_case_one():
    pair, geom = geometry_of([2.0, -1.0], [1, -1])
    d = proof_diagnostics(pair, geom, mu=0.0)
    assert d.kappa_plus == pytest.approx(1.0) and d.kappa_plus_bound == pytest.approx(1.0)
    assert d.v_mu_bound is None


def test_case_two_shift_must_exceed_d_minus():
    pair, geom = geometry_of([3.0, 1.0], [1, -1])
    with pytest.raises(DomainError):
        proof_diagnostics(pair, geom, mu=0.9)


def test_diagnostics_need_semibounded_geometry():
    pair, geom = geometry_of([1.0, -2.0], [1, -1])
    with pytest.raises(DomainError):
        proof_diagnostics(pair, geom)


def test_mirrored_diagnostics_hold():
    rng = np.random.default_rng(2)
    A = np.diag([-1.0, -1.5, -4.0, -6.0])
    V = np.zeros((4, 4))
    V[:2, 2:] = rng.standard_normal((2, 2))
    V[2:, :2] = V[:2, 2:].T
    pair = pair_from_matrices(A, V, np.diag([1.0, 1.0, -1.0, -1.0]))
    geom = detect_gap(pair.decompA, pair.J)
    assert geom.case_tag is CaseTag.CASE_II_MIRRORED
    assert proof_diagnostics(pair, geom).ok


# --- reports -----------------------------------------------------------------

def test_report_slack_keys_and_tightest():
    pair, geom = example(1.0, 3.0)
    report = build_report(pair, geom)
    assert set(report.slacks) == {"classical", "central", "case", "sin_theta"}
    assert report.case_bound == pytest.approx(SIN_PI_8, abs=1e-12)
    assert report.sin_theta_bound == pytest.approx(0.5, rel=1e-14)
    assert report.violations() == []
    name, value = report.tightest()
    assert value == min(report.bounds.values())


def test_report_central_has_no_case_bound():
    pair, geom = example(-2.0, 1.0)
    report = build_report(pair, geom)
    assert set(report.slacks) == {"classical", "central"}
    assert report.birman_schwinger is not None
    assert report.diagnostics is None


def test_violations_detects_bad_slack():
    pair, geom = example()
    report = build_report(pair, geom)
    broken = replace(report, exact_norm=report.exact_norm + 1e-3)
    assert any("below exact norm" in v for v in broken.violations())


@pytest.mark.parametrize("alpha,beta,w", [(-1, 1, 1), (1, 3, 1), (-1, 2, 1), (-1, 3, 1), (-2, 0.5, 5)])
def test_two_by_two_bounds_are_attained(alpha, beta, w):
    pair, geom = example(alpha, beta, w)
    report = build_report(pair, geom)
    exact = exact_2x2(alpha, beta, w)
    assert report.exact_norm == pytest.approx(exact, abs=1e-12)
    assert report.central_bound == pytest.approx(exact, abs=1e-6)
    if report.case_bound is not None:
        assert report.case_bound == pytest.approx(exact, abs=1e-6)


def test_infimum_consistency_against_fixed_shift():
    config = GeneratorConfig(seed=3, n_plus=3, n_minus=5, geometry="case2", target_v=(0.1, 5.0), count=8)
    for i in range(8):
        pair = assemble(generate_instance(config, i))
        geom = detect_gap(pair.decompA, pair.J)
        report = build_report(pair, geom)
        fixed = RelativeBoundEvaluator(pair)(reference_shift(geom))
        assert report.v_inf <= fixed * (1 + 1e-12)
        assert report.exact_norm <= report.case_bound + 1e-10 <= report.sin_theta_bound + 1e-10 + 1e-12
