"""Bound formulas, the shift optimizer and the assembled BoundReport."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InternalInvariantError
from .linalg_core import ABS, apply_spectral_function, operator_norm, symmetric_eigendecomposition
from .operator_model import (
    AssembledPair,
    CaseTag,
    GapGeometry,
    RelativeBoundEvaluator,
    base_relative_bound,
    detect_gap,
)
from .subspace_geometry import AngleReport, measure_rotation

DEFAULT_GRID_POINTS = 65
GOLDEN_RTOL = 1e-8
SLACK_TOL = 1e-10
HALF_SQRT2 = math.sqrt(2.0) / 2.0
BS_BAND = 1e-6

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# scalar bounds
# ---------------------------------------------------------------------------

def _half_arctan_sine(x: float) -> float:
    return math.sin(0.5 * math.atan(x))


def classical_davis_kahan(norm_v: float, d: float) -> float:
    """``sin(1/2 arctan(2 ||V|| / d))``, the classical tan 2-theta bound."""
    if not d > 0:
        raise DomainError(f"gap length must be positive, got {d!r}")
    if norm_v < 0:
        raise DomainError(f"||V|| must be non-negative, got {norm_v!r}")
    return _half_arctan_sine(2.0 * norm_v / d)


def central_tan2theta_bound(v_inf: float) -> float:
    """``sin(1/2 arctan v)`` with v the optimized relative bound."""
    if not v_inf >= 0:
        raise DomainError(f"relative bound must be non-negative, got {v_inf!r}")
    return _half_arctan_sine(v_inf)


class CaseBound(NamedTuple):
    bound: float
    delta: float


def relative_gap(geom: GapGeometry) -> float | None:
    """The relative gap length delta, or None outside Case I / Case II."""
    if not geom.semibounded:
        return None
    root = math.sqrt(geom.d_plus * geom.d_minus)
    if geom.case_tag is CaseTag.CASE_I:
        return (geom.d_plus + geom.d_minus) / root
    return (geom.d_plus - geom.d_minus) / root


def semibounded_tan2theta(v_base: float, geom: GapGeometry) -> CaseBound | None:
    """``sin(1/2 arctan(2 v / delta))`` in Case I or II; None when not applicable.

    Case I needs ``d+ > d-``; Case II needs A (or -A when mirrored) positive.
    """
    if v_base < 0:
        raise DomainError(f"relative bound must be non-negative, got {v_base!r}")
    delta = relative_gap(geom)
    if delta is None:
        return None
    return CaseBound(_half_arctan_sine(2.0 * v_base / delta), delta)


def relative_sin_theta(v_base: float, delta: float) -> float:
    """``v / delta`` (not clamped)."""
    if not delta > 0:
        raise DomainError(f"delta must be positive, got {delta!r}")
    return v_base / delta


# ---------------------------------------------------------------------------
# shift optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MuScan:
    samples: tuple[tuple[float, float, bool], ...]
    mu_star: float
    v_min: float


def golden_section_minimize(f, a: float, b: float, tol: float):
    """Minimize a scalar function on [a, b]; returns the best (x, f(x)) seen."""
    best = (math.inf, math.nan)

    def probe(x):
        nonlocal best
        y = f(x)
        if y < best[0]:
            best = (y, x)
        return y

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = probe(c), probe(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = probe(d)
    probe(0.5 * (a + b))
    return best[1], best[0]


def optimize_relative_bound(pair: AssembledPair, geom: GapGeometry,
                            grid_points: int = DEFAULT_GRID_POINTS) -> MuScan:
    """Minimize ``mu -> v_mu`` over the guarded gap.

    A uniform grid first (``mu -> v_mu`` is not assumed unimodal), then
    golden-section refinement between the neighbours of the best grid point
    down to a bracket of ``1e-8 (beta - alpha)``.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be at least 3")
    lo, hi = geom.guarded_gap()
    evaluate = RelativeBoundEvaluator(pair)
    mus = np.linspace(lo, hi, grid_points)
    samples = []
    for mu in mus:
        mu = float(mu)
        pd = evaluate.positive_definite(mu)
        samples.append((mu, evaluate(mu) if pd else math.inf, pd))
    values = np.array([s[1] for s in samples])
    if not np.any(np.isfinite(values)):
        raise InternalInvariantError("J(A - mu I) failed to be positive definite on the whole gap grid")
    i = int(np.argmin(values))
    if values[i] == 0.0:
        mid = grid_points // 2
        return MuScan(tuple(samples), float(mus[mid]), 0.0)
    a = float(mus[max(i - 1, 0)])
    b = float(mus[min(i + 1, grid_points - 1)])
    mu_ref, v_ref = golden_section_minimize(evaluate, a, b, GOLDEN_RTOL * geom.length)
    if v_ref < values[i]:
        return MuScan(tuple(samples), mu_ref, v_ref)
    return MuScan(tuple(samples), float(mus[i]), float(values[i]))


# ---------------------------------------------------------------------------
# Birman-Schwinger and proof diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BirmanSchwinger:
    v0: float
    min_eig_form: float
    positive_definite: bool
    consistent: bool | None  # None: inconclusive, |v0 - 1| inside the band


def birman_schwinger_check(pair: AssembledPair, geom: GapGeometry | None = None) -> BirmanSchwinger:
    """Is ``|A| + V`` positive definite exactly when ``v0 < 1``?"""
    geom = geom or detect_gap(pair.decompA, pair.J)
    if not geom.central:
        raise DomainError("Birman-Schwinger check needs 0 in the gap of A")
    v0 = base_relative_bound(pair)
    form = apply_spectral_function(pair.decompA, ABS) + pair.V
    form = 0.5 * (form + form.T)
    D = symmetric_eigendecomposition(form)
    lowest = float(D.eigenvalues[0])
    pd = lowest > D.eps
    consistent = None if abs(v0 - 1.0) <= BS_BAND else (pd == (v0 < 1.0))
    return BirmanSchwinger(v0, lowest, pd, consistent)


@dataclass(frozen=True)
class ProofDiagnostics:
    mu: float
    mu_reference_choice: float
    kappa_plus: float
    kappa_plus_bound: float
    kappa_minus: float
    kappa_minus_bound: float
    v_mu: float
    v_mu_bound: float | None  # 2 v / delta, only at the reference shift

    @property
    def ok(self) -> bool:
        good = (self.kappa_plus <= self.kappa_plus_bound + SLACK_TOL
                and self.kappa_minus <= self.kappa_minus_bound + SLACK_TOL)
        if self.v_mu_bound is not None:
            good = good and self.v_mu <= self.v_mu_bound * (1 + SLACK_TOL) + SLACK_TOL
        return good


def reference_shift(geom: GapGeometry) -> float:
    """The fixed shift used for Case I / II (in A's own coordinates)."""
    if geom.case_tag is CaseTag.CASE_I:
        return 0.5 * (geom.d_plus - geom.d_minus)
    if geom.case_tag is CaseTag.CASE_II:
        return 0.5 * (geom.d_plus + geom.d_minus)
    if geom.case_tag is CaseTag.CASE_II_MIRRORED:
        return -0.5 * (geom.d_plus + geom.d_minus)
    return 0.0


def _restricted_norm(Q: np.ndarray, values: np.ndarray) -> float:
    # norm of sum_k values_k q_k q_k^T, an operator living on span(q_k)
    M = (Q * values) @ Q.T
    return operator_norm(0.5 * (M + M.T))


def proof_diagnostics(pair: AssembledPair, geom: GapGeometry, mu: float | None = None) -> ProofDiagnostics:
    """Check the two factor bounds used to estimate ``v_mu`` by ``2 v / delta``.

    ``kappa_plus = || |A|^{1/2} (|A| - mu)^{-1/2} restricted to H+ ||`` and
    ``kappa_minus = || |A|^{1/2} (mu - A)^{-1/2} restricted to H- ||`` against
    their closed forms.  Mirrored geometries are evaluated on ``-A``.
    """
    if not geom.semibounded:
        raise DomainError(f"proof diagnostics need Case I or Case II geometry, got {geom.case_tag.value}")
    choice = reference_shift(geom)
    mu = choice if mu is None else float(mu)
    lam, Q, signs = pair.decompA.eigenvalues, pair.decompA.basis, pair.j_signs
    m = mu
    if geom.mirrored:
        lam, signs, m = -lam, -signs, -mu
    dp, dm = geom.d_plus, geom.d_minus
    if not m < dp:
        raise DomainError(f"shift {mu} must lie below inf Sigma+")
    if geom.case_tag is CaseTag.CASE_I:
        if m < 0:
            raise DomainError(f"Case I factor bound needs mu >= 0, got {mu}")
        minus_bound = math.sqrt(dm / (dm + m))
    else:
        if not m > dm:
            raise DomainError(f"Case II factor bound needs mu > d- = {dm}, got {mu}")
        minus_bound = math.sqrt(dm / (m - dm))
    plus, minus = signs > 0, signs < 0
    lp, lm = lam[plus], lam[minus]
    kappa_plus = _restricted_norm(Q[:, plus], np.sqrt(np.abs(lp) / (np.abs(lp) - m)))
    kappa_minus = _restricted_norm(Q[:, minus], np.sqrt(np.abs(lm) / (m - lm)))
    v_mu = RelativeBoundEvaluator(pair)(mu)
    v_mu_bound = None
    if mu == choice:
        v_mu_bound = 2.0 * base_relative_bound(pair) / relative_gap(geom)
    return ProofDiagnostics(
        mu=mu, mu_reference_choice=choice,
        kappa_plus=kappa_plus, kappa_plus_bound=math.sqrt(dp / (dp - m)),
        kappa_minus=kappa_minus, kappa_minus_bound=minus_bound,
        v_mu=v_mu, v_mu_bound=v_mu_bound,
    )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    geometry: GapGeometry
    exact_norm: float
    v_base: float
    v_inf: float
    mu_star: float
    theta_star: float
    classical_bound: float | None
    central_bound: float | None
    case_bound: float | None
    sin_theta_bound: float | None
    delta: float | None
    norm_v: float
    angles: AngleReport
    scan: MuScan = field(repr=False)
    birman_schwinger: BirmanSchwinger | None = None
    diagnostics: ProofDiagnostics | None = None

    @property
    def bounds(self) -> dict[str, float]:
        named = {
            "classical": self.classical_bound,
            "central": self.central_bound,
            "case": self.case_bound,
            "sin_theta": self.sin_theta_bound,
        }
        return {k: v for k, v in named.items() if v is not None}

    @property
    def slacks(self) -> dict[str, float]:
        return {k: v - self.exact_norm for k, v in self.bounds.items()}

    def tightest(self) -> tuple[str, float]:
        name = min(self.bounds, key=self.bounds.get)
        return name, self.bounds[name]

    def violations(self, slack_tol: float = SLACK_TOL) -> list[str]:
        """Human-readable list of broken report invariants (empty when sound)."""
        out = [f"{k} bound below exact norm (slack {s:.3e})"
               for k, s in self.slacks.items() if s < -slack_tol]
        if not self.exact_norm < HALF_SQRT2 + 1e-12:
            out.append(f"exact norm {self.exact_norm!r} reaches sqrt(2)/2")
        if self.central_bound is not None and not self.central_bound < HALF_SQRT2:
            out.append("central bound is not below sqrt(2)/2")
        return out


def build_report(pair: AssembledPair, geom: GapGeometry | None = None, *,
                 grid_points: int = DEFAULT_GRID_POINTS) -> BoundReport:
    """Evaluate every applicable bound for one pair against the exact rotation."""
    geom = geom or detect_gap(pair.decompA, pair.J)
    scan = optimize_relative_bound(pair, geom, grid_points)
    theta_star = math.atan(scan.v_min)
    angles = measure_rotation(pair, geom, scan.mu_star, theta_star)
    v_base = base_relative_bound(pair)
    norm_v = operator_norm(pair.V)
    case = semibounded_tan2theta(v_base, geom)
    sin_theta = None
    if case is not None and geom.case_tag in (CaseTag.CASE_II, CaseTag.CASE_II_MIRRORED):
        sin_theta = relative_sin_theta(v_base, case.delta)
    return BoundReport(
        geometry=geom,
        exact_norm=angles.norm_diff,
        v_base=v_base,
        v_inf=scan.v_min,
        mu_star=scan.mu_star,
        theta_star=theta_star,
        classical_bound=classical_davis_kahan(norm_v, geom.length),
        central_bound=central_tan2theta_bound(scan.v_min),
        case_bound=case.bound if case else None,
        sin_theta_bound=sin_theta,
        delta=case.delta if case else None,
        norm_v=norm_v,
        angles=angles,
        scan=scan,
        birman_schwinger=birman_schwinger_check(pair, geom) if geom.central else None,
        diagnostics=proof_diagnostics(pair, geom) if geom.semibounded else None,
    )

