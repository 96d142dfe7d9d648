"""Exact measurements of how far the spectral subspace rotates."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .errors import NearSingularityError
from .linalg_core import (
    SIGN,
    OrthogonalProjection,
    SpectralDecomposition,
    apply_spectral_function,
    as_symmetric,
    operator_norm,
    spectral_projection,
    symmetric_eigendecomposition,
)
from .operator_model import AssembledPair, CaseTag, GapGeometry

NEWTON_MAX_ITER = 100


@dataclass(frozen=True)
class AngleReport:
    norm_diff: float
    principal_angles: tuple[float, ...]
    max_angle: float
    rank_P: int
    rank_Q: int
    sign_identity_residual: float | None = None
    sectorial_margin: float | None = None
    gap_persistence: bool | None = None
    projection_convention: str | None = None


def _singular_values(M: np.ndarray) -> np.ndarray:
    # all singular values via the smaller Gram matrix, descending
    if M.size == 0:
        return np.zeros(0)
    G = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    evals = symmetric_eigendecomposition(0.5 * (G + G.T)).eigenvalues
    return np.sqrt(np.clip(evals, 0.0, None))[::-1]


def projection_distance_and_angles(P: OrthogonalProjection, Q: OrthogonalProjection) -> AngleReport:
    """``||P - Q||`` and the principal angles between ``Ran P`` and ``Ran Q``.

    Cosines are the singular values of ``U_P.T @ U_Q``; sines come from the
    residual ``U_Q - U_P (U_P.T U_Q)`` (for the smaller range).  Each angle is
    ``atan2(sin, cos)`` so that both small and near-right angles keep full
    accuracy.
    """
    norm_diff = operator_norm(P.matrix - Q.matrix)
    UP, UQ = P.basis, Q.basis
    if UP.shape[1] < UQ.shape[1]:
        UP, UQ = UQ, UP
    k = UQ.shape[1]
    if k == 0:
        angles = ()
    else:
        C = UP.T @ UQ
        cosines = np.clip(_singular_values(C), 0.0, 1.0)[:k]
        sines = np.clip(_singular_values(UQ - UP @ C), 0.0, 1.0)[::-1][:k]
        angles = tuple(sorted(float(math.atan2(s, c)) for s, c in zip(sines, cosines)))
    return AngleReport(
        norm_diff=min(1.0, norm_diff),
        principal_angles=angles,
        max_angle=max(angles) if angles else 0.0,
        rank_P=P.rank,
        rank_Q=Q.rank,
    )


def sign_difference_identity(J, B, *, shift: float = 0.0, decomposition: SpectralDecomposition | None = None) -> float:
    """``1/2 ||J - sign(B - shift I)||``.

    Pass ``decomposition`` (of B) to skip re-decomposing.
    """
    J = np.asarray(J, dtype=np.float64)
    D = decomposition if decomposition is not None else symmetric_eigendecomposition(B)
    sgn = apply_spectral_function(D.shifted(shift), SIGN)
    return 0.5 * operator_norm(J - sgn)


def sectoriality_check(pair: AssembledPair, mu: float, theta_mu: float) -> float:
    """Margin by which ``U_mu = J sign(B - mu I)`` is sectorial of semi-angle theta_mu.

    U_mu is orthogonal; its eigen-angles phi satisfy ``cos(phi) = eig(sym(U))``.
    The margin is ``min cos(phi) - cos(theta_mu)``; non-negative means every
    eigen-angle is within the sector.
    """
    sgn = apply_spectral_function(pair.decompB.shifted(mu), SIGN)
    U = pair.J @ sgn
    sym = 0.5 * (U + U.T)
    return float(symmetric_eigendecomposition(sym).eigenvalues[0]) - math.cos(theta_mu)


def newton_sign(M) -> np.ndarray:
    """Matrix sign of a symmetric nonsingular matrix by scaled Newton iteration.

    Independent of the eigensolver; used to cross-check that sign(B - mu I)
    does not move with mu.
    """
    X = np.array(as_symmetric(M))
    n = X.shape[0]
    scaled = True
    previous = math.inf
    for _ in range(NEWTON_MAX_ITER):
        try:
            Xinv = np.linalg.inv(X)
        except np.linalg.LinAlgError:
            raise NearSingularityError("Newton sign iteration met a singular iterate", eigenvalue=0.0) from None
        g = math.sqrt(np.linalg.norm(Xinv) / np.linalg.norm(X)) if scaled else 1.0
        Xn = 0.5 * (g * X + Xinv / g)
        Xn = 0.5 * (Xn + Xn.T)
        delta = float(np.linalg.norm(Xn - X)) / math.sqrt(n)
        X = Xn
        if not scaled and (delta <= 1e-15 or (delta < 1e-10 and delta >= 0.5 * previous)):
            break
        if delta < 1e-3:
            # close to an involution: plain Newton converges quadratically
            scaled = False
        previous = delta
    if not np.all(np.isfinite(X)):
        raise NearSingularityError("Newton sign iteration diverged", eigenvalue=0.0)
    return X


def sign_constancy_scan(pair: AssembledPair, geom: GapGeometry, k: int = 9) -> float:
    """Largest pairwise difference of sign(B - mu I) over k guarded-gap samples.

    Each sign is computed by Newton iteration; differences are measured in the
    Frobenius norm, which dominates the operator norm.  A sample that lands
    near spectrum of B (the gap did not persist) gives ``inf``.
    """
    if k < 2:
        raise ValueError("need at least two samples")
    lo, hi = geom.guarded_gap()
    lam = pair.decompB.eigenvalues
    signs = []
    for mu in np.linspace(lo, hi, k):
        if np.min(np.abs(lam - mu)) <= pair.decompB.eps:
            return math.inf
        try:
            signs.append(newton_sign(pair.B - mu * np.eye(pair.n)))
        except NearSingularityError:
            return math.inf
    return max(float(np.linalg.norm(a - b)) for a, b in combinations(signs, 2))


def gap_persistence_check(pair: AssembledPair, geom: GapGeometry) -> bool:
    """True iff B has no eigenvalue in ``[alpha + eps, beta - eps]``."""
    lam = pair.decompB.eigenvalues
    eps = pair.decompB.eps
    inside = (lam >= geom.alpha + eps) & (lam <= geom.beta - eps)
    return not bool(np.any(inside))


def reported_projections(pair: AssembledPair, geom: GapGeometry) -> tuple[OrthogonalProjection, OrthogonalProjection, str]:
    """The pair (P, Q) whose distance is reported.

    Zero in the gap: ``P = E_A(R+)``, ``Q = E_B(R+)``.  Otherwise the lower
    side ``E((-inf, alpha])`` of A (or of -A in the mirrored case, i.e. the
    upper side of A).
    """
    c = geom.cut_point()
    if geom.case_tag is CaseTag.CENTRAL:
        lo, hi, label = c, math.inf, "E(0,+inf)"
    elif geom.mirrored:
        lo, hi, label = c, math.inf, "E[beta,+inf)"
    else:
        lo, hi, label = -math.inf, c, "E(-inf,alpha]"
    return spectral_projection(pair.decompA, lo, hi), spectral_projection(pair.decompB, lo, hi), label


def measure_rotation(pair: AssembledPair, geom: GapGeometry, mu: float | None = None,
                     theta_mu: float | None = None) -> AngleReport:
    """Full AngleReport: distance, angles, sign identity, sector margin, gap flag."""
    gap_ok = gap_persistence_check(pair, geom)
    P, Q, label = reported_projections(pair, geom)
    report = projection_distance_and_angles(P, Q)
    identity = sign_difference_identity(pair.J, pair.B, shift=geom.cut_point(), decomposition=pair.decompB)
    margin = None
    if mu is not None and theta_mu is not None:
        margin = sectoriality_check(pair, mu, theta_mu)
    return replace(
        report,
        sign_identity_residual=abs(report.norm_diff - identity),
        sectorial_margin=margin,
        gap_persistence=gap_ok,
        projection_convention=label,
    )

