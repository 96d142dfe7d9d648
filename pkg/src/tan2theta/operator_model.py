"""Block operator pairs (A, V), the involution J and the gap geometry.

A is block diagonal with respect to ``H = H+ (+) H-`` and the coupling V has
only off-diagonal blocks ``W`` and ``W.T``, so ``JV = -VJ`` with
``J = diag(I, -I)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    HintMismatchError,
    InternalInvariantError,
    InvalidInstanceError,
    NoGapError,
    NotPositiveDefiniteError,
    SingularOperatorError,
)
from .linalg_core import (
    ABS_INV_SQRT,
    INV_SQRT,
    SpectralDecomposition,
    apply_spectral_function,
    as_rect,
    as_symmetric,
    diag_scaled_norm,
    eps_spec,
    operator_norm,
    symmetric_eigendecomposition,
)

MAX_DIMENSION = 500
GUARD_FRACTION = 1e-3
OFF_DIAGONAL_RTOL = 1e-10


class Layout(str, Enum):
    CENTRAL = "central"  # A = diag(A+, -A-), both blocks positive definite
    CASE2 = "case2"      # A = diag(A+, A-), spec(A-) strictly below spec(A+)


class CaseTag(str, Enum):
    CENTRAL = "Central"
    CASE_I = "CaseI"
    CASE_II = "CaseII"
    CASE_II_MIRRORED = "CaseII-mirrored"


@dataclass(frozen=True)
class BlockOperatorSpec:
    a_plus: np.ndarray
    a_minus: np.ndarray
    w: np.ndarray
    label: str = ""
    layout: Layout = Layout.CENTRAL

    def __post_init__(self):
        object.__setattr__(self, "a_plus", as_symmetric(self.a_plus, "a_plus"))
        object.__setattr__(self, "a_minus", as_symmetric(self.a_minus, "a_minus"))
        object.__setattr__(self, "w", as_rect(self.w, "w"))
        try:
            object.__setattr__(self, "layout", Layout(self.layout))
        except ValueError:
            raise InvalidInstanceError(f"unknown layout {self.layout!r}") from None
        n_plus, n_minus = self.a_plus.shape[0], self.a_minus.shape[0]
        if self.w.shape != (n_plus, n_minus):
            raise InvalidInstanceError(
                f"w must have shape ({n_plus}, {n_minus}) to couple the blocks, got {self.w.shape}"
            )
        if n_plus + n_minus > MAX_DIMENSION:
            raise InvalidInstanceError(f"dimension {n_plus + n_minus} exceeds {MAX_DIMENSION}")

    @property
    def n_plus(self) -> int:
        return self.a_plus.shape[0]

    @property
    def n_minus(self) -> int:
        return self.a_minus.shape[0]


@dataclass(frozen=True)
class AssembledPair:
    A: np.ndarray
    V: np.ndarray
    B: np.ndarray
    J: np.ndarray
    decompA: SpectralDecomposition
    decompB: SpectralDecomposition
    n_plus: int
    label: str = ""
    # +1/-1 per column of decompA.basis: which of H+/H- the eigenvector lies in
    j_signs: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.A.shape[0]


def _min_eig(M: np.ndarray) -> float:
    return float(symmetric_eigendecomposition(M).eigenvalues[0])


def _j_signs(decompA: SpectralDecomposition, J: np.ndarray) -> np.ndarray:
    Q = decompA.basis
    s = np.einsum("ik,ij,jk->k", Q, J, Q)
    if np.any(np.abs(np.abs(s) - 1.0) > 1e-6):
        raise NoGapError("J does not commute with A: eigenvectors of A are not split by J")
    return np.sign(s)


def pair_from_matrices(A, V, J, label: str = "") -> AssembledPair:
    """Build a pair directly from full matrices (no block structure assumed)."""
    A = as_symmetric(A, "A")
    V = as_symmetric(V, "V")
    J = as_symmetric(J, "J")
    if not (A.shape == V.shape == J.shape):
        raise InvalidInstanceError("A, V and J must have the same shape")
    if np.max(np.abs(J @ J - np.eye(J.shape[0]))) > 1e-12:
        raise InvalidInstanceError("J is not an involution")
    B = as_symmetric(A + V, "B")
    decompA = symmetric_eigendecomposition(A)
    signs = _j_signs(decompA, J)
    return AssembledPair(
        A=A, V=V, B=B, J=J, decompA=decompA, decompB=symmetric_eigendecomposition(B),
        n_plus=int(np.sum(signs > 0)), label=label, j_signs=signs,
    )


def assemble(spec: BlockOperatorSpec, layout: Layout | str | None = None) -> AssembledPair:
    """Assemble ``A``, ``V = [[0, W], [W.T, 0]]``, ``B = A + V`` and ``J``.

    ``central`` layout: ``A = diag(a_plus, -a_minus)``, both blocks must be
    positive definite.  ``case2`` layout: ``A = diag(a_plus, a_minus)`` with
    ``max spec(a_minus) < min spec(a_plus)``.
    """
    layout = Layout(layout or spec.layout)
    n_plus, n_minus = spec.n_plus, spec.n_minus
    n = n_plus + n_minus
    lo_plus = _min_eig(spec.a_plus)
    if layout is Layout.CENTRAL:
        lo_minus = _min_eig(spec.a_minus)
        for name, lo, block in (("a_plus", lo_plus, spec.a_plus), ("a_minus", lo_minus, spec.a_minus)):
            if lo <= eps_spec(float(np.max(np.abs(block)))):
                raise InvalidInstanceError(
                    f"{name} must be positive definite for the central layout (min eigenvalue {lo:.6e})"
                )
        lower = -spec.a_minus
    else:
        hi_minus = -_min_eig(-spec.a_minus)
        scale = max(float(np.max(np.abs(spec.a_plus))), float(np.max(np.abs(spec.a_minus))))
        if hi_minus >= lo_plus - eps_spec(scale):
            raise NoGapError(
                f"case2 layout needs sup spec(a_minus) < inf spec(a_plus); got {hi_minus:.6e} >= {lo_plus:.6e}"
            )
        lower = spec.a_minus
    A = np.zeros((n, n))
    A[:n_plus, :n_plus] = spec.a_plus
    A[n_plus:, n_plus:] = lower
    V = np.zeros((n, n))
    V[:n_plus, n_plus:] = spec.w
    V[n_plus:, :n_plus] = spec.w.T
    J = np.diag(np.concatenate([np.ones(n_plus), -np.ones(n_minus)]))
    pair = pair_from_matrices(A, V, J, label=spec.label)
    residual = verify_off_diagonal(pair.V, pair.J)
    if residual > OFF_DIAGONAL_RTOL * max(1.0, operator_norm(pair.V)):
        raise InternalInvariantError(f"assembled V is not off-diagonal (residual {residual:.3e})")
    return pair


def verify_off_diagonal(V, J) -> float:
    """``||JV + VJ||``; zero exactly when V is off-diagonal with respect to J."""
    V = np.asarray(V, dtype=np.float64)
    J = np.asarray(J, dtype=np.float64)
    return operator_norm(J @ V + V @ J)


# ---------------------------------------------------------------------------
# gap geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapGeometry:
    alpha: float            # sup of the lower cluster
    beta: float             # inf of the upper cluster
    d_plus: float
    d_minus: float
    m_plus: float
    m_minus: float
    case_tag: CaseTag
    sigma_minus_min: float
    sigma_plus_max: float

    @property
    def length(self) -> float:
        return self.beta - self.alpha

    @property
    def central(self) -> bool:
        """Zero lies in the gap (the sign-indefinite setting)."""
        return self.case_tag in (CaseTag.CENTRAL, CaseTag.CASE_I)

    @property
    def mirrored(self) -> bool:
        return self.case_tag is CaseTag.CASE_II_MIRRORED

    @property
    def semibounded(self) -> bool:
        """Whether the Case I / Case II hypotheses hold for (A or -A)."""
        if self.case_tag is CaseTag.CASE_I:
            return True
        if self.case_tag is CaseTag.CASE_II:
            return self.sigma_minus_min > 0
        if self.case_tag is CaseTag.CASE_II_MIRRORED:
            return self.sigma_plus_max < 0
        return False

    def guarded_gap(self) -> tuple[float, float]:
        margin = GUARD_FRACTION * self.length
        return self.alpha + margin, self.beta - margin

    def cut_point(self) -> float:
        """A point of the gap used to split spectra: 0 when 0 is in the gap."""
        return 0.0 if self.central else 0.5 * (self.alpha + self.beta)


def detect_gap(decompA: SpectralDecomposition, J, hint: tuple[float, float] | None = None) -> GapGeometry:
    """Read alpha, beta, d+-, m+- and the case tag off the J-split spectrum of A.

    With ``J`` the clusters are fixed: eigenvectors with ``Jx = x`` carry
    Sigma+, those with ``Jx = -x`` carry Sigma-.
    """
    signs = _j_signs(decompA, np.asarray(J, dtype=np.float64))
    lam = decompA.eigenvalues
    plus, minus = lam[signs > 0], lam[signs < 0]
    if plus.size == 0 or minus.size == 0:
        raise NoGapError("J leaves one of H+ / H- empty")
    eps = decompA.eps
    alpha, beta = float(minus.max()), float(plus.min())
    if alpha >= beta - eps:
        raise NoGapError(f"clusters interleave: sup Sigma- = {alpha:.6e} >= inf Sigma+ = {beta:.6e}")
    if np.any(np.abs(lam) <= eps):
        raise SingularOperatorError("A is singular (0 lies in its spectrum)")
    if hint is not None:
        ha, hb = float(hint[0]), float(hint[1])
        if not (ha < hb and ha >= alpha - eps and hb <= beta + eps):
            raise HintMismatchError(
                f"gap hint ({ha}, {hb}) is not contained in the detected gap ({alpha}, {beta})"
            )
    lo, hi = float(minus.min()), float(plus.max())
    if alpha < 0 < beta:
        # Case I measures d- from the far end of Sigma-; plain Central from alpha
        d_plus, d_minus = beta, -lo
        tag = CaseTag.CASE_I if d_plus > d_minus else CaseTag.CENTRAL
        if tag is CaseTag.CENTRAL:
            d_minus = -alpha
    elif alpha > 0:
        d_plus, d_minus = beta, alpha
        tag = CaseTag.CASE_II
    else:
        # beta < 0: Case II for -A with the clusters exchanged
        d_plus, d_minus = -alpha, -beta
        tag = CaseTag.CASE_II_MIRRORED
    return GapGeometry(
        alpha=alpha, beta=beta, d_plus=d_plus, d_minus=d_minus,
        m_plus=beta, m_minus=-alpha, case_tag=tag,
        sigma_minus_min=lo, sigma_plus_max=hi,
    )


def default_gap(decompA: SpectralDecomposition) -> tuple[float, float]:
    """Pick a gap of spec(A) when no involution is given.

    The gap containing 0 wins; otherwise the gap between consecutive distinct
    eigenvalues with the largest relative length ``(d+ - d-)/sqrt(d+ d-)``.
    """
    lam = decompA.eigenvalues
    eps = decompA.eps
    best, best_score = None, -math.inf
    for lo, hi in zip(lam[:-1], lam[1:]):
        if hi - lo <= eps:
            continue
        if lo < 0 < hi:
            return float(lo), float(hi)
        if lo * hi <= 0:
            continue
        near, far = sorted((abs(lo), abs(hi)))
        score = (far - near) / math.sqrt(far * near)
        if score > best_score:
            best, best_score = (float(lo), float(hi)), score
    if best is None:
        raise NoGapError("spectrum of A has no gap")
    return best


def involution_from_gap(decompA: SpectralDecomposition, alpha: float, beta: float) -> np.ndarray:
    """``J = E_A((beta, inf)) - E_A((-inf, alpha))``."""
    lam = decompA.eigenvalues
    if np.any((lam > alpha) & (lam < beta)):
        raise NoGapError(f"({alpha}, {beta}) contains eigenvalues of A")
    s = np.where(lam >= beta, 1.0, -1.0)
    J = (decompA.basis * s) @ decompA.basis.T
    return 0.5 * (J + J.T)


# ---------------------------------------------------------------------------
# shifted forms and relative bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftedFormOperator:
    mu: float
    S: np.ndarray
    inv_sqrt_S: np.ndarray
    min_eig: float
    decomposition: SpectralDecomposition = field(repr=False)


def shifted_decomposition(pair: AssembledPair, mu: float) -> SpectralDecomposition:
    """Decomposition of ``S_mu = J(A - mu I)`` in the eigenbasis of A.

    J commutes with A, so S_mu has A's eigenvectors with eigenvalues
    ``s_k (lambda_k - mu)``, where ``s_k = +-1`` is the J-sign of column k.
    """
    values = pair.j_signs * (pair.decompA.eigenvalues - mu)
    order = np.argsort(values, kind="stable")
    return SpectralDecomposition(values[order], pair.decompA.basis[:, order])


def shifted_form_operator(pair: AssembledPair, mu: float) -> ShiftedFormOperator:
    """``S_mu = J (A - mu I)`` together with ``S_mu^{-1/2}``."""
    D = shifted_decomposition(pair, mu)
    lowest = float(D.eigenvalues[0])
    if lowest <= D.eps:
        raise NotPositiveDefiniteError(
            f"J(A - mu I) is not positive definite at mu={mu!r} (min eigenvalue {lowest:.6e})",
            min_eigenvalue=lowest,
        )
    S = pair.J @ (pair.A - mu * np.eye(pair.n))
    S = 0.5 * (S + S.T)
    return ShiftedFormOperator(mu, S, apply_spectral_function(D, INV_SQRT), lowest, D)


def relative_bound_at(pair: AssembledPair, sfo: ShiftedFormOperator) -> float:
    """``v_mu = ||S_mu^{-1/2} V S_mu^{-1/2}||``."""
    K = sfo.inv_sqrt_S @ pair.V @ sfo.inv_sqrt_S
    return operator_norm(0.5 * (K + K.T))


def base_relative_bound(pair: AssembledPair) -> float:
    """``v = || |A|^{-1/2} V |A|^{-1/2} ||``, the bound of V relative to |A|."""
    R = apply_spectral_function(pair.decompA, ABS_INV_SQRT)
    K = R @ pair.V @ R
    return operator_norm(0.5 * (K + K.T))


class RelativeBoundEvaluator:
    """Fast repeated evaluation of ``mu -> v_mu`` for one pair.

    Works in A's eigenbasis, where S_mu is diagonal and the rotated V has
    only the (H+, H-) coupling block ``X``; then
    ``v_mu = || diag(|l+ - mu|^{-1/2}) X diag(|l- - mu|^{-1/2}) ||``.
    Agrees with :func:`relative_bound_at` (see the test-suite cross-check).
    """

    def __init__(self, pair: AssembledPair):
        lam = pair.decompA.eigenvalues
        Q = pair.decompA.basis
        plus = pair.j_signs > 0
        Vt = Q.T @ pair.V @ Q
        self._lam_plus = lam[plus]
        self._lam_minus = lam[~plus]
        self._X = np.ascontiguousarray(Vt[np.ix_(plus, ~plus)])
        self._eps = pair.decompA.eps
        self._lo = float(self._lam_plus.min())
        self._hi = float(self._lam_minus.max())
        self._zero = not np.any(self._X)

    def positive_definite(self, mu: float) -> bool:
        return self._lo - mu > self._eps and mu - self._hi > self._eps

    def __call__(self, mu: float) -> float:
        if not self.positive_definite(mu):
            return math.inf
        if self._zero:
            return 0.0
        return diag_scaled_norm(self._X, (self._lam_plus - mu) ** -0.5, (mu - self._lam_minus) ** -0.5)
