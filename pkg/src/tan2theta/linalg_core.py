"""Dense real symmetric linear algebra.

Everything downstream (projections, |A|, sign(B), S^{-1/2}, norms) goes
through :func:`symmetric_eigendecomposition`, a cyclic Jacobi solver with a
row-major sweep order.  The solver is compiled with numba; the rest is plain
numpy.
"""

from __future__ import annotations

import contextlib
import math
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .errors import (
    AmbiguousCutError,
    ConvergenceError,
    InvalidInstanceError,
    NearSingularityError,
)

MAX_SWEEPS = 100
OFF_DIAGONAL_RTOL = 1e-14
SYMMETRY_RTOL = 1e-12

_EPS_SPEC_REL: ContextVar[float] = ContextVar("eps_spec_rel", default=1e-9)


def eps_spec(scale: float) -> float:
    """Tolerance for "an eigenvalue touches a cut point", relative to ``scale``."""
    return _EPS_SPEC_REL.get() * max(1.0, scale)


@contextlib.contextmanager
def spec_tolerance(rel: float):
    """Temporarily override the relative factor used by :func:`eps_spec`."""
    if not (rel > 0 and math.isfinite(rel)):
        raise ValueError(f"spectral tolerance must be positive, got {rel!r}")
    token = _EPS_SPEC_REL.set(rel)
    try:
        yield
    finally:
        _EPS_SPEC_REL.reset(token)


# ---------------------------------------------------------------------------
# validated matrices
# ---------------------------------------------------------------------------

def as_rect(M, name="matrix") -> np.ndarray:
    """Validate a finite 2-d real array and return a read-only float64 copy."""
    arr = np.array(M, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInstanceError(f"{name} must be a non-empty 2-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInstanceError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def as_symmetric(M, name="matrix") -> np.ndarray:
    """Validate symmetry and return the symmetrized average, read-only."""
    arr = np.array(as_rect(M, name))
    if arr.shape[0] != arr.shape[1]:
        raise InvalidInstanceError(f"{name} must be square, got shape {arr.shape}")
    scale = max(1.0, float(np.max(np.abs(arr))))
    asym = float(np.max(np.abs(arr - arr.T)))
    if asym > SYMMETRY_RTOL * scale:
        raise InvalidInstanceError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    arr = 0.5 * (arr + arr.T)
    arr.setflags(write=False)
    return arr


def _symmetrize(M: np.ndarray) -> np.ndarray:
    out = 0.5 * (M + M.T)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Jacobi eigensolver
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _off_norm(a):
    n = a.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                s += a[i, j] * a[i, j]
    return math.sqrt(s)


@numba.njit(cache=True)
def _jacobi(a, v, tol, max_sweeps):
    # In-place cyclic Jacobi on a (symmetric) accumulating rotations in v.
    # Returns (sweeps used, final off-diagonal Frobenius mass); sweeps = -1
    # means the cap was hit.
    n = a.shape[0]
    for sweep in range(max_sweeps + 1):
        off = _off_norm(a)
        if off <= tol:
            return sweep, off
        if sweep == max_sweeps:
            return -1, off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return -1, _off_norm(a)


def _jacobi_raw(M: np.ndarray):
    a = np.array(M, dtype=np.float64, order="C")
    n = a.shape[0]
    v = np.eye(n)
    # scale by a power of two (exact) so squared entries stay in range
    top = float(np.max(np.abs(a)))
    if top == 0.0:
        return np.zeros(n), v
    exponent = math.frexp(top)[1]
    a = np.ldexp(a, -exponent)
    tol = OFF_DIAGONAL_RTOL * float(np.sqrt(np.sum(a * a)))
    sweeps, off = _jacobi(a, v, tol, MAX_SWEEPS)
    if sweeps < 0:
        off, tol = math.ldexp(off, exponent), math.ldexp(tol, exponent)
        raise ConvergenceError(
            f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps "
            f"(off-diagonal residual {off:.3e}, target {tol:.3e})",
            residual=off,
        )
    return np.ldexp(np.diag(a), exponent), v


@dataclass(frozen=True)
class SpectralDecomposition:
    """Ascending eigenvalues and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    basis: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def eps(self) -> float:
        return eps_spec(self.norm)

    def shifted(self, shift: float) -> "SpectralDecomposition":
        """Decomposition of ``M - shift*I`` (same basis)."""
        return SpectralDecomposition(self.eigenvalues - shift, self.basis)

    def negated(self) -> "SpectralDecomposition":
        """Decomposition of ``-M``, kept ascending."""
        return SpectralDecomposition(-self.eigenvalues[::-1], self.basis[:, ::-1])

    def reconstruct(self) -> np.ndarray:
        return _symmetrize((self.basis * self.eigenvalues) @ self.basis.T)


def symmetric_eigendecomposition(M) -> SpectralDecomposition:
    """Eigen-decompose a real symmetric matrix with cyclic Jacobi rotations.

    Eigenvalues come back in ascending order (stable sort, so exact ties keep
    their original index order).  Each eigenvector is normalized so that its
    largest-magnitude component is positive, ties broken by the lowest index;
    this makes every downstream output reproducible bit for bit.
    """
    M = as_symmetric(M)
    evals, vecs = _jacobi_raw(M)
    order = np.argsort(evals, kind="stable")
    evals = evals[order]
    vecs = vecs[:, order]
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[pivots, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    vecs = vecs * signs
    evals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(evals, vecs)


# ---------------------------------------------------------------------------
# spectral calculus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralFunction:
    """A scalar function together with where it may not be evaluated.

    ``domain`` is ``"all"``, ``"nonzero"`` (no eigenvalue within eps of 0) or
    ``"positive"`` (every eigenvalue above eps).
    """

    func: Callable[[np.ndarray], np.ndarray]
    name: str
    domain: str = "all"

    def __call__(self, x):
        return self.func(x)


IDENTITY = SpectralFunction(lambda t: t, "identity")
ABS = SpectralFunction(np.abs, "abs")
SIGN = SpectralFunction(np.sign, "sign", "nonzero")
SQRT = SpectralFunction(np.sqrt, "sqrt", "positive")
INV_SQRT = SpectralFunction(lambda t: 1.0 / np.sqrt(t), "inverse square root", "positive")
ABS_INV_SQRT = SpectralFunction(lambda t: 1.0 / np.sqrt(np.abs(t)), "|t|^(-1/2)", "nonzero")


def _check_domain(D: SpectralDecomposition, domain: str, name: str) -> None:
    eps = D.eps
    lam = D.eigenvalues
    if domain == "nonzero":
        bad = np.flatnonzero(np.abs(lam) <= eps)
    elif domain == "positive":
        bad = np.flatnonzero(lam <= eps)
    else:
        return
    if bad.size:
        ev = float(lam[bad[0]])
        raise NearSingularityError(
            f"{name} evaluated at eigenvalue {ev:.6e} inside the forbidden band (eps={eps:.3e})",
            eigenvalue=ev,
        )


def apply_spectral_function(D: SpectralDecomposition, f) -> np.ndarray:
    """Return ``basis @ diag(f(eigenvalues)) @ basis.T`` (symmetrized).

    ``f`` is a :class:`SpectralFunction` or any vectorized callable; plain
    callables are only checked for finite output.
    """
    if isinstance(f, SpectralFunction):
        _check_domain(D, f.domain, f.name)
        name = f.name
    else:
        name = getattr(f, "__name__", "f")
    values = np.asarray(f(D.eigenvalues), dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        ev = float(D.eigenvalues[bad])
        raise NearSingularityError(f"{name} is not finite at eigenvalue {ev:.6e}", eigenvalue=ev)
    return _symmetrize((D.basis * values) @ D.basis.T)


@dataclass(frozen=True)
class OrthogonalProjection:
    matrix: np.ndarray
    rank: int
    basis: np.ndarray  # orthonormal columns spanning the range


def spectral_projection(D: SpectralDecomposition, lo: float, hi: float) -> OrthogonalProjection:
    """Projection onto the eigenvectors with eigenvalue in ``(lo, hi)``.

    Endpoints may be infinite.  A finite endpoint closer than eps to an
    eigenvalue is ambiguous and raises :class:`AmbiguousCutError`.
    """
    lam = D.eigenvalues
    eps = D.eps
    for endpoint in (lo, hi):
        if math.isfinite(endpoint):
            close = np.flatnonzero(np.abs(lam - endpoint) <= eps)
            if close.size:
                ev = float(lam[close[0]])
                raise AmbiguousCutError(
                    f"eigenvalue {ev:.6e} is within {eps:.3e} of cut point {endpoint}",
                    eigenvalue=ev,
                    endpoint=endpoint,
                )
    mask = (lam > lo) & (lam < hi)
    U = D.basis[:, mask]
    P = _symmetrize(U @ U.T)
    U = np.array(U)
    U.setflags(write=False)
    return OrthogonalProjection(P, int(mask.sum()), U)


def gram_norm(M: np.ndarray) -> float:
    """Largest singular value of an already validated 2-d array.

    The matrix is scaled by its largest entry first so that squaring in the
    Gram product can neither underflow nor overflow.
    """
    top = float(np.max(np.abs(M)))
    if top == 0.0:
        return 0.0
    scale = math.ldexp(1.0, math.frexp(top)[1])
    M = M / scale
    rows, cols = M.shape
    G = M.T @ M if cols <= rows else M @ M.T
    if G.shape[0] == 1:
        return scale * math.sqrt(max(0.0, float(G[0, 0])))
    evals, _ = _jacobi_raw(0.5 * (G + G.T))
    return scale * math.sqrt(max(0.0, float(np.max(evals))))


@numba.njit(cache=True)
def _diag_scaled_norm(X, left, right, rtol, max_sweeps):
    rows, cols = X.shape
    Y = np.empty((rows, cols))
    scale = 0.0
    for i in range(rows):
        for j in range(cols):
            Y[i, j] = left[i] * X[i, j] * right[j]
            scale = max(scale, abs(Y[i, j]))
    if scale == 0.0:
        return 0.0, 0
    scale = math.ldexp(1.0, math.frexp(scale)[1])
    Y /= scale
    G = Y.T @ Y if cols <= rows else Y @ Y.T
    k = G.shape[0]
    if k == 1:
        return scale * math.sqrt(max(0.0, G[0, 0])), 0
    for i in range(k):
        for j in range(i + 1, k):
            m = 0.5 * (G[i, j] + G[j, i])
            G[i, j] = m
            G[j, i] = m
    tol = rtol * math.sqrt(np.sum(G * G))
    v = np.eye(k)
    sweeps, _ = _jacobi(G, v, tol, max_sweeps)
    top = 0.0
    for i in range(k):
        top = max(top, G[i, i])
    return scale * math.sqrt(top), sweeps


def diag_scaled_norm(X: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    """``|| diag(left) X diag(right) ||`` for validated float64 arrays, in one compiled pass."""
    value, sweeps = _diag_scaled_norm(X, left, right, OFF_DIAGONAL_RTOL, MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError(f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps", residual=math.nan)
    return value


def operator_norm(M) -> float:
    """Spectral norm.

    Symmetric input: largest ``|eigenvalue|``.  Anything else: largest
    singular value, ``sqrt`` of the top eigenvalue of the smaller Gram matrix.
    """
    M = as_rect(M)
    rows, cols = M.shape
    if rows == cols:
        scale = max(1.0, float(np.max(np.abs(M))))
        if float(np.max(np.abs(M - M.T))) <= SYMMETRY_RTOL * scale:
            S = 0.5 * (M + M.T)
            if rows == 1:
                return abs(float(S[0, 0]))
            evals, _ = _jacobi_raw(S)
            return float(np.max(np.abs(evals)))
    return gram_norm(M)
