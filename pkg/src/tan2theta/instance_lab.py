"""Seeded instance generation, the 2x2 closed-form oracle and property suites."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds_engine import HALF_SQRT2, SLACK_TOL, build_report, reference_shift, semibounded_tan2theta
from .errors import DomainError, InvalidInstanceError
from .linalg_core import ABS, apply_spectral_function, gram_norm
from .operator_model import (
    AssembledPair,
    BlockOperatorSpec,
    Layout,
    RelativeBoundEvaluator,
    assemble,
    detect_gap,
    verify_off_diagonal,
)
from .subspace_geometry import sectoriality_check, sign_constancy_scan

MASK64 = (1 << 64) - 1
MAX_REDRAWS = 10
TARGET_V_ATOL = 1e-6
VAD_SAMPLES = 1000
SIGN_SCAN_SAMPLES = 9

# ---------------------------------------------------------------------------
# counter-based RNG
# ---------------------------------------------------------------------------
# Every draw is a pure function of (seed, index, stream, counter): the key
# (seed, index, stream) is hashed with the SplitMix64 finalizer, then each
# counter value is mixed once more.  No state is carried between draws, so
# instances can be generated in any order or in parallel.

_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, index: int, stream: int, count: int, offset: int = 0) -> np.ndarray:
    """``count`` doubles in [0, 1) for the given key, counters ``offset..``."""
    key = _mix64(_mix64(_mix64(seed & MASK64) ^ (index & MASK64)) ^ (stream & MASK64))
    counters = np.arange(offset, offset + count, dtype=np.uint64)
    bits = _mix64_array(counters ^ np.uint64(key))
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


def normals(seed: int, index: int, stream: int, count: int) -> np.ndarray:
    """Standard normal draws by Box-Muller on paired uniforms."""
    u = uniforms(seed, index, stream, 2 * count)
    u1, u2 = u[:count], u[count:]
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


# streams
_S_DIMS, _S_TARGET, _S_EIG_PLUS, _S_EIG_MINUS, _S_ROT_PLUS, _S_ROT_MINUS, _S_W = range(7)
_S_VAD = 100


def givens_orthogonal(n: int, angles: np.ndarray) -> np.ndarray:
    """Compose n(n-1)/2 Givens rotations (pairs in row-major order)."""
    R = np.eye(n)
    k = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            c, s = math.cos(angles[k]), math.sin(angles[k])
            ri, rj = R[:, i].copy(), R[:, j]
            R[:, i] = c * ri - s * rj
            R[:, j] = s * ri + c * rj
            k += 1
    return R


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------

DEFAULT_RANGES = {
    # (Sigma+ range, Sigma- range) as intervals of spec(A)
    "central": ((0.5, 5.0), (-5.0, -0.5)),
    "case1": ((2.0, 6.0), (-1.8, -0.2)),
    "case2": ((2.0, 6.0), (0.2, 1.5)),
}


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of a family of random instances.

    ``target_v`` is either a number or a ``(lo, hi)`` range drawn per
    instance (log-uniform by default).  With ``random_dims`` the dimensions
    are drawn per instance from ``1..n_plus`` and ``1..n_minus``.
    """

    seed: int = 0
    n_plus: int = 1
    n_minus: int = 1
    geometry: str = "central"
    plus_range: tuple[float, float] | None = None
    minus_range: tuple[float, float] | None = None
    target_v: float | tuple[float, float] = 1.0
    target_scale: str = "log"
    target_exclude: tuple[float, float] | None = None
    count: int = 1
    random_dims: bool = False

    def __post_init__(self):
        if self.geometry not in DEFAULT_RANGES:
            raise InvalidInstanceError(f"unknown geometry {self.geometry!r}")
        plus, minus = DEFAULT_RANGES[self.geometry]
        object.__setattr__(self, "plus_range", tuple(map(float, self.plus_range or plus)))
        object.__setattr__(self, "minus_range", tuple(map(float, self.minus_range or minus)))
        if self.n_plus < 1 or self.n_minus < 1 or self.count < 0:
            raise InvalidInstanceError("dimensions must be >= 1 and count >= 0")
        (p_lo, p_hi), (m_lo, m_hi) = self.plus_range, self.minus_range
        if not (p_lo <= p_hi and m_lo <= m_hi):
            raise InvalidInstanceError("spectral ranges must be ordered intervals")
        if self.geometry in ("central", "case1"):
            ok = m_hi < 0 < p_lo
            if self.geometry == "case1":
                ok = ok and -m_lo < p_lo
        else:
            ok = 0 < m_lo and m_hi < p_lo
        if not ok:
            raise InvalidInstanceError(f"spectral ranges inconsistent with geometry {self.geometry}")
        tv = self.target_v
        lo, hi = (tv, tv) if np.isscalar(tv) else tv
        if not (0 <= lo <= hi):
            raise InvalidInstanceError("target_v must be non-negative")
        if self.target_scale not in ("log", "linear"):
            raise InvalidInstanceError("target_scale is 'log' or 'linear'")
        if self.target_scale == "log" and lo != hi and lo <= 0:
            raise InvalidInstanceError("a log-uniform target_v range needs lo > 0")

    @property
    def layout(self) -> Layout:
        return Layout.CASE2 if self.geometry == "case2" else Layout.CENTRAL


def _draw_target(config: GeneratorConfig, index: int) -> float:
    tv = config.target_v
    if np.isscalar(tv):
        return float(tv)
    lo, hi = map(float, tv)
    for attempt in range(64):
        u = float(uniforms(config.seed, index, _S_TARGET, 1, offset=attempt)[0])
        if config.target_scale == "log":
            value = math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))
        else:
            value = lo + u * (hi - lo)
        ex = config.target_exclude
        if ex is None or not (ex[0] <= value <= ex[1]):
            return value
    raise InvalidInstanceError("target_v exclusion band swallows the whole range")


def _random_block(seed, index, eig_stream, rot_stream, n, lo, hi):
    # returns the block together with its eigenvalues and eigenvectors
    lam = lo + (hi - lo) * uniforms(seed, index, eig_stream, n)
    R = givens_orthogonal(n, 2.0 * math.pi * uniforms(seed, index, rot_stream, n * (n - 1) // 2))
    M = (R * lam) @ R.T
    return 0.5 * (M + M.T), lam, R


def generate_instance(config: GeneratorConfig, index: int) -> BlockOperatorSpec:
    """Instance ``index`` of the family; a pure function of (config, index).

    W is drawn with independent normal entries and rescaled so that the
    bound of V relative to |A| equals the target.  That bound is
    ``|| |A+|^{-1/2} W |A-|^{-1/2} ||`` for block diagonal A, and it is
    homogeneous of degree one in W, so a single rescale hits the target.
    """
    if not 0 <= index < max(config.count, 1):
        raise InvalidInstanceError(f"index {index} outside 0..{config.count - 1}")
    seed = config.seed
    n_plus, n_minus = config.n_plus, config.n_minus
    if config.random_dims:
        u = uniforms(seed, index, _S_DIMS, 2)
        n_plus = 1 + int(u[0] * config.n_plus)
        n_minus = 1 + int(u[1] * config.n_minus)
    target = _draw_target(config, index)
    a_plus, lam_p, R_p = _random_block(seed, index, _S_EIG_PLUS, _S_ROT_PLUS, n_plus, *config.plus_range)
    m_lo, m_hi = config.minus_range
    if config.layout is Layout.CENTRAL:
        # a_minus carries -Sigma-
        a_minus, lam_m, R_m = _random_block(seed, index, _S_EIG_MINUS, _S_ROT_MINUS, n_minus, -m_hi, -m_lo)
    else:
        a_minus, lam_m, R_m = _random_block(seed, index, _S_EIG_MINUS, _S_ROT_MINUS, n_minus, m_lo, m_hi)
    label = f"{config.geometry}-seed{seed}-#{index}"
    if target == 0.0:
        return BlockOperatorSpec(a_plus, a_minus, np.zeros((n_plus, n_minus)), label, config.layout)
    left = (R_p * np.abs(lam_p) ** -0.5) @ R_p.T
    right = (R_m * np.abs(lam_m) ** -0.5) @ R_m.T
    for attempt in range(MAX_REDRAWS):
        w = normals(seed, index, _S_W + 1000 * attempt, n_plus * n_minus).reshape(n_plus, n_minus)
        if not np.any(w):
            continue
        v = gram_norm(left @ w @ right)
        return BlockOperatorSpec(a_plus, a_minus, w * (target / v), label, config.layout)
    raise InvalidInstanceError(f"could not draw a nonzero coupling after {MAX_REDRAWS} attempts")


# ---------------------------------------------------------------------------
# 2x2 oracles
# ---------------------------------------------------------------------------

def v_mu_closed_form_2x2(alpha: float, beta: float, w: float, mu: float) -> float:
    """``|w| / sqrt((beta - mu)(mu - alpha))`` for A = diag(beta, alpha)."""
    if not alpha < mu < beta:
        raise DomainError(f"mu={mu} must lie in ({alpha}, {beta})")
    return abs(w) / math.sqrt((beta - mu) * (mu - alpha))


def exact_norm_2x2(alpha: float, beta: float, w: float) -> float:
    """``sin(1/2 arctan(2|w| / (beta - alpha)))``."""
    if not alpha < beta:
        raise DomainError("need alpha < beta")
    return math.sin(0.5 * math.atan(2.0 * abs(w) / (beta - alpha)))


def spec_2x2(alpha: float, beta: float, w: float) -> BlockOperatorSpec:
    """``A = diag(beta, alpha)``, ``V = [[0, w], [w, 0]]``, ``J = diag(1, -1)``."""
    if alpha < 0 < beta:
        return BlockOperatorSpec([[beta]], [[-alpha]], [[w]], f"2x2({alpha},{beta},{w})", Layout.CENTRAL)
    return BlockOperatorSpec([[beta]], [[alpha]], [[w]], f"2x2({alpha},{beta},{w})", Layout.CASE2)


@dataclass(frozen=True)
class SharpnessRecord:
    alpha: float
    beta: float
    w: float
    exact_closed_form: float
    exact_numeric: float
    central_bound_opt: float
    case_bound: float | None
    mu_star: float
    v_min: float
    slacks: dict = field(default_factory=dict)
    agrees: bool = True     # closed form vs numeric within 1e-10
    sharp: bool = True      # every bound equals the exact value within 1e-6


def sharpness_2x2(alpha: float, beta: float, w: float, *, grid_points: int = 65) -> SharpnessRecord:
    """Run the full pipeline on the 2x2 family where the bounds are attained."""
    if not alpha < beta:
        raise DomainError(f"need alpha < beta, got {alpha}, {beta}")
    closed = exact_norm_2x2(alpha, beta, w)
    pair = assemble(spec_2x2(alpha, beta, w))
    geom = detect_gap(pair.decompA, pair.J)
    report = build_report(pair, geom, grid_points=grid_points)
    case = None
    if geom.semibounded:
        # v = |w| / sqrt(|alpha beta|) for A = diag(beta, alpha)
        v = abs(w) / math.sqrt(abs(alpha * beta))
        case = semibounded_tan2theta(v, geom).bound
    slacks = {"central": report.central_bound - report.exact_norm}
    if case is not None:
        slacks["case"] = case - report.exact_norm
    return SharpnessRecord(
        alpha=alpha, beta=beta, w=w,
        exact_closed_form=closed,
        exact_numeric=report.exact_norm,
        central_bound_opt=report.central_bound,
        case_bound=case,
        mu_star=report.mu_star,
        v_min=report.v_inf,
        slacks=slacks,
        agrees=abs(closed - report.exact_norm) <= 1e-10,
        sharp=all(abs(s) <= 1e-6 for s in slacks.values()),
    )


# ---------------------------------------------------------------------------
# property suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuiteTolerances:
    slack: float = SLACK_TOL
    strict: float = 1e-12
    sign_identity: float = 1e-10
    sign_constancy: float = 1e-10
    sectorial: float = 1e-8
    ordering: float = 1e-12
    kappa: float = 1e-10
    vad: float = 1e-9
    off_diagonal: float = 1e-10


@dataclass
class InstanceRow:
    id: int
    n: int
    geometry: str
    v_base: float = math.nan
    v_inf: float = math.nan
    mu_star: float = math.nan
    exact: float = math.nan
    bounds: dict = field(default_factory=dict)
    slacks: dict = field(default_factory=dict)
    sign_residual: float = math.nan
    sign_constancy: float = math.nan
    sectorial_margin: float = math.nan
    sectorial_margin_fixed: float = math.nan
    gap_ok: bool = False
    checks: dict = field(default_factory=dict)
    inconclusive: bool = False
    bs_positive_definite: bool | None = None
    error: str | None = None
    digest: str = ""

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.checks.values())

    @property
    def failed_checks(self) -> list[str]:
        return [k for k, ok in self.checks.items() if not ok]


@dataclass
class SuiteResult:
    rows: list[InstanceRow]

    @property
    def violation_count(self) -> int:
        return sum(not r.passed for r in self.rows)

    @property
    def inconclusive_count(self) -> int:
        return sum(r.inconclusive for r in self.rows)

    def worst_slacks(self) -> dict[str, float]:
        worst: dict[str, float] = {}
        for r in self.rows:
            for k, s in r.slacks.items():
                worst[k] = min(worst.get(k, math.inf), s)
        return worst

    def summary(self) -> dict:
        slacks = [s for r in self.rows for s in r.slacks.values()]
        return {
            "count": len(self.rows),
            "violations": self.violation_count,
            "inconclusive": self.inconclusive_count,
            "errors": sum(r.error is not None for r in self.rows),
            "worst_slack": self.worst_slacks(),
            "mean_slack": float(np.mean(slacks)) if slacks else None,
            "max_slack": max(slacks) if slacks else None,
            "failed_checks": sorted({c for r in self.rows for c in r.failed_checks}),
        }


def spec_digest(spec: BlockOperatorSpec) -> str:
    h = hashlib.sha256()
    for arr in (spec.a_plus, spec.a_minus, spec.w):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(spec.layout.value.encode())
    return h.hexdigest()[:16]


def _vad_ok(pair: AssembledPair, v: float, seed: int, index: int, tol: float) -> bool:
    # |<x,Vx>| <= 2 v sqrt(<x+,|A|x+> <x-,|A|x->) on random vectors
    n = pair.n
    X = normals(seed, index, _S_VAD, n * VAD_SAMPLES).reshape(n, VAD_SAMPLES)
    X /= np.linalg.norm(X, axis=0)
    absA = apply_spectral_function(pair.decompA, ABS)
    Pp = 0.5 * (np.eye(n) + pair.J)
    Xp, Xm = Pp @ X, X - Pp @ X
    lhs = np.abs(np.einsum("ik,ik->k", X, pair.V @ X))
    qp = np.einsum("ik,ik->k", Xp, absA @ Xp)
    qm = np.einsum("ik,ik->k", Xm, absA @ Xm)
    rhs = 2.0 * v * np.sqrt(np.clip(qp, 0, None) * np.clip(qm, 0, None))
    return bool(np.all(lhs <= rhs + tol))


def check_instance(spec: BlockOperatorSpec, index: int, *, seed: int = 0, target_v: float | None = None,
                   tol: SuiteTolerances = SuiteTolerances(), grid_points: int = 65) -> InstanceRow:
    """Evaluate every property on one instance; errors become a failing row."""
    row = InstanceRow(id=index, n=spec.n_plus + spec.n_minus, geometry="?", digest=spec_digest(spec))
    try:
        pair = assemble(spec)
        geom = detect_gap(pair.decompA, pair.J)
        row.geometry = geom.case_tag.value
        report = build_report(pair, geom, grid_points=grid_points)
        row.v_base, row.v_inf, row.mu_star = report.v_base, report.v_inf, report.mu_star
        row.exact = report.exact_norm
        row.bounds = report.bounds
        row.slacks = report.slacks
        row.sign_residual = report.angles.sign_identity_residual
        row.sectorial_margin = report.angles.sectorial_margin
        row.gap_ok = report.angles.gap_persistence
        c = row.checks
        c["slack"] = all(s >= -tol.slack for s in report.slacks.values())
        c["strict"] = report.exact_norm < HALF_SQRT2 - tol.strict
        c["central_strict"] = report.central_bound < HALF_SQRT2
        c["off_diagonal"] = verify_off_diagonal(pair.V, pair.J) <= tol.off_diagonal * max(1.0, report.norm_v)
        c["sign_identity"] = row.sign_residual <= tol.sign_identity
        row.sign_constancy = sign_constancy_scan(pair, geom, SIGN_SCAN_SAMPLES)
        c["sign_constancy"] = row.sign_constancy <= tol.sign_constancy
        c["gap_persistence"] = row.gap_ok
        c["equal_rank"] = report.angles.rank_P == report.angles.rank_Q
        c["angle_consistency"] = abs(report.exact_norm - math.sin(report.angles.max_angle)) <= 1e-9
        fixed_mu = reference_shift(geom)
        fixed_theta = math.atan(RelativeBoundEvaluator(pair)(fixed_mu))
        row.sectorial_margin_fixed = sectoriality_check(pair, fixed_mu, fixed_theta)
        c["sectorial"] = min(row.sectorial_margin, row.sectorial_margin_fixed) >= -tol.sectorial
        c["vad"] = _vad_ok(pair, report.v_base, seed, index, tol.vad)
        if target_v is not None:
            c["target_v"] = abs(report.v_base - target_v) <= TARGET_V_ATOL * max(1.0, target_v)
        if report.sin_theta_bound is not None:
            c["ordering"] = report.case_bound <= report.sin_theta_bound + tol.ordering
        if report.diagnostics is not None:
            c["kappa"] = report.diagnostics.ok
        if report.birman_schwinger is not None:
            bs = report.birman_schwinger
            row.bs_positive_definite = bs.positive_definite
            row.inconclusive = bs.consistent is None
            if bs.consistent is not None:
                c["birman_schwinger"] = bs.consistent
    except Exception as exc:  # noqa: BLE001 - rows must capture every failure
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_property_suite(config: GeneratorConfig, *, tol: SuiteTolerances = SuiteTolerances(),
                       grid_points: int = 65) -> SuiteResult:
    """Generate ``config.count`` instances and check every property on each."""
    rows = []
    for index in range(config.count):
        try:
            spec = generate_instance(config, index)
        except Exception as exc:  # noqa: BLE001
            rows.append(InstanceRow(id=index, n=0, geometry=config.geometry,
                                    error=f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(check_instance(spec, index, seed=config.seed, target_v=_draw_target(config, index),
                                   tol=tol, grid_points=grid_points))
    return SuiteResult(rows)

