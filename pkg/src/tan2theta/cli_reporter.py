"""Command-line surface: instance files in, JSON reports and CSV tables out.

Every float leaves the tool through :func:`fmt_float` (17 significant
digits, so 64-bit values round-trip exactly) and every document is emitted
with a fixed key order, which makes outputs byte-identical across runs.

Exit codes::

    0  success
    1  suite property violation / sharpness assertion failure
    2  malformed input or invalid flags
    3  no usable spectral gap (overlapping clusters, singular A, bad hint)
    4  internal invariant violation (a tool bug; message carries the digest)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bounds_engine import DEFAULT_GRID_POINTS, BoundReport, build_report
from .errors import (
    AmbiguousCutError,
    DomainError,
    InternalInvariantError,
    InvalidInstanceError,
    NearSingularityError,
    NoGapError,
    SpectralError,
)
from .instance_lab import GeneratorConfig, SuiteTolerances, run_property_suite, sharpness_2x2
from .linalg_core import spec_tolerance
from .operator_model import BlockOperatorSpec, GapGeometry, Layout, RelativeBoundEvaluator, assemble, detect_gap

TOOL_NAME = "tan2theta"

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_NO_GAP = 3
EXIT_INTERNAL = 4

SCAN_HEADER = "mu,v_mu,theta_mu,positive_definite"
SUITE_HEADER = ("id,n,geometry,v_base,v_inf,mu_star,exact,classical,central,case,sin_theta,"
                "sign_residual,sectorial_margin,gap_ok,pass")
SHARPNESS_HEADER = "w,exact,central_opt,case_bound,slack_central,slack_case"
SHARPNESS_ATOL = 1e-6


class InstanceFormatError(InvalidInstanceError):
    """The instance document could not be parsed or validated."""


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt_float(x: float) -> str:
    """17 significant digits; ``nan``/``inf``/``-inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _csv_field(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return fmt_float(x)
    return str(x)


def csv_row(values) -> str:
    return ",".join(_csv_field(v) for v in values)


def emit_json(obj, indent: int = 0) -> str:
    """Deterministic JSON text; floats at 17 significant digits, non-finite as null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {emit_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(emit_json(v, indent + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + emit_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceDocument:
    spec: BlockOperatorSpec
    gap_hint: tuple[float, float] | None
    digest: str  # sha256 of the raw file bytes


def _reject_constant(name):
    raise InstanceFormatError(f"non-finite number {name} in instance document")


def _matrix(doc: dict, key: str) -> np.ndarray:
    if key not in doc:
        raise InstanceFormatError(f"missing field {key!r}")
    value = doc[key]
    if (not isinstance(value, list) or not value
            or not all(isinstance(r, list) and r for r in value)):
        raise InstanceFormatError(f"{key} must be a non-empty array of non-empty rows")
    width = len(value[0])
    if any(len(r) != width for r in value):
        raise InstanceFormatError(f"{key} is not rectangular")
    for r in value:
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise InstanceFormatError(f"{key} contains a non-numeric entry {x!r}")
    return np.array(value, dtype=np.float64)


def parse_instance(text: str | bytes) -> InstanceDocument:
    """Parse and validate an instance document."""
    raw = text.encode() if isinstance(text, str) else bytes(text)
    try:
        doc = json.loads(raw.decode("utf-8"), parse_constant=_reject_constant)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InstanceFormatError(f"not a valid instance document: {exc}") from None
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance document must be an object")
    unknown = set(doc) - {"label", "layout", "a_plus", "a_minus", "w", "gap_hint"}
    if unknown:
        raise InstanceFormatError(f"unknown fields {sorted(unknown)}")
    label = doc.get("label", "")
    if not isinstance(label, str):
        raise InstanceFormatError("label must be a string")
    layout = doc.get("layout", Layout.CENTRAL.value)
    if layout not in {m.value for m in Layout}:
        raise InstanceFormatError(f"layout must be one of {[m.value for m in Layout]}, got {layout!r}")
    hint = doc.get("gap_hint")
    if hint is not None:
        if (not isinstance(hint, list) or len(hint) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in hint)):
            raise InstanceFormatError("gap_hint must be a pair [alpha, beta]")
        hint = (float(hint[0]), float(hint[1]))
        if not (math.isfinite(hint[0]) and math.isfinite(hint[1]) and hint[0] < hint[1]):
            raise InstanceFormatError("gap_hint needs finite alpha < beta")
    spec = BlockOperatorSpec(_matrix(doc, "a_plus"), _matrix(doc, "a_minus"), _matrix(doc, "w"),
                             label, Layout(layout))
    return InstanceDocument(spec, hint, hashlib.sha256(raw).hexdigest())


def load_instance(path: str | Path) -> InstanceDocument:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InstanceFormatError(f"cannot read {path}: {exc.strerror}") from None
    return parse_instance(raw)


def dump_instance(spec: BlockOperatorSpec, gap_hint: tuple[float, float] | None = None) -> str:
    """Canonical text of an instance; ``dump(parse(dump(x))) == dump(x)``."""
    doc = {
        "label": spec.label,
        "layout": spec.layout.value,
        "a_plus": spec.a_plus.tolist(),
        "a_minus": spec.a_minus.tolist(),
        "w": spec.w.tolist(),
    }
    if gap_hint is not None:
        doc["gap_hint"] = list(gap_hint)
    return emit_json(doc) + "\n"


# ---------------------------------------------------------------------------
# report documents
# ---------------------------------------------------------------------------

def provenance(digest: str | None = None, seed: int | None = None) -> dict:
    return {"tool": TOOL_NAME, "version": __version__, "input_digest": digest, "seed": seed}


def geometry_document(geom: GapGeometry) -> dict:
    return {
        "case": geom.case_tag.value,
        "alpha": geom.alpha,
        "beta": geom.beta,
        "d_plus": geom.d_plus,
        "d_minus": geom.d_minus,
        "m_plus": geom.m_plus,
        "m_minus": geom.m_minus,
        "guarded_gap": list(geom.guarded_gap()),
    }


def report_document(report: BoundReport, doc: InstanceDocument) -> dict:
    angles = report.angles
    out = {
        "provenance": provenance(doc.digest),
        "instance": {
            "label": doc.spec.label,
            "layout": doc.spec.layout.value,
            "n_plus": doc.spec.n_plus,
            "n_minus": doc.spec.n_minus,
        },
        "geometry": geometry_document(report.geometry),
        "exact_norm": report.exact_norm,
        "v_base": report.v_base,
        "v_inf": report.v_inf,
        "mu_star": report.mu_star,
        "theta_star": report.theta_star,
        "norm_v": report.norm_v,
        "delta": report.delta,
        "bounds": report.bounds,
        "slacks": report.slacks,
        "tightest": report.tightest()[0],
        "angles": {
            "norm_diff": angles.norm_diff,
            "principal_angles": list(angles.principal_angles),
            "max_angle": angles.max_angle,
            "rank_P": angles.rank_P,
            "rank_Q": angles.rank_Q,
            "projection_convention": angles.projection_convention,
            "sign_identity_residual": angles.sign_identity_residual,
            "sectorial_margin": angles.sectorial_margin,
            "gap_persistence": angles.gap_persistence,
        },
        "birman_schwinger": None,
        "proof_diagnostics": None,
    }
    if report.birman_schwinger is not None:
        bs = report.birman_schwinger
        out["birman_schwinger"] = {
            "v0": bs.v0,
            "min_eig_form": bs.min_eig_form,
            "positive_definite": bs.positive_definite,
            "consistent": bs.consistent,
        }
    if report.diagnostics is not None:
        d = report.diagnostics
        out["proof_diagnostics"] = {
            "mu": d.mu,
            "kappa_plus": d.kappa_plus,
            "kappa_plus_bound": d.kappa_plus_bound,
            "kappa_minus": d.kappa_minus,
            "kappa_minus_bound": d.kappa_minus_bound,
            "v_mu": d.v_mu,
            "v_mu_bound": d.v_mu_bound,
            "ok": d.ok,
        }
    return out


def _write(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _analyze_instance(path):
    doc = load_instance(path)
    pair = assemble(doc.spec)
    geom = detect_gap(pair.decompA, pair.J, hint=doc.gap_hint)
    return doc, pair, geom


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    doc, pair, geom = _analyze_instance(args.input)
    report = build_report(pair, geom, grid_points=args.grid_points)
    problems = report.violations()
    if problems:
        raise InternalInvariantError(f"instance {doc.digest}: " + "; ".join(problems))
    _write(args.output, emit_json(report_document(report, doc)) + "\n")
    name, value = report.tightest()
    print(f"exact={fmt_float(report.exact_norm)} tightest={name} bound={fmt_float(value)} "
          f"slack={fmt_float(value - report.exact_norm)}")
    return EXIT_OK


def cmd_mu_scan(args) -> int:
    if args.points < 3:
        raise _UsageError("--points must be at least 3")
    doc, pair, geom = _analyze_instance(args.input)
    report = build_report(pair, geom, grid_points=args.grid_points)
    evaluate = RelativeBoundEvaluator(pair)
    lo, hi = geom.guarded_gap()
    lines = [SCAN_HEADER]
    for mu in np.linspace(lo, hi, args.points):
        mu = float(mu)
        pd = evaluate.positive_definite(mu)
        v = evaluate(mu)
        lines.append(csv_row([mu, v, math.atan(v), pd]))
    lines.append(f"# optimum,mu_star={fmt_float(report.mu_star)},v_min={fmt_float(report.v_inf)},"
                 f"theta_star={fmt_float(report.theta_star)}")
    _write(args.output, "\n".join(lines) + "\n")
    print(f"mu_star={fmt_float(report.mu_star)} v_min={fmt_float(report.v_inf)}")
    return EXIT_OK


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        p, m = (int(x) for x in text.split(","))
    except ValueError:
        raise _UsageError(f"--dims expects P,M, got {text!r}") from None
    if p < 1 or m < 1:
        raise _UsageError("--dims entries must be >= 1")
    return p, m


def _parse_target(text: str) -> float | tuple[float, float]:
    try:
        if ":" in text:
            lo, hi = (float(x) for x in text.split(":"))
            value = (lo, hi)
            ok = 0 <= lo <= hi and math.isfinite(hi)
        else:
            value = float(text)
            ok = 0 <= value < math.inf
    except ValueError:
        raise _UsageError(f"--target-v expects V or LO:HI, got {text!r}") from None
    if not ok:
        raise _UsageError("--target-v must be finite, non-negative and ordered")
    return value


def cmd_suite(args) -> int:
    if args.count < 0:
        raise _UsageError("--count must be >= 0")
    n_plus, n_minus = _parse_dims(args.dims)
    try:
        config = GeneratorConfig(
            seed=args.seed, n_plus=n_plus, n_minus=n_minus, geometry=args.geometry,
            target_v=_parse_target(args.target_v), target_scale=args.target_scale,
            count=args.count, random_dims=args.random_dims,
        )
    except InvalidInstanceError as exc:
        raise _UsageError(str(exc)) from None
    tol = SuiteTolerances(slack=-1.0) if args.corrupt_slack_tolerance else SuiteTolerances()
    result = run_property_suite(config, tol=tol, grid_points=args.grid_points)
    lines = [SUITE_HEADER]
    for r in result.rows:
        lines.append(csv_row([
            r.id, r.n, r.geometry, r.v_base, r.v_inf, r.mu_star, r.exact,
            r.bounds.get("classical"), r.bounds.get("central"), r.bounds.get("case"), r.bounds.get("sin_theta"),
            r.sign_residual, r.sectorial_margin, r.gap_ok, r.passed,
        ]))
    _write(args.output, "\n".join(lines) + "\n")
    summary = {
        "provenance": provenance(seed=args.seed),
        "config": {
            "geometry": args.geometry, "dims": [n_plus, n_minus], "random_dims": args.random_dims,
            "count": args.count, "target_v": args.target_v, "target_scale": args.target_scale,
            "grid_points": args.grid_points,
        },
        **result.summary(),
        "failures": [{"id": r.id, "digest": r.digest, "checks": r.failed_checks, "error": r.error}
                     for r in result.rows if not r.passed],
    }
    _write(str(args.output) + ".summary.json", emit_json(summary) + "\n")
    print(f"instances={len(result.rows)} violations={result.violation_count} "
          f"inconclusive={result.inconclusive_count}")
    return EXIT_VIOLATION if result.violation_count else EXIT_OK


def _parse_grid(text: str) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise _UsageError("--w-grid must list at least one value")
    try:
        grid = [float(p) for p in parts]
    except ValueError:
        raise _UsageError(f"--w-grid expects comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(w) for w in grid):
        raise _UsageError("--w-grid values must be finite")
    return grid


def cmd_sharpness(args) -> int:
    grid = _parse_grid(args.w_grid)
    if not (math.isfinite(args.alpha) and math.isfinite(args.beta) and args.alpha < args.beta):
        raise _UsageError("need finite --alpha < --beta")
    lines = [SHARPNESS_HEADER]
    failures = 0
    for w in grid:
        rec = sharpness_2x2(args.alpha, args.beta, w, grid_points=args.grid_points)
        sharp = rec.agrees and all(abs(s) <= SHARPNESS_ATOL for s in rec.slacks.values())
        failures += not sharp
        lines.append(csv_row([w, rec.exact_numeric, rec.central_bound_opt, rec.case_bound,
                              rec.slacks.get("central"), rec.slacks.get("case")]))
    _write(args.output, "\n".join(lines) + "\n")
    print(f"rows={len(grid)} sharpness_failures={failures}")
    return EXIT_VIOLATION if failures else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Exact subspace rotation vs tan 2-theta bounds.")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    parser.add_argument("--tol-spec", type=float, default=None,
                        help="relative spectral tolerance (default 1e-9)")
    parser.add_argument("--grid-points", type=int, default=DEFAULT_GRID_POINTS,
                        help="grid size of the mu optimizer (default %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analyze one instance file and write a JSON report")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("mu-scan", help="tabulate v_mu over the guarded gap")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--points", type=int, default=65)
    p.set_defaults(func=cmd_mu_scan)

    p = sub.add_parser("suite", help="run the randomized property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--geometry", choices=["central", "case1", "case2"], default="central")
    p.add_argument("--dims", default="5,5", help="P,M block dimensions (maxima with --random-dims)")
    p.add_argument("--target-v", default="0.1:10", help="V or LO:HI (default %(default)s)")
    p.add_argument("--target-scale", choices=["log", "linear"], default="log")
    p.add_argument("--random-dims", action="store_true")
    p.add_argument("--corrupt-slack-tolerance", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("sharpness", help="2x2 sharpness table")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--w-grid", required=True, help="comma-separated coupling values")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_sharpness)
    return parser


def _fail(code: int, message: str) -> int:
    print(f"{TOOL_NAME}: error: {message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.grid_points < 3:
        return _fail(EXIT_USAGE, "--grid-points must be at least 3")
    rel = args.tol_spec if args.tol_spec is not None else 1e-9
    if not (rel > 0 and math.isfinite(rel)):
        return _fail(EXIT_USAGE, "--tol-spec must be a positive number")
    try:
        with spec_tolerance(rel):
            return args.func(args)
    except _UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (InvalidInstanceError, DomainError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (NoGapError, AmbiguousCutError, NearSingularityError) as exc:
        return _fail(EXIT_NO_GAP, f"no spectral gap: {exc}")
    except (InternalInvariantError, SpectralError) as exc:
        return _fail(EXIT_INTERNAL, f"internal invariant violated: {exc}")
    except OSError as exc:
        return _fail(EXIT_USAGE, f"cannot write output: {exc}")
    except Exception as exc:  # noqa: BLE001 - anything unexpected is a tool bug
        return _fail(EXIT_INTERNAL, f"internal error: {type(exc).__name__}: {exc}")
