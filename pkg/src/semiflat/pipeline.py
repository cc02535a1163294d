"""Orchestration: atlas and section checks, the base locus, and the three correspondence rows."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .angles import circular_distance
from .atlas import validate_atlas
from .config import RunConfig
from .lagrangian import (
    DegenerateImmersionError,
    cross_identity_residual,
    deta_field,
    eta_identity_residual,
    kahler_compatibility_residual,
    lift_distance,
    omega_gram,
    omega_pullback_residual,
    phase_matrices,
    structural_residual,
)
from .locus import (
    BaseLocusPatch,
    TangentFieldY,
    build_patch,
    explicit_field,
    glue_check,
    gradient_field,
    normal_field,
    tangency_residual,
    zero_field,
)
from .mirror import SingularBError, cr_residual, curvature, dhym_residual, mirror_cross_residual, omega_tilde, triviality_check
from .phase_solver import PhaseProblem, PhaseSolverError, ZeroResultantError, estimate_theta, solve_phase
from .sections import validate_constant_section

TABLE_COLUMNS = ("phase", "lag_res", "f02_res", "slag_res", "dhym_res")
ORACLE_NODES = 64  # nodes checked with the brute-force top-power expansion


class PipelineError(RuntimeError):
    """A module error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


class _stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, Exception) and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


@dataclass
class NodeTable:
    u: np.ndarray  # (n, k)
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.u.shape[1]

    def header(self) -> list[str]:
        return [f"u{i + 1}" for i in range(self.k)] + list(TABLE_COLUMNS)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.u] + [self.columns[c] for c in TABLE_COLUMNS])


@dataclass
class CorrespondenceReport:
    config: str | None
    m: int
    k: int | None
    tolerance: float
    atlas: dict
    section: dict | None = None
    patch: dict | None = None
    row1: dict | None = None
    row2: dict | None = None
    row3: dict | None = None
    solver: dict | None = None
    verdict: str = "REPORT"
    table: NodeTable | None = None

    @property
    def disagreements(self) -> list[str]:
        out = []
        for name in ("row1", "row2", "row3"):
            row = getattr(self, name)
            if row is not None and row.get("agree") is False:
                out.append(name)
        return out


def _pair(a: float, b: float, tol: float) -> dict:
    pa, pb = a <= tol, b <= tol
    return {"pass": [bool(pa), bool(pb)], "agree": bool(pa == pb)}


def _asdict(obj) -> dict:
    return dataclasses.asdict(obj)


# --- stages ---------------------------------------------------------------------------


def atlas_summary(cfg: RunConfig) -> dict:
    with _stage("atlas"):
        rep = validate_atlas(cfg.atlas, cfg.samples_per_box, cfg.tolerances.validation)
    return {"ok": rep.ok, **_asdict(rep)}


def _glue_samples(cfg: RunConfig, t) -> np.ndarray:
    src, dst = cfg.atlas.chart(t.source), cfg.atlas.chart(t.target)
    region = t.overlap if t.overlap is not None else src.domain
    pts = region.shrink(0.05 * float(np.min(region.hi - region.lo))).grid(cfg.glue_samples)
    keep = np.atleast_1d(src.domain.contains(pts)) & np.atleast_1d(dst.domain.contains(t.apply(pts)))
    return pts[keep]


def section_summary(cfg: RunConfig) -> dict | None:
    if cfg.section is None:
        return None
    with _stage("section"):
        rep = validate_constant_section(cfg.atlas, cfg.section, cfg.tolerances.validation)
    glue = []
    atlas = cfg.atlas
    for t in atlas.transitions:
        entry = {"source": t.source, "target": t.target}
        try:
            g = glue_check(atlas, t, cfg.section[t.source], cfg.section[t.target], _glue_samples(cfg, t))
            entry.update(
                samples=g.samples,
                forward_residual=g.forward_residual,
                backward_residual=g.backward_residual,
                ok=g.ok(cfg.tolerances.glue),
            )
        except Exception as err:  # recorded, not fatal: gluing is diagnostic
            entry.update(samples=0, error=f"{type(err).__name__}: {err}", ok=False)
        glue.append(entry)
    return {"ok": rep.ok and all(g["ok"] for g in glue), **_asdict(rep), "glue": glue}


def locus_patch(cfg: RunConfig, resolution=None) -> BaseLocusPatch:
    if cfg.locus is None:
        raise PipelineError("locus", ValueError("config has no locus block"))
    lo = cfg.locus
    with _stage("locus"):
        return build_patch(
            cfg.atlas.chart(lo.chart),
            cfg.section[lo.chart],
            lo.u_box,
            lo.resolution if resolution is None else resolution,
            lo.initial_guess,
            lo.margin,
        )


def patch_summary(patch: BaseLocusPatch) -> dict:
    with _stage("locus"):
        ot = omega_tilde(patch)
        return {
            "chart": patch.chart.id,
            "shape": list(patch.shape),
            "n_nodes": patch.n_nodes,
            "u_box": patch.u_box.to_pairs(),
            "level_residual": patch.level_residual(),
            "implicit_residual": patch.implicit_residual(),
            "mirror_cr_residual": cr_residual(patch),
            "omega_tilde_consistency": ot.consistency,
            "omega_tilde_min_eigenvalue": ot.min_eigenvalue,
            "kahler_compatibility": kahler_compatibility_residual(patch),
        }


def make_field(cfg: RunConfig, patch: BaseLocusPatch) -> TangentFieldY:
    spec = cfg.field
    with _stage("field"):
        if spec is None or spec.mode == "zero":
            return zero_field(patch)
        if spec.mode == "gradient":
            return gradient_field(patch, spec.f)
        if spec.mode == "explicit":
            return explicit_field(patch, spec.components)
        return normal_field(patch, spec.components)


def row1(patch: BaseLocusPatch, Y: TangentFieldY, tol: float, fibre_samples: int = 5) -> dict:
    """Normal fields: trivial mirror connection versus a lift equal to the zero-field lift."""
    with _stage("lagrangian"):
        tri = triviality_check(patch, Y, tol)
        t = np.random.default_rng(0).random((fibre_samples, patch.m - patch.k))
        dist = lift_distance(patch, Y, zero_field(patch), t)
    identical = dist <= tol
    return {
        "normal": bool(tri.orthogonality_residual <= tol),
        "orthogonality_residual": tri.orthogonality_residual,
        "trivial": bool(tri.trivial),
        "connection_residual": tri.connection_residual,
        "lift_distance": dist,
        "lift_identical": bool(identical),
        "pass": [bool(tri.trivial), bool(identical)],
        "agree": bool(tri.trivial == identical),
    }


def row2(patch: BaseLocusPatch, Y: TangentFieldY, tol: float, mask=None) -> tuple[dict, np.ndarray, np.ndarray]:
    """Lagrangian condition versus integrability of the mirror connection."""
    k = patch.k
    with _stage("lagrangian"):
        gram = omega_gram(patch, Y)
        lag_node = np.max(np.abs(gram[:, :k, :k]), axis=(1, 2))
        zeros = structural_residual(patch, Y)
        cross = cross_identity_residual(patch, Y)
        eta_id = eta_identity_residual(patch, Y)
        tang = tangency_residual(patch, Y)
    with _stage("mirror"):
        _, F02 = curvature(patch, Y)
        f02_node = np.max(np.abs(F02), axis=(1, 2))
        mirror_cross = mirror_cross_residual(patch, Y, deta_field(patch, Y))
    keep = np.ones(patch.n_nodes, dtype=bool) if mask is None else mask
    lag = float(np.max(lag_node[keep], initial=0.0))
    f02 = float(np.max(f02_node[keep], initial=0.0))
    row = {
        "lagrangian_residual": lag,
        "f02_residual": f02,
        **_pair(lag, f02, tol),
        "structural_wz": zeros.wz,
        "structural_zz": zeros.zz,
        "omega_antisymmetry": zeros.antisymmetry,
        "omega_deta_residual": cross,
        "curvature_deta_residual": mirror_cross,
        "eta_identity_residual": eta_id,
        "tangency_residual": tang,
    }
    return row, lag_node, f02_node


def _theta(cfg: RunConfig, phases: np.ndarray) -> tuple[float, str]:
    if cfg.phase is not None and cfg.phase.theta0 is not None:
        return float(cfg.phase.theta0), cfg.phase.source
    with _stage("phase"):
        return estimate_theta(phases), "estimate"


def row3(cfg: RunConfig, patch: BaseLocusPatch, Y: TangentFieldY, tol: float, mask=None, theta0=None):
    """Special Lagrangian phase versus the dHYM phase."""
    n = patch.n_nodes
    nan = np.full(n, np.nan)
    try:
        with _stage("lagrangian"):
            pm = phase_matrices(patch, Y)
    except PipelineError as err:
        if isinstance(err.cause, DegenerateImmersionError):
            return {"status": "undefined", "reason": str(err.cause), "agree": None}, nan, nan, nan
        raise
    keep = np.ones(n, dtype=bool) if mask is None else mask
    if theta0 is None:
        theta0, source = _theta(cfg, pm.phase[keep])
    else:
        source = "solve"
    slag_node = circular_distance(pm.phase, theta0)
    try:
        with _stage("mirror"):
            dh = dhym_residual(patch, Y, theta0, pm=pm, oracle_nodes=ORACLE_NODES, mask=keep)
    except PipelineError as err:
        if isinstance(err.cause, SingularBError):
            return {"status": "undefined", "reason": str(err.cause), "agree": None}, pm.phase, slag_node, nan
        raise
    dhym_node = circular_distance(dh.phases, theta0)
    with _stage("lagrangian"):
        pull = omega_pullback_residual(patch, Y)
    slag = float(np.max(slag_node[keep], initial=0.0))
    offset = (patch.m - patch.k) * np.pi / 2
    try:
        rep_det = estimate_theta(pm.phase[keep])
        rep_omega = estimate_theta(pm.omega_phase[keep])
    except ZeroResultantError:
        rep_det = rep_omega = float("nan")
    row = {
        "status": "ok",
        "theta0": float(theta0),
        "theta0_source": source,
        "slag_residual": slag,
        "dhym_residual": dh.residual,
        **_pair(slag, dh.residual, tol),
        "dhym_residual_unsigned": dh.raw_residual,
        "factorization_gap": dh.factorization_gap,
        "mod_pi_gap": dh.mod_pi_gap,
        "top_power_gap": dh.top_power_gap,
        "top_power_phase_residual": dh.oracle_residual,
        "frame_constant": dh.kappa,
        "omega_pullback_residual": pull,
        "phase_without_factor": rep_det,
        "phase_with_factor": rep_omega,
        "factor_offset": offset,
    }
    return row, pm.phase, slag_node, dhym_node


def _correspondence(cfg, report, patch, Y, tol, mask=None, theta0=None):
    report.row1 = row1(patch, Y, cfg.tolerances.structural)
    report.row2, lag_node, f02_node = row2(patch, Y, tol, mask)
    report.row3, phase, slag_node, dhym_node = row3(cfg, patch, Y, tol, mask, theta0)
    keep = np.ones(patch.n_nodes, dtype=bool) if mask is None else mask
    cols = {"phase": phase, "lag_res": lag_node, "f02_res": f02_node, "slag_res": slag_node, "dhym_res": dhym_node}
    report.table = NodeTable(patch.u[keep], {c: np.asarray(v, dtype=float)[keep] for c, v in cols.items()})
    report.verdict = "DISAGREE" if report.disagreements else "PASS"


def _base_report(cfg: RunConfig, tol: float | None) -> CorrespondenceReport:
    tol = cfg.tolerances.correspondence if tol is None else tol
    return CorrespondenceReport(cfg.source, cfg.m, cfg.k, tol, atlas_summary(cfg))


# --- entry points ---------------------------------------------------------------------


def run_check_atlas(cfg: RunConfig, tol: float | None = None) -> CorrespondenceReport:
    return _base_report(cfg, tol)


def run_check_section(cfg: RunConfig, tol: float | None = None) -> CorrespondenceReport:
    report = _base_report(cfg, tol)
    report.section = section_summary(cfg)
    return report


def run_build_locus(cfg: RunConfig, tol: float | None = None, resolution=None) -> CorrespondenceReport:
    report = run_check_section(cfg, tol)
    report.patch = patch_summary(locus_patch(cfg, resolution))
    return report


def run_verify(cfg: RunConfig, tol: float | None = None, resolution=None) -> CorrespondenceReport:
    """Full pipeline on the configured field; verdicts compare paired residuals against ``tol``."""
    report = run_check_section(cfg, tol)
    patch = locus_patch(cfg, resolution)
    report.patch = patch_summary(patch)
    Y = make_field(cfg, patch)
    _correspondence(cfg, report, patch, Y, report.tolerance)
    return report


def run_solve_phase(cfg: RunConfig, tol: float | None = None, resolution=None) -> CorrespondenceReport:
    """Solve the phase equation for ``f`` and verify rows 1 to 3 on interior nodes."""
    if cfg.solve is None:
        raise PipelineError("solve", ValueError("config has no solve block"))
    sv = cfg.solve
    report = run_check_section(cfg, tol)
    res = resolution if resolution is not None else sv.resolution
    patch = locus_patch(cfg, res)
    report.patch = patch_summary(patch)
    with _stage("solve"):
        boundary = sv.boundary(patch.u)
        problem = PhaseProblem(patch, sv.theta0, boundary, tol=sv.tol, max_iter=sv.max_iter)
        try:
            sol = solve_phase(problem)
        except PhaseSolverError as err:
            report.solver = {"converged": False, "error": str(err), "history": list(err.history)}
            raise
    report.solver = {
        "converged": sol.converged,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "history": sol.history,
        "theta0": sv.theta0,
    }
    if not sol.converged:
        raise PipelineError("solve", PhaseSolverError(f"no convergence in {sol.iterations} iterations", sol.f, sol.history))
    _correspondence(cfg, report, patch, sol.Y, report.tolerance, patch.interior_mask(), sv.theta0)
    return report


def empty_table(k: int | None) -> NodeTable:
    return NodeTable(np.zeros((0, k or 0)), {c: np.zeros(0) for c in TABLE_COLUMNS})


__all__ = [
    "CorrespondenceReport",
    "NodeTable",
    "PipelineError",
    "TABLE_COLUMNS",
    "empty_table",
    "run_build_locus",
    "run_check_atlas",
    "run_check_section",
    "run_solve_phase",
    "run_verify",
]
