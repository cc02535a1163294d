"""Run configuration: a YAML document describing atlas, section, locus, field and phase.

Example::

    charts:
      - id: A
        box: [[-2, 2], [-2, 2]]
        potential: "(x1^2 + x2^2)/2"
    transitions: []
    section:
      charts:
        A: {Xi: [[1], [0]], Zeta: [[0], [1]], a: [0, 0.5]}
    locus: {chart: A, u_box: [[0.1, 0.9]], resolution: 65}
    field: {mode: gradient, f: "u1^2/2"}
    phase: {theta0: "pi/4"}
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .atlas import Atlas, AtlasError, Box, Chart, TransitionMap
from .dsl import Expression, ExpressionError, parse_expr
from .sections import ConstantSection, RationalAffineSubspace, SectionError

FIELD_MODES = ("gradient", "explicit", "normal", "zero")


class ConfigError(ValueError):
    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


@dataclass
class Tolerances:
    structural: float = 1e-10
    equivalence: float = 1e-8
    correspondence: float = 1e-9
    glue: float = 1e-10
    validation: float = 1e-10


@dataclass
class LocusSpec:
    chart: str
    u_box: Box
    resolution: tuple[int, ...]
    initial_guess: np.ndarray | None = None
    margin: float = 0.0


@dataclass
class FieldSpec:
    mode: str
    f: Expression | None = None
    components: list[Expression] = dc_field(default_factory=list)


@dataclass
class PhaseSpec:
    theta0: float | None  # None means estimate from the node phases
    source: str = "estimate"


@dataclass
class SolveSpec:
    theta0: float
    boundary: Expression
    resolution: tuple[int, ...] | None = None
    tol: float = 1e-10
    max_iter: int = 50


@dataclass
class OutputSpec:
    format: str = "json"
    path: str | None = None


@dataclass
class RunConfig:
    atlas: Atlas
    section: ConstantSection | None = None
    locus: LocusSpec | None = None
    field: FieldSpec | None = None
    phase: PhaseSpec | None = None
    solve: SolveSpec | None = None
    output: OutputSpec = dc_field(default_factory=OutputSpec)
    tolerances: Tolerances = dc_field(default_factory=Tolerances)
    samples_per_box: int = 5
    glue_samples: int = 3
    source: str | None = None

    @property
    def m(self) -> int:
        return self.atlas.m

    @property
    def k(self) -> int | None:
        return None if self.section is None else self.section.k


def _req(block: dict, key: str, where: str):
    if not isinstance(block, dict):
        raise ConfigError("expected a mapping", where)
    if key not in block:
        raise ConfigError(f"missing required key {key!r}", where)
    return block[key]


def _expr(src, variables, where: str) -> Expression:
    if isinstance(src, (int, float)):
        src = repr(src)
    if not isinstance(src, str):
        raise ConfigError("expected an expression string", where)
    try:
        return parse_expr(src, variables)
    except ExpressionError as err:
        raise ConfigError(str(err), where) from err


def _number(src, where: str) -> float:
    e = _expr(src, (), where)
    return float(e(np.zeros(0)))


def _matrix(src, where: str, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    try:
        arr = np.array(src, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"not a numeric matrix: {err}", where) from err
    if arr.size == 0:
        arr = arr.reshape(rows or 0, cols or 0)
    if arr.ndim != 2:
        raise ConfigError(f"expected a row-major matrix, got shape {arr.shape}", where)
    if (rows is not None and arr.shape[0] != rows) or (cols is not None and arr.shape[1] != cols):
        raise ConfigError(f"expected shape ({rows}, {cols}), got {arr.shape}", where)
    return arr


def _vector(src, where: str, n: int | None = None) -> np.ndarray:
    try:
        arr = np.array(src, dtype=float).reshape(-1)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"not a numeric vector: {err}", where) from err
    if n is not None and arr.size != n:
        raise ConfigError(f"expected length {n}, got {arr.size}", where)
    return arr


def _box(src, where: str, dim: int | None = None) -> Box:
    try:
        box = Box.from_pairs(src)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err), where) from err
    if dim is not None and box.dim != dim:
        raise ConfigError(f"box has dimension {box.dim}, expected {dim}", where)
    if np.any(box.hi <= box.lo):
        raise ConfigError("box must have lo < hi on every axis", where)
    return box


def _int_matrix(src, where: str, rows: int, cols: int) -> np.ndarray:
    arr = _matrix(src, where, rows, cols)
    if np.any(arr != np.round(arr)):
        raise ConfigError("matrix entries must be integers", where)
    return arr.astype(np.int64)


def parse_config(doc: dict[str, Any], source: str | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", source)

    charts_src = _req(doc, "charts", "config")
    if not isinstance(charts_src, list) or not charts_src:
        raise ConfigError("expected a nonempty list of charts", "charts")
    margin = float(doc.get("margin", 0.0))
    charts = []
    m = None
    for i, c in enumerate(charts_src):
        where = f"charts[{i}]"
        cid = str(_req(c, "id", where))
        box = _box(_req(c, "box", where), f"{where}.box", m)
        m = box.dim
        if margin:
            box = box.shrink(margin)
        variables = [f"x{j + 1}" for j in range(m)]
        pot = _expr(_req(c, "potential", where), variables, f"{where}.potential")
        try:
            charts.append(Chart(cid, box, pot))
        except AtlasError as err:
            raise ConfigError(str(err), where) from err
    ids = [c.id for c in charts]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate chart ids {ids}", "charts")

    transitions = []
    for i, t in enumerate(doc.get("transitions") or []):
        where = f"transitions[{i}]"
        src, dst = str(_req(t, "from", where)), str(_req(t, "to", where))
        for cid in (src, dst):
            if cid not in ids:
                raise ConfigError(f"unknown chart id {cid!r}", where)
        A = _int_matrix(_req(t, "A", where), f"{where}.A", m, m)
        c = _vector(t.get("c", [0.0] * m), f"{where}.c", m)
        b = _vector(t["b"], f"{where}.b", m) if t.get("b") is not None else None
        overlap = _box(t["overlap"], f"{where}.overlap", m) if "overlap" in t else None
        try:
            transitions.append(TransitionMap(src, dst, A, c, b, overlap))
        except (AtlasError, ValueError) as err:
            raise ConfigError(str(err), where) from err
    try:
        atlas = Atlas.from_parts(charts, transitions).with_computed_b()
    except AtlasError as err:
        raise ConfigError(str(err), "transitions") from err

    section = None
    if doc.get("section") is not None:
        sec = doc["section"]
        entries = _req(sec, "charts", "section")
        if not isinstance(entries, dict):
            raise ConfigError("expected a mapping from chart id to frame", "section.charts")
        subs = {}
        k_decl = sec.get("k")
        for cid, e in entries.items():
            where = f"section.charts.{cid}"
            if cid not in ids:
                raise ConfigError(f"unknown chart id {cid!r}", where)
            Xi = _matrix(_req(e, "Xi", where), f"{where}.Xi")
            k = Xi.shape[1] if Xi.size else 0
            if Xi.shape[0] != m:
                raise ConfigError(f"Xi must have {m} rows, got shape {Xi.shape}", f"{where}.Xi")
            if k_decl is not None and k != int(k_decl):
                raise ConfigError(f"Xi has {k} columns but section declares k={k_decl}", f"{where}.Xi")
            Zeta = _int_matrix(e.get("Zeta", []), f"{where}.Zeta", m, m - k)
            Xi = _int_matrix(Xi, f"{where}.Xi", m, k)
            a = _vector(_req(e, "a", where), f"{where}.a", m)
            try:
                subs[cid] = RationalAffineSubspace(Xi, Zeta, a)
            except SectionError as err:
                raise ConfigError(str(err), where) from err
        missing = [cid for cid in ids if cid not in subs]
        if missing:
            raise ConfigError(f"no frame for charts {missing}", "section.charts")
        try:
            section = ConstantSection(subs)
        except SectionError as err:
            raise ConfigError(str(err), "section") from err

    locus = None
    k = None if section is None else section.k
    if doc.get("locus") is not None:
        if section is None:
            raise ConfigError("a locus needs a section block", "locus")
        lo = doc["locus"]
        cid = str(_req(lo, "chart", "locus"))
        if cid not in ids:
            raise ConfigError(f"unknown chart id {cid!r}", "locus.chart")
        u_box = _box(_req(lo, "u_box", "locus"), "locus.u_box", k)
        res = lo.get("resolution", 65)
        res = (int(res),) * k if np.ndim(res) == 0 else tuple(int(r) for r in res)
        if len(res) != k:
            raise ConfigError(f"resolution needs {k} entries", "locus.resolution")
        x0 = lo.get("initial_guess")
        x0 = None if x0 is None else _vector(x0, "locus.initial_guess", m)
        locus = LocusSpec(cid, u_box, res, x0, float(lo.get("margin", 0.0)))

    fld = None
    if doc.get("field") is not None:
        if section is None:
            raise ConfigError("a field needs a section block", "field")
        fb = doc["field"]
        mode = str(_req(fb, "mode", "field"))
        uvars = [f"u{j + 1}" for j in range(k)]
        if mode == "gradient":
            fld = FieldSpec(mode, f=_expr(_req(fb, "f", "field"), uvars, "field.f"))
        elif mode == "explicit":
            comps = _req(fb, "components", "field")
            if not isinstance(comps, list) or len(comps) != m:
                raise ConfigError(f"explicit mode needs {m} component strings", "field.components")
            fld = FieldSpec(mode, components=[_expr(s, uvars, f"field.components[{i}]") for i, s in enumerate(comps)])
        elif mode == "normal":
            comps = _req(fb, "coefficients", "field")
            if not isinstance(comps, list) or len(comps) != m - k:
                raise ConfigError(f"normal mode needs {m - k} coefficient strings", "field.coefficients")
            fld = FieldSpec(mode, components=[_expr(s, uvars, f"field.coefficients[{i}]") for i, s in enumerate(comps)])
        elif mode == "zero":
            fld = FieldSpec(mode)
        else:
            raise ConfigError(f"unknown mode {mode!r}; expected one of {FIELD_MODES}", "field.mode")

    phase = None
    if doc.get("phase") is not None:
        t0 = _req(doc["phase"], "theta0", "phase")
        if isinstance(t0, str) and t0.strip() == "estimate":
            phase = PhaseSpec(None)
        else:
            phase = PhaseSpec(_number(t0, "phase.theta0"), str(t0))

    solve = None
    if doc.get("solve") is not None:
        sb = doc["solve"]
        if locus is None:
            raise ConfigError("solve needs a locus block", "solve")
        uvars = [f"u{j + 1}" for j in range(k)]
        res = sb.get("resolution")
        if res is not None:
            res = (int(res),) * k if np.ndim(res) == 0 else tuple(int(r) for r in res)
        solve = SolveSpec(
            _number(_req(sb, "theta0", "solve"), "solve.theta0"),
            _expr(_req(sb, "boundary", "solve"), uvars, "solve.boundary"),
            res,
            float(sb.get("tol", 1e-10)),
            int(sb.get("max_iter", 50)),
        )

    out = doc.get("output") or {}
    output = OutputSpec(str(out.get("format", "json")), out.get("path"))
    if output.format not in ("json", "csv"):
        raise ConfigError("format must be json or csv", "output.format")

    tol = Tolerances(**{k_: float(v) for k_, v in (doc.get("tolerances") or {}).items()}) if doc.get("tolerances") else Tolerances()
    val = doc.get("validation") or {}
    return RunConfig(
        atlas,
        section,
        locus,
        fld,
        phase,
        solve,
        output,
        tol,
        int(val.get("samples_per_box", 5)),
        int(val.get("glue_samples", 3)),
        source,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}", str(path)) from err
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        raise ConfigError(f"malformed config: {getattr(err, 'problem', err)}", where) from err
    try:
        return parse_config(doc, str(path))
    except TypeError as err:
        raise ConfigError(str(err), str(path)) from err
