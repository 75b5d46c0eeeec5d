"""Renormalisation flow of nearest-neighbour spinless automata.

A flow step blocks two cells with one of the named tile projections, runs
the commutator test for two time steps, and identifies the coarse automaton
within the known families by its transition rule: the images of ``X_1`` and
``Y_1`` on the cells ``0..2`` of the coarse ring.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.optimize import minimize

from .graded_algebra import CellLayout, GradedOperator, cell_op, to_dense
from .lattice_fca import (
    TWO_PI,
    Cellwise,
    FcaError,
    FcaSpec,
    Forking,
    GeneratorMap,
    MajoranaShift,
    SchumacherWerner,
    Shift,
    WrappedUnitary,
    build_wrapped_unitary,
    index_from_unitary,
    reduce_angle,
    wrap_size_for,
)
from .renorm import (
    RenormReport,
    TileProjection,
    build_isometry,
    check_renormalisable,
    clean_json,
    induced_automaton,
)

FIT_TOL = 1e-7
RULE_SIZE = 6
_PAIR = CellLayout(2)


class FlowError(ValueError):
    pass


# ---------------------------------------------------------------------------
# named projections

_PROJ_RE = re.compile(r"^(Pe|Po|PL|PR|PiX|PiY)\s*(?:\(\s*([01+-])\s*\)|([01+-]))?$")


def named_projection(name: str) -> TileProjection:
    """``Pe``, ``Po``, ``PL(c)``, ``PR(c)``, ``PiX(+-)``, ``PiY(+-)`` on a two-cell tile."""
    m = _PROJ_RE.match(name.strip())
    if not m:
        raise FlowError(f"unknown projection {name!r}")
    base, arg = m.group(1), m.group(2) or m.group(3)
    one = GradedOperator.identity(_PAIR.width)
    if base in ("Pe", "Po"):
        if arg is not None:
            raise FlowError(f"{base} takes no argument")
        zz = cell_op(_PAIR, 0, "Z") * cell_op(_PAIR, 1, "Z")
        p = 0.5 * (one + zz) if base == "Pe" else 0.5 * (one - zz)
        label = base
    elif base in ("PL", "PR"):
        if arg not in ("0", "1"):
            raise FlowError(f"{base} needs an occupation label 0 or 1")
        # PL keeps the right cell fixed, PR the left one
        p = cell_op(_PAIR, 1 if base == "PL" else 0, "P" + arg)
        label = f"{base}({arg})"
    else:
        sign = {"+": 1.0, "-": -1.0, None: 1.0}.get(arg)
        if sign is None:
            raise FlowError(f"{base} takes a sign + or -")
        g = "X" if base == "PiX" else "Y"
        p = 0.5 * (one + (sign * 1j) * (cell_op(_PAIR, 0, g) * cell_op(_PAIR, 1, g)))
        label = f"{base}({'+' if sign > 0 else '-'})"
    return TileProjection(p, 2, 1, label)


PROJECTIONS = ("Pe", "Po", "PL(0)", "PL(1)", "PR(0)", "PR(1)", "PiX(+)", "PiX(-)", "PiY(+)", "PiY(-)")


# ---------------------------------------------------------------------------
# flow points


def _circ(a: float, b: float, period: float = TWO_PI) -> float:
    d = abs(reduce_angle(a - b, period))
    return min(d, period - d)


@dataclass(frozen=True)
class FlowPoint:
    """A point of the flow: a family name, a cell-wise kind and reduced angles.

    ``theta`` of a cell-wise label is kept mod pi (the label and its negative
    give the same automaton), ``phi`` and Majorana-shift angles mod 2 pi.
    """

    family: str
    phi: float = 0.0
    theta: float = 0.0
    kind: str = "even_phase"
    direction: int = 0
    graded: bool = True
    info: tuple = ()

    # -- constructors
    @classmethod
    def sw(cls, phi: float, theta: float, kind: str = "even_phase") -> "FlowPoint":
        return cls("sw", phi, theta, kind).canonical()

    @classmethod
    def forking(cls, theta: float, kind: str = "even_phase") -> "FlowPoint":
        return cls("forking", 0.0, theta, kind).canonical()

    @classmethod
    def cellwise(cls, theta: float, kind: str = "even_phase") -> "FlowPoint":
        return cls("cellwise", 0.0, theta, kind).canonical()

    @classmethod
    def shift(cls, direction: int, theta: float = 0.0, kind: str = "even_phase") -> "FlowPoint":
        return cls("shift", 0.0, theta, kind, direction).canonical()

    @classmethod
    def majorana_shift(cls, direction: int, theta: float) -> "FlowPoint":
        return cls("majorana_shift", 0.0, theta, "even_phase", direction).canonical()

    @classmethod
    def unclassified(cls, **info) -> "FlowPoint":
        return cls("unclassified", info=tuple(sorted(info.items())))

    def canonical(self) -> "FlowPoint":
        fam, phi, theta = self.family, self.phi, self.theta
        if fam == "unclassified":
            return self
        if fam == "majorana_shift":
            theta = reduce_angle(theta)
        else:
            theta = reduce_angle(theta, math.pi)
            if math.pi - theta < 1e-9:
                theta = 0.0
        phi = reduce_angle(phi)
        if TWO_PI - phi < 1e-9:
            phi = 0.0
        if fam == "sw" and min(phi, TWO_PI - phi) < 1e-9:
            fam, phi = "cellwise", 0.0
        if fam in ("shift", "majorana_shift", "forking", "cellwise"):
            phi = 0.0
        return FlowPoint(fam, phi, theta, self.kind, self.direction, self.graded, self.info)

    def with_graded(self, graded: bool) -> "FlowPoint":
        return FlowPoint(self.family, self.phi, self.theta, self.kind, self.direction, graded, self.info)

    @property
    def is_shift(self) -> bool:
        return self.family in ("shift", "majorana_shift")

    @property
    def plain_shift(self) -> bool:
        return self.family == "shift" and self.theta == 0.0 and self.kind == "even_phase"

    def key(self, digits: int = 6) -> tuple:
        return (self.family, self.kind, self.direction, round(self.phi, digits) % round(TWO_PI, digits),
                round(self.theta, digits))

    def distance(self, other: "FlowPoint") -> float:
        if (self.family, self.kind, self.direction) != (other.family, other.kind, other.direction):
            return math.inf
        if self.family == "unclassified":
            return math.inf
        tper = TWO_PI if self.family == "majorana_shift" else math.pi
        return max(_circ(self.phi, other.phi), _circ(self.theta, other.theta, tper))

    def to_spec(self) -> FcaSpec:
        fam = self.family
        cw = Cellwise(self.kind, self.theta)
        if fam == "sw":
            return SchumacherWerner(self.phi, cw)
        if fam == "cellwise":
            return SchumacherWerner(0.0, cw)
        if fam == "forking":
            return Forking(cw)
        if fam == "majorana_shift":
            return MajoranaShift(self.direction, self.theta)
        if fam == "shift":
            if self.plain_shift:
                return Shift(self.direction)
            x, y = _twist_images(Shift(self.direction).generator_images(), self.kind, self.theta)
            return GeneratorMap(x, y, 1)
        raise FlowError("an unclassified point has no automaton")

    def to_dict(self) -> dict:
        d: dict = {"family": self.family}
        if self.family == "unclassified":
            d.update(dict(self.info))
            return clean_json(d)
        if self.family == "sw":
            d["phi"] = self.phi
        if self.family in ("shift", "majorana_shift"):
            d["dir"] = self.direction
        if self.family != "majorana_shift":
            d["kind"] = self.kind
        d["theta"] = self.theta
        d["graded"] = self.graded
        return clean_json(d)

    def label(self) -> str:
        f = self.family
        if f == "sw":
            return f"SW(phi={self.phi:.6f}, {self.kind} theta={self.theta:.6f})"
        if f == "cellwise":
            return f"cellwise({self.kind} theta={self.theta:.6f})"
        if f == "forking":
            return f"Forking({self.kind} theta={self.theta:.6f})"
        if f == "shift":
            s = "tau+" if self.direction > 0 else "tau-"
            return s if self.plain_shift else f"{s} o cellwise({self.kind} theta={self.theta:.6f})"
        if f == "majorana_shift":
            return f"{'sigma+' if self.direction > 0 else 'sigma-'}(theta={self.theta:.6f})"
        return "unclassified"


def _twist_images(images, kind: str, theta: float):
    """Images of the automaton ``O -> T0(u O u^dag)`` from those of ``T0``."""
    tx, ty = images
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    if kind == "odd_rotation":
        return c * tx + s * ty, s * tx - c * ty
    return c * tx - s * ty, s * tx + c * ty


# ---------------------------------------------------------------------------
# transition rules on cells 0..2


def _local_gen(n_cells: int, name: str, graded: bool) -> np.ndarray:
    if graded:
        return to_dense(cell_op(CellLayout(n_cells), 1, name))
    p = {"X": np.array([[0, 1], [1, 0]], dtype=complex), "Y": np.array([[0, -1j], [1j, 0]])}[name]
    return np.kron(np.kron(np.eye(2), p), np.eye(2 ** (n_cells - 2)))


def rule_of(u: np.ndarray, n_cells: int, graded: bool, tol: float = 1e-9) -> np.ndarray:
    """Images of ``X_1`` and ``Y_1`` under ``O -> U^dag O U``, restricted to cells 0..2."""
    rest = 2 ** (n_cells - 3)
    out = []
    for name in ("X", "Y"):
        img = u.conj().T @ _local_gen(n_cells, name, graded) @ u
        a = np.einsum("ajbj->ab", img.reshape(8, rest, 8, rest)) / rest
        if np.abs(img - np.kron(a, np.eye(rest))).max() > tol:
            raise FlowError("coarse transition rule reaches beyond the nearest neighbours")
        out.append(a)
    return np.stack(out)


def _hs(a: np.ndarray, b: np.ndarray) -> complex:
    return np.vdot(a, b) / a.shape[0]


def _occupations(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return np.stack([(idx >> (n - 1 - x)) & 1 for x in range(n)], axis=1)


def _odd_flip(n: int, graded: bool) -> np.ndarray:
    """Ordered product ``X_0 X_1 ... X_{n-1}`` (Jordan-Wigner or plain qubit)."""
    lay = CellLayout(n)
    if graded:
        op = GradedOperator.identity(lay.width)
        for x in range(n):
            op = op * cell_op(lay, x, "X")
        return to_dense(op, lay)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    out = np.eye(1)
    for _ in range(n):
        out = np.kron(out, x)
    return out


def sw_unitary(n: int, phi: float, theta: float, kind: str, graded: bool = True) -> np.ndarray:
    """Step unitary of the SW automaton on ``n`` cells, up to a global sign."""
    occ = _occupations(n)
    pairs = np.sum(occ * np.roll(occ, -1, axis=1), axis=1)
    s = 1.0 if kind == "odd_rotation" else -1.0
    d = np.exp(1j * s * theta * (n - 2 * occ.sum(axis=1)) + 1j * phi * pairs)
    u = np.diag(d)
    return _odd_flip(n, graded) @ u if kind == "odd_rotation" else u


def _shift_unitary(n: int, direction: int) -> np.ndarray:
    """Qubit cyclic shift with ``X_x -> X_{x+direction}`` under ``U^dag O U``."""
    idx = np.arange(1 << n)
    bits = _occupations(n)
    moved = np.roll(bits, direction, axis=1)
    target = (moved * (1 << np.arange(n - 1, -1, -1))).sum(axis=1)
    w = np.zeros((1 << n, 1 << n), dtype=complex)
    w[target, idx] = 1.0
    return w.conj().T


@lru_cache(maxsize=4096)
def _candidate_rule_cached(pt: FlowPoint) -> np.ndarray:
    fam = pt.family
    if fam in ("sw", "cellwise"):
        return rule_of(sw_unitary(RULE_SIZE, pt.phi, pt.theta, pt.kind, pt.graded), RULE_SIZE, pt.graded)
    if not pt.graded:
        if pt.plain_shift:
            return rule_of(_shift_unitary(RULE_SIZE, pt.direction), RULE_SIZE, False)
        raise FlowError(f"no qubit form for {pt.label()}")
    u = build_wrapped_unitary(pt.to_spec(), RULE_SIZE)
    return rule_of(u.U, RULE_SIZE, True)


def candidate_rule(pt: FlowPoint) -> np.ndarray:
    return _candidate_rule_cached(pt.canonical())


def rule_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max())


# ---------------------------------------------------------------------------
# family fitting


def _sw_closed_form(u: np.ndarray, n: int, graded: bool) -> list[FlowPoint]:
    e0, e1 = 1 << (n - 1), 1 << (n - 2)
    out = []
    for kind in ("even_phase", "odd_rotation"):
        d = u if kind == "even_phase" else _odd_flip(n, graded).conj().T @ u
        if np.abs(d - np.diag(np.diag(d))).max() > 1e-8:
            continue
        dg = np.diag(d)
        if np.abs(dg).min() < 1e-8:
            continue
        r1 = dg[e0] / dg[0]
        theta = (np.angle(r1) / 2.0) * (1.0 if kind == "even_phase" else -1.0)
        phi = float(np.angle(dg[e0 | e1] * dg[0] / (dg[e0] * dg[e1])))
        for t in (theta, theta + math.pi / 2):
            out.append(FlowPoint("sw", phi, t, kind, graded=graded).canonical())
    return out


def _twisted_candidates(rule: np.ndarray, base: FlowPoint, make) -> list[FlowPoint]:
    t0 = candidate_rule(base)
    tx = rule[0]
    a, b = _hs(t0[0], tx).real, _hs(t0[1], tx).real
    out = []
    for kind, sgn in (("even_phase", -1.0), ("odd_rotation", 1.0)):
        two = math.atan2(sgn * b, a)
        out.append(make(two / 2.0, kind))
    return out


def _majorana_candidates(rule: np.ndarray) -> list[FlowPoint]:
    lay = CellLayout(3)
    x1, y1 = to_dense(cell_op(lay, 1, "X")), to_dense(cell_op(lay, 1, "Y"))
    tx = rule[0]
    theta = math.atan2(-_hs(x1, tx).real, _hs(y1, tx).real)
    return [FlowPoint.majorana_shift(d, theta) for d in (1, -1)]


def _numeric_sw(rule: np.ndarray, graded: bool) -> FlowPoint | None:
    best = None
    for kind in ("even_phase", "odd_rotation"):
        def cost(x):
            r = rule_of(sw_unitary(RULE_SIZE, x[0], x[1], kind, graded), RULE_SIZE, graded)
            return float(np.sum(np.abs(r - rule) ** 2))

        for p0 in np.linspace(0, TWO_PI, 4, endpoint=False):
            for t0 in np.linspace(0, math.pi, 4, endpoint=False):
                res = minimize(cost, [p0 + 0.1, t0 + 0.1], method="Nelder-Mead",
                               options={"xatol": 1e-12, "fatol": 1e-20, "maxiter": 4000})
                if best is None or res.fun < best[0]:
                    best = (res.fun, FlowPoint("sw", res.x[0], res.x[1], kind, graded=graded).canonical())
    return best[1] if best is not None else None


def _close(a: float, b: float) -> bool:
    return abs(a - b) < 1e-6


def fit_family(coarse: WrappedUnitary, tol: float = FIT_TOL) -> FlowPoint:
    lay = coarse.layout
    if lay is None or lay.modes_per_cell != 1:
        raise FlowError("family fitting needs single-mode coarse cells")
    u = coarse.U
    n = lay.cells
    graded = coarse.graded
    rule = rule_of(u, n, graded)
    ind = index_from_unitary(u, lay, graded)
    cands: list[FlowPoint] = []
    if _close(ind, 1.0):
        cands += _sw_closed_form(u, n, graded)
        if graded:
            cands += _twisted_candidates(rule, FlowPoint.forking(0.0), lambda t, k: FlowPoint.forking(t, k))
    elif _close(ind, 2.0) or _close(ind, 0.5):
        d = 1 if ind > 1 else -1
        base = FlowPoint.shift(d).with_graded(graded)
        cands.append(base)
        if graded:
            cands += _twisted_candidates(rule, base, lambda t, k: FlowPoint.shift(d, t, k))
    elif graded and (_close(ind, math.sqrt(2)) or _close(ind, math.sqrt(0.5))):
        cands += _majorana_candidates(rule)
    for c in cands:
        c = c.with_graded(graded)
        try:
            if rule_distance(rule, candidate_rule(c)) < tol:
                return c
        except (FcaError, FlowError):
            continue
    if _close(ind, 1.0):
        c = _numeric_sw(rule, graded)
        if c is not None and rule_distance(rule, candidate_rule(c)) < tol:
            return c
    return FlowPoint.unclassified(index=ind).with_graded(graded)


# ---------------------------------------------------------------------------
# flow steps and orbits


@dataclass
class FlowStepResult:
    renormalisable: bool
    point: FlowPoint | None
    report: RenormReport
    trivial: bool
    coarse_parity: str
    parity_label: str

    def to_dict(self) -> dict:
        d = self.report.to_dict()
        d["renormalisable"] = self.renormalisable
        d["trivial"] = self.trivial
        d["fit"] = self.point.to_dict() if self.point is not None else None
        return d


def is_trivial(pt: FlowPoint) -> bool:
    """No interaction to renormalise: shifts, cell-wise automata, and SW at phi = n pi."""
    if pt.family in ("shift", "cellwise"):
        return True
    return pt.family == "sw" and _circ(pt.phi, math.pi) < 1e-9


def _resolve_projection(proj) -> TileProjection:
    return proj if isinstance(proj, TileProjection) else named_projection(proj)


def flow_step(pt: FlowPoint, proj, frame: str = "lattice", size: int | None = None, steps: int = 2,
              unsafe: bool = False) -> FlowStepResult:
    """One renormalisation step; ``frame='circuit'`` pulls the projection back through the first layer."""
    if pt.family == "unclassified":
        raise FlowError("cannot renormalise an unclassified point")
    spec = pt.to_spec()
    size = size or wrap_size_for(spec, steps)
    if not unsafe and size < wrap_size_for(spec, steps):
        raise FlowError(f"size {size} is below the regular-wrapping bound {wrap_size_for(spec, steps)}")
    tile = _resolve_projection(proj)
    if frame == "circuit":
        marg = spec.margolus()
        if marg is None:
            raise FlowError("the circuit frame needs a Margolus automaton")
        tile = tile.conjugated(marg[0].dagger(), tile.name)
    elif frame != "lattice":
        raise FlowError(f"unknown frame {frame!r}")
    u = build_wrapped_unitary(spec, size, unsafe=unsafe)
    e = build_isometry(tile)
    rep = check_renormalisable(u, tile, steps, e)
    trivial = is_trivial(pt)
    if not rep.verdict:
        return FlowStepResult(False, None, rep, trivial, rep.coarse_parity, rep.parity_label)
    ind = induced_automaton(u, e, steps)
    point = None
    if ind.coarse is not None and ind.coarse.layout.modes_per_cell == 1:
        point = fit_family(ind.coarse)
    else:
        rep.notes.append("coarse cells are not single modes; no family fit")
    rep.fit = point.to_dict() if point is not None else None
    return FlowStepResult(True, point, rep, trivial, rep.coarse_parity, rep.parity_label)


@dataclass
class FlowOrbit:
    points: list[FlowPoint]
    terminal: str  # fixed_point | cycle | unclassified | not_renormalisable | max_iter
    cycle_length: int | None = None
    failed_step: int | None = None
    steps: list[FlowStepResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return clean_json({
            "terminal": self.terminal,
            "cycle_length": self.cycle_length,
            "failed_step": self.failed_step,
            "points": [p.to_dict() for p in self.points],
        })

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "family", "phi", "theta"])
            for k, p in enumerate(self.points):
                w.writerow([k, p.family, f"{p.phi:.12g}", f"{p.theta:.12g}"])


def flow_orbit(start: FlowPoint, proj, max_iter: int = 16, frame: str = "lattice", tol: float = FIT_TOL) -> FlowOrbit:
    if max_iter < 1:
        raise FlowError("max_iter must be at least 1")
    pts = [start.canonical()]
    seen = {pts[0].with_graded(True).key(): 0}
    results = []
    for k in range(max_iter):
        cur = pts[-1].with_graded(True)  # coarse qubit cells are read as fermionic modes again
        res = flow_step(cur, proj, frame)
        results.append(res)
        if not res.renormalisable:
            return FlowOrbit(pts, "not_renormalisable", failed_step=k, steps=results)
        nxt = res.point
        pts.append(nxt)
        if nxt.family == "unclassified":
            return FlowOrbit(pts, "unclassified", steps=results)
        if nxt.with_graded(True).distance(cur) < tol:
            return FlowOrbit(pts, "fixed_point", cycle_length=1, steps=results)
        key = nxt.with_graded(True).key()
        if key in seen:
            return FlowOrbit(pts, "cycle", cycle_length=len(pts) - 1 - seen[key], steps=results)
        seen[key] = len(pts) - 1
    return FlowOrbit(pts, "max_iter", steps=results)


def is_fixed_point(pt: FlowPoint, proj, tol: float = FIT_TOL) -> bool:
    res = flow_step(pt, proj)
    return res.renormalisable and res.point is not None and res.point.with_graded(True).distance(pt.with_graded(True)) < tol


# ---------------------------------------------------------------------------
# Table sweep

_STEP_CACHE: dict = {}


def cached_step(pt: FlowPoint, proj: str, frame: str = "lattice") -> FlowStepResult:
    key = (pt.canonical(), proj, frame)
    if key not in _STEP_CACHE:
        _STEP_CACHE[key] = flow_step(pt, proj, frame)
    return _STEP_CACHE[key]


def grid_angles(k: int) -> list[float]:
    """``k`` points of the circle offset by pi/16, so no point lands on a multiple of pi/4."""
    return [math.pi / 16 + TWO_PI * i / k for i in range(k)]


def _delta(c: int, v: int) -> int:
    return 1 if c == v else 0


def _sw_expectation(kind: str, column: str, phi: float, theta: float) -> tuple[float, list[float]]:
    """Tabulated (phi', allowed theta') for a Schumacher-Werner row."""
    c = int(column[3]) if column[:2] in ("PL", "PR") else None
    if kind == "even_phase":
        if column == "Pe":
            return 2 * phi, [phi - 4 * theta, 4 * theta - 3 * phi]
        if column == "Po":
            return -2 * phi, [phi]
        t = 2 * (theta + _delta(c, 0) * phi)
        return 0.0, [t, -t]
    if column == "Pe":
        return 2 * phi, [-phi]
    if column == "Po":
        return -2 * phi, [phi]
    t = (2 * c - 1) * phi
    return 0.0, [-t, t]


@dataclass
class SweepCell:
    row: str
    column: str
    params: dict
    renormalisable: bool
    fitted: dict | None
    expected: dict
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return clean_json({"row": self.row, "column": self.column, "params": self.params,
                           "renormalisable": self.renormalisable, "fitted": self.fitted,
                           "expected": self.expected, "pass": self.passed, "detail": self.detail})


@dataclass
class SweepReport:
    cells: list[SweepCell]
    grid: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells)

    def matrix(self) -> dict:
        out: dict = {}
        for c in self.cells:
            ent = out.setdefault(c.row, {}).setdefault(c.column, {"pass": 0, "fail": 0})
            ent["pass" if c.passed else "fail"] += 1
        return out

    def failures(self) -> list[SweepCell]:
        return [c for c in self.cells if not c.passed]

    def to_dict(self) -> dict:
        return clean_json({"grid": self.grid, "passed": self.passed, "matrix": self.matrix(),
                           "cells": [c.to_dict() for c in self.cells]})

    def to_text(self) -> str:
        m = self.matrix()
        cols = []
        for r in m.values():
            for c in r:
                if c not in cols:
                    cols.append(c)
        width = max(len(r) for r in m) + 2
        lines = ["row".ljust(width) + "".join(c.ljust(14) for c in cols)]
        for row, ent in m.items():
            cells = []
            for c in cols:
                e = ent.get(c)
                cells.append(("-" if e is None else f"{e['pass']}/{e['pass'] + e['fail']}").ljust(14))
            lines.append(row.ljust(width) + "".join(cells))
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _angle_in(x: float, allowed: Iterable[float], period: float, tol: float) -> float | None:
    for a in allowed:
        if _circ(x, a, period) < tol:
            return a
    return None


def _sweep_sw(kind: str, grid: int, tol: float) -> list[SweepCell]:
    row = f"SW {kind}"
    out = []
    for column in ("Pe", "Po", "PL(0)", "PL(1)", "PR(0)", "PR(1)"):
        for phi in grid_angles(grid):
            for theta in grid_angles(grid):
                pt = FlowPoint.sw(phi, theta, kind)
                res = cached_step(pt, column)
                phi_e, thetas = _sw_expectation(kind, column, phi, theta)
                exp = {"phi": reduce_angle(phi_e), "theta": [reduce_angle(t, math.pi) for t in thetas]}
                params = {"phi": pt.phi, "theta": pt.theta}
                fitted = res.point.to_dict() if res.point is not None else None
                ok, detail = False, "not renormalisable"
                if res.renormalisable and res.point is not None:
                    q = res.point
                    fam_ok = q.family in ("sw", "cellwise")
                    phi_ok = fam_ok and _circ(q.phi, phi_e) < tol
                    hit = _angle_in(q.theta, thetas, math.pi, tol) if fam_ok else None
                    ok = phi_ok and hit is not None
                    if ok:
                        detail = f"branch theta'={hit:.6f}" if len(thetas) > 1 else "match"
                    else:
                        detail = f"fitted {q.label()}"
                out.append(SweepCell(row, column, params, res.renormalisable, fitted, exp, ok, detail))
    return out


def _shift_cells(row: str, points, columns, frame: str) -> list[SweepCell]:
    out = []
    for pt, want in points:
        for column, direction in columns(want):
            res = cached_step(pt, column, frame)
            q = res.point
            ok = res.renormalisable and q is not None and q.plain_shift and q.direction == direction
            detail = "match" if ok else (f"fitted {q.label()}" if q is not None else "not renormalisable")
            out.append(SweepCell(row, column, pt.to_dict(), res.renormalisable, q.to_dict() if q else None,
                                 {"shift": direction}, ok, detail))
    return out


def _sweep_forking() -> list[SweepCell]:
    out = []
    quarter = [math.pi / 4, 3 * math.pi / 4]  # theta is taken mod pi

    def cols(_):
        return [(f"PL({c})", -1) for c in (0, 1)] + [(f"PR({c})", 1) for c in (0, 1)]

    out += _shift_cells("Forking even_phase", [(FlowPoint.forking(t), None) for t in quarter], cols, "circuit")
    out += _shift_cells("Forking odd_rotation", [(FlowPoint.forking(t, "odd_rotation"), None) for t in quarter],
                        cols, "circuit")
    return out


def _sweep_majorana(thetas: Iterable[float]) -> list[SweepCell]:
    out = []
    for d in (1, -1):
        for t in thetas:
            pt = FlowPoint.majorana_shift(d, t)
            for column in ("PiY(+)", "PiY(-)"):
                res = cached_step(pt, column)
                q = res.point
                ok = res.renormalisable and q is not None and q.family == "cellwise"
                detail = "match" if ok else (f"fitted {q.label()}" if q is not None else "not renormalisable")
                out.append(SweepCell("Majorana shift", column, pt.to_dict(), res.renormalisable,
                                     q.to_dict() if q else None, {"family": "cellwise"}, ok, detail))
            out += _shift_cells("Majorana shift", [(pt, d)], lambda w: [("PiX(+)", w), ("PiX(-)", w)], "lattice")
    return out


def _trivial_or_blocked(res: FlowStepResult) -> bool:
    return not res.renormalisable or (res.point is not None and res.point.family in ("cellwise", "shift"))


def _sweep_unlisted(grid: int) -> list[SweepCell]:
    out = []

    def add(row, pt, column, frame="lattice"):
        res = cached_step(pt, column, frame)
        ok = _trivial_or_blocked(res)
        q = res.point
        out.append(SweepCell(row, column, pt.to_dict(), res.renormalisable, q.to_dict() if q else None,
                             {"renormalisable": False, "or": "trivial"}, ok,
                             "ok" if ok else f"fitted {q.label() if q else None}"))

    angles = grid_angles(grid)
    for kind in ("even_phase", "odd_rotation"):
        for phi in angles[::2]:
            for theta in angles[::2]:
                for column in ("PiX(+)", "PiX(-)", "PiY(+)", "PiY(-)"):
                    add(f"unlisted SW {kind}", FlowPoint.sw(phi, theta, kind), column)
        for phi in (0.0, math.pi):
            for theta in angles[::2]:
                for column in PROJECTIONS:
                    add(f"excluded SW {kind} phi=n pi", FlowPoint("sw", phi, theta, kind), column)
        for theta in angles:
            for column in PROJECTIONS:
                add(f"unlisted Forking {kind}", FlowPoint.forking(theta, kind), column, "circuit")
        for theta in [(2 * n + 1) * math.pi / 4 for n in range(4)]:
            for column in ("Pe", "Po", "PiX(+)", "PiX(-)", "PiY(+)", "PiY(-)"):
                add(f"unlisted Forking {kind}", FlowPoint.forking(theta, kind), column, "circuit")
    for d in (1, -1):
        for theta in angles:
            for column in ("PiX(+)", "PiY(+)", "Pe", "PL(0)"):
                add("unlisted Majorana shift", FlowPoint.majorana_shift(d, theta), column)
        for column in PROJECTIONS:
            add("shift (trivial)", FlowPoint.shift(d), column)
    return out


def table_sweep(grid: int = 8, tol: float = FIT_TOL, include_unlisted: bool = True) -> SweepReport:
    """Run every tabulated (family, projection) cell on a parameter grid and compare."""
    cells = _sweep_sw("even_phase", grid, tol) + _sweep_sw("odd_rotation", grid, tol)
    cells += _sweep_forking()
    cells += _sweep_majorana([math.pi])  # U = exp(-i (2n+1) pi/2 Z) is a rotation by (2n+1) pi
    if include_unlisted:
        cells += _sweep_unlisted(grid)
    return SweepReport(cells, grid)


def fixed_point_scan(grid: int = 8, projections: Iterable[str] = PROJECTIONS,
                     extra: Iterable[FlowPoint] = ()) -> list[tuple[FlowPoint, str, FlowStepResult]]:
    """All grid points (plus ``extra``) of the SW and Forking families that one step maps to themselves."""
    found = []
    pts = [FlowPoint.sw(p, t, k) for k in ("even_phase", "odd_rotation") for p in grid_angles(grid) for t in grid_angles(grid)]
    pts += [FlowPoint.forking(t, k) for k in ("even_phase", "odd_rotation") for t in grid_angles(grid)]
    pts += [p.canonical() for p in extra]
    for pt in pts:
        for proj in projections:
            res = cached_step(pt, proj)
            if res.renormalisable and res.point is not None and res.point.with_graded(True).distance(pt) < FIT_TOL:
                found.append((pt, proj, res))
    return found
