"""Coarse-graining by tile projections and the commutator test for renormalisability.

A tile projection ``P`` of rank ``r`` on ``N`` cells defines an isometry from
a coarse cell of dimension ``r`` into the tile.  On a wrapping split into
``M`` tiles the global isometry ``V`` is the tensor product of the tile
range bases, ``Pi = V V^dag``, and the step-``N`` automaton is renormalisable
exactly when ``W^N`` commutes with ``Pi``.  The coarse step unitary is then
``V^dag W^N V``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .graded_algebra import CellLayout, GradedOperator, embed, parity_of, to_dense
from .lattice_fca import FcaError, FcaSpec, WrappedUnitary, build_wrapped_unitary, wrap_size_for

PROJ_TOL = 1e-10
EQUATION_TOL = 1e-8


class RenormError(ValueError):
    pass


def verdict_tolerance(dim: int) -> float:
    env = os.environ.get("FCA_RENORM_TOL")
    if env:
        try:
            return float(env)
        except ValueError:
            raise RenormError(f"FCA_RENORM_TOL={env!r} is not a number") from None
    return 1e-9 * dim


# ---------------------------------------------------------------------------
# projections and isometries


@dataclass(frozen=True, eq=False)
class TileProjection:
    P: GradedOperator
    tile_size: int
    modes_per_cell: int = 1
    name: str | None = None

    def __post_init__(self):
        lay = self.layout
        if self.P.width != lay.width:
            raise RenormError("projection width does not match the tile")
        if parity_of(self.P) != 0:
            raise RenormError("tile projections must be even")
        m = self.dense
        if np.abs(m @ m - m).max() > PROJ_TOL or np.abs(m - m.conj().T).max() > PROJ_TOL:
            raise RenormError("operator is not an orthogonal projection")
        if self.rank == 0:
            raise RenormError("projection has rank zero")

    @property
    def layout(self) -> CellLayout:
        return CellLayout(self.tile_size, self.modes_per_cell)

    @property
    def dense(self) -> np.ndarray:
        return to_dense(self.P, self.layout)

    @property
    def rank(self) -> int:
        tr = float(np.real(np.trace(self.dense)))
        k = round(tr)
        if abs(tr - k) > 1e-8:
            raise RenormError(f"projection trace {tr} is not an integer")
        return int(k)

    def conjugated(self, g: GradedOperator, name: str | None = None) -> "TileProjection":
        """``g P g^dag`` for a unitary on the tile."""
        return TileProjection(g * self.P * g.dagger(), self.tile_size, self.modes_per_cell, name)


def build_global_projection(p: TileProjection, lattice_size: int) -> GradedOperator:
    if lattice_size % p.tile_size:
        raise RenormError(f"lattice size {lattice_size} is not a multiple of the tile size {p.tile_size}")
    lay = CellLayout(lattice_size, p.modes_per_cell)
    out = GradedOperator.identity(lay.width)
    for t in range(lattice_size // p.tile_size):
        out = out * embed(p.P, range(t * p.tile_size, (t + 1) * p.tile_size), lay)
    return out


def _index_parity(dim: int) -> np.ndarray:
    return np.bitwise_count(np.arange(dim, dtype=np.int64)) & 1


def _dominant(v: np.ndarray) -> int:
    a = np.abs(v)
    return int(np.flatnonzero(a > a.max() - 1e-9)[0])


def _pivoted_range(block: np.ndarray, tol: float = 1e-8) -> list[np.ndarray]:
    cols = [block[:, j].copy() for j in range(block.shape[1])]
    out = []
    while True:
        norms = [np.linalg.norm(c) for c in cols]
        if not norms or max(norms) < tol:
            return out
        j = int(np.flatnonzero(np.array(norms) > max(norms) - 1e-9)[0])
        q = cols[j] / norms[j]
        out.append(q)
        cols = [c - q * np.vdot(q, c) for c in cols]


@dataclass(frozen=True, eq=False)
class Isometry:
    """Range basis of a tile projection; columns are coarse basis states."""

    projection: TileProjection
    basis: np.ndarray
    parities: tuple[int, ...]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def graded(self) -> bool:
        return len(set(self.parities)) == 2

    @property
    def coarse_modes(self) -> int | None:
        """Modes per coarse cell when the range is a full fermionic cell algebra."""
        r = self.rank
        k = r.bit_length() - 1
        if (1 << k) != r or not self.graded:
            return None
        want = tuple(int(b) for b in _index_parity(r))
        return k if want == self.parities else None

    @property
    def coarse_parity(self) -> np.ndarray:
        """Coarse image E^dag(Q) of the tile parity on one coarse cell."""
        return np.diag([1.0 - 2.0 * g for g in self.parities]).astype(complex)

    def parity_label(self) -> str:
        q = np.diag(self.coarse_parity).real
        if np.all(q == q[0]):
            return "+I" if q[0] > 0 else "-I"
        if self.rank == 2:
            return "+Z" if q[0] > 0 else "-Z"
        return "graded"

    def global_basis(self, n_tiles: int) -> np.ndarray:
        v = np.ones((1, 1), dtype=complex)
        for _ in range(n_tiles):
            v = np.kron(v, self.basis)
        return v


def build_isometry(p: TileProjection) -> Isometry:
    m = p.dense
    dim = m.shape[0]
    par = _index_parity(dim)
    vecs = []
    for g in (0, 1):
        idx = np.flatnonzero(par == g)
        for q in _pivoted_range(m[np.ix_(idx, idx)]):
            v = np.zeros(dim, dtype=complex)
            v[idx] = q
            vecs.append((g, v))
    if len(vecs) != p.rank:
        raise RenormError("range basis does not match the projection rank")
    fixed = []
    for g, v in vecs:
        j = _dominant(v)
        v = v * (abs(v[j]) / v[j])
        fixed.append((g, j, v))
    fixed.sort(key=lambda t: (t[0], t[1]))
    r = len(fixed)
    k = r.bit_length() - 1
    evens = [t for t in fixed if t[0] == 0]
    odds = [t for t in fixed if t[0] == 1]
    if (1 << k) == r and k >= 1 and len(evens) == len(odds):
        # lay the range out as k fermionic modes: parity of slot = popcount parity
        order = []
        ie, io = iter(evens), iter(odds)
        for b in _index_parity(r):
            order.append(next(io) if b else next(ie))
        fixed = order
    basis = np.column_stack([t[2] for t in fixed])
    return Isometry(p, basis, tuple(t[0] for t in fixed))


def coisometry_apply(e: Isometry, o: np.ndarray, n_tiles: int | None = None) -> np.ndarray:
    o = np.asarray(o)
    if n_tiles is None:
        n_tiles = round(math.log(o.shape[0], e.basis.shape[0]))
    v = e.global_basis(n_tiles)
    if v.shape[0] != o.shape[0]:
        raise RenormError("operator dimension does not match the tiled isometry")
    return v.conj().T @ o @ v


# ---------------------------------------------------------------------------
# reports


def _num(x: float) -> float:
    return float(f"{x:.12g}")


def clean_json(obj: Any) -> Any:
    """Round floats to 12 significant digits, recursively."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, (np.floating,)):
        return _num(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


@dataclass
class RenormReport:
    verdict: bool
    residual: float
    tolerance: float
    lattice_size: int
    steps: int
    coarse_dim: int
    coarse_parity: str  # "graded" | "bosonic"
    parity_label: str
    unitary_defect: float | None = None
    induced_unitary: np.ndarray | None = field(default=None, repr=False)
    fit: dict | None = None
    fdfc: dict | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "verdict": self.verdict,
            "residual": self.residual,
            "lattice_size": self.lattice_size,
            "coarse": {
                "dim": self.coarse_dim,
                "parity": self.coarse_parity,
                "parity_operator": self.parity_label,
                "unitary_defect": self.unitary_defect,
            },
            "fit": self.fit,
        }
        if self.fdfc is not None:
            d["fdfc"] = self.fdfc
        if self.notes:
            d["notes"] = list(self.notes)
        return clean_json(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def report_schema() -> dict:
    """JSON schema of ``RenormReport.to_dict`` as shipped with the package."""
    from importlib.resources import files

    return json.loads(files("fca_renorm").joinpath("schemas/report.schema.json").read_text())


# ---------------------------------------------------------------------------
# commutator test


@dataclass
class _Blocks:
    v: np.ndarray  # global isometry
    y: np.ndarray  # W^N V
    yd: np.ndarray  # W^{N dag} V


def _blocks(u: WrappedUnitary, e: Isometry, steps: int) -> _Blocks:
    p = e.projection
    if u.lattice_size % p.tile_size:
        raise RenormError(f"lattice size {u.lattice_size} is not a multiple of the tile size {p.tile_size}")
    if u.layout.modes_per_cell != p.modes_per_cell:
        raise RenormError("tile projection and lattice disagree on modes per cell")
    v = e.global_basis(u.lattice_size // p.tile_size)
    un = u.power(steps)
    return _Blocks(v, un.apply(v), un.apply_dagger(v))


def _off_block_norm(y: np.ndarray, v: np.ndarray) -> float:
    r = y - v @ (v.conj().T @ y)
    return float(np.linalg.norm(r, 2)) if r.size else 0.0


def check_renormalisable(u: WrappedUnitary, p: TileProjection, steps: int, isometry: Isometry | None = None,
                         tol: float | None = None) -> RenormReport:
    e = isometry or build_isometry(p)
    b = _blocks(u, e, steps)
    # [A, Pi] is block off-diagonal; its norm is the larger of the two blocks
    residual = max(_off_block_norm(b.y, b.v), _off_block_norm(b.yd, b.v))
    tol = verdict_tolerance(u.dim) if tol is None else tol
    verdict = residual < tol
    rep = RenormReport(
        verdict=verdict,
        residual=residual,
        tolerance=tol,
        lattice_size=u.lattice_size,
        steps=steps,
        coarse_dim=e.rank,
        coarse_parity="graded" if e.graded else "bosonic",
        parity_label=e.parity_label(),
    )
    us = b.v.conj().T @ b.y
    rep.unitary_defect = float(np.linalg.norm(us.conj().T @ us - np.eye(us.shape[0]), 2))
    if verdict:
        rep.induced_unitary = us
    if coarse_layout(e, u.lattice_size // p.tile_size) is None:
        rep.notes.append(f"coarse cell of dimension {e.rank} is not a fermionic mode register; fitting skipped")
    return rep


def invariant_state_check(u: WrappedUnitary, p: TileProjection, steps: int, tol: float | None = None) -> bool:
    """Whether ``W^N rho W^{N dag} = rho`` for ``rho = Pi / tr(Pi)``."""
    e = build_isometry(p)
    b = _blocks(u, e, steps)
    k = np.hstack([b.y, b.v])
    q, r = np.linalg.qr(k)
    n = b.v.shape[1]
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    diff = (r * sign) @ r.conj().T
    tol = verdict_tolerance(u.dim) if tol is None else tol
    return float(np.linalg.norm(diff, 2)) / n < tol


# ---------------------------------------------------------------------------
# induced automaton


def coarse_layout(e: Isometry, n_tiles: int) -> CellLayout | None:
    if e.coarse_modes is not None:
        return CellLayout(n_tiles, e.coarse_modes)
    r = e.rank
    k = r.bit_length() - 1
    if (1 << k) == r and not e.graded:
        return CellLayout(n_tiles, k)
    return None


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def coarse_cell_basis(e: Isometry, n_tiles: int, cell: int) -> list[tuple[np.ndarray, int]]:
    """Operator basis of one coarse cell as dense coarse matrices with their parities."""
    lay = coarse_layout(e, n_tiles)
    r = e.rank
    out = []
    if lay is not None and e.graded:
        span = 2 * lay.modes_per_cell
        lo = span * cell
        for m in range(1 << span):
            op = GradedOperator(lay.width, {m << lo: 1.0})
            out.append((to_dense(op, lay), m.bit_count() & 1))
        return out
    # ungraded coarse cells: matrix units, embedded without strings
    left = np.eye(r ** cell)
    right = np.eye(r ** (n_tiles - cell - 1))
    for a in range(r):
        for b in range(r):
            unit = np.zeros((r, r), dtype=complex)
            unit[a, b] = 1.0
            out.append((np.kron(np.kron(left, unit), right), 0))
    return out


@dataclass
class InducedAutomaton:
    coarse: WrappedUnitary | None
    unitary: np.ndarray
    graded: bool
    isometry: Isometry
    equation_residual: float


def brute_force_equation(u: WrappedUnitary, e: Isometry, steps: int, cells: list[int] | None = None) -> float:
    """Largest ``||T^N(E(O)) - E(S(O))||`` over a full operator basis of coarse cells.

    ``S`` is the only candidate compatible with ``E^dag E = id``, namely
    ``S = E^dag T^N E``; the residual vanishes iff the renormalisation
    equation holds.
    """
    b = _blocks(u, e, steps)
    n_tiles = u.lattice_size // e.projection.tile_size
    us = b.v.conj().T @ b.y
    a = b.yd
    bb = b.v @ us.conj().T
    k = np.hstack([a, bb])
    _, r = np.linalg.qr(k)
    n = a.shape[1]
    worst = 0.0
    for c in (range(n_tiles) if cells is None else cells):
        for o, _ in coarse_cell_basis(e, n_tiles, c):
            big = np.zeros((2 * n, 2 * n), dtype=complex)
            big[:n, :n] = o
            big[n:, n:] = -o
            worst = max(worst, float(np.linalg.norm(r @ big @ r.conj().T, 2)))
    return worst


def induced_automaton(u: WrappedUnitary, e: Isometry, steps: int, verify: bool = True) -> InducedAutomaton:
    b = _blocks(u, e, steps)
    us = b.v.conj().T @ b.y
    defect = float(np.abs(us.conj().T @ us - np.eye(us.shape[0])).max())
    if defect > 1e-9:
        raise RenormError(f"induced coarse matrix is not unitary (defect {defect:.3g}); the projection is not invariant")
    n_tiles = u.lattice_size // e.projection.tile_size
    lay = coarse_layout(e, n_tiles)
    coarse = WrappedUnitary(n_tiles, lay, [us], graded=e.graded) if lay is not None else None
    res = brute_force_equation(u, e, steps) if verify else float("nan")
    if verify and res > EQUATION_TOL:
        raise RenormError(f"renormalisation equation fails with residual {res:.3g}")
    return InducedAutomaton(coarse, us, e.graded, e, res)


# ---------------------------------------------------------------------------
# wrapping independence


def coarse_rule(us: np.ndarray, e: Isometry, n_tiles: int, cell: int = 1, tol: float = 1e-10):
    """Images ``S(O)`` of a coarse-cell basis, as Pauli/unit expansions on cells cell-1..cell+1."""
    from .graded_algebra import pauli_decompose

    lay = coarse_layout(e, n_tiles)
    if lay is None:
        raise RenormError("coarse rule comparison needs power-of-two coarse cells")
    k = lay.modes_per_cell
    keep = sum(1 << q for q in range((cell - 1) * k, (cell + 2) * k))
    out = []
    for o, g in coarse_cell_basis(e, n_tiles, cell):
        img = us.conj().T @ o @ us
        dec = pauli_decompose(img, tol)
        for (x, z) in dec:
            if (x | z) & ~keep:
                raise RenormError("coarse image leaves the neighbourhood")
        out.append((dec, g))
    return out


def _rule_distance(a, b, flip: bool) -> float:
    worst = 0.0
    for (da, g), (db, _) in zip(a, b):
        s = -1.0 if (flip and g) else 1.0
        keys = set(da) | set(db)
        worst = max(worst, max((abs(da.get(q, 0) - s * db.get(q, 0)) for q in keys), default=0.0))
    return worst


@dataclass
class EquivalenceResult:
    agree: bool
    verdicts: dict
    rule_distance: float | None


def brute_force_equivalence(spec: FcaSpec, p: TileProjection, steps: int, sizes: tuple[int, int] = (10, 12)) -> EquivalenceResult:
    verdicts = {}
    rules = {}
    for size in sizes:
        if size < wrap_size_for(spec, steps):
            raise FcaError(f"size {size} below the regular-wrapping bound")
        u = build_wrapped_unitary(spec, size)
        e = build_isometry(p)
        rep = check_renormalisable(u, p, steps, e)
        verdicts[size] = rep.verdict
        if rep.verdict and coarse_layout(e, size // p.tile_size) is not None:
            rules[size] = coarse_rule(rep.induced_unitary, e, size // p.tile_size)
    same = len(set(verdicts.values())) == 1
    dist = None
    if same and len(rules) == len(sizes):
        a, b = (rules[s] for s in sizes)
        dist = min(_rule_distance(a, b, False), _rule_distance(a, b, True))
        same = dist < 1e-8
    return EquivalenceResult(same, verdicts, dist)
