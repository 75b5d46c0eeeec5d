"""Wrapped fermionic cellular automata on circular lattices.

Conventions used throughout the package:

* An automaton on a wrapping is one step unitary ``W`` acting on states; the
  Heisenberg action is ``T(O) = W^dag O W``.
* Two-cell gates (controlled phase, Majorana swap, user circuit gates) enter
  ``W`` as written, so they act on operators as ``O -> G^dag O G``.
* A cell-wise gate label ``U`` (``e^{i theta Z}`` or ``cos(theta) X + sin(theta) Y``)
  names the operator map ``O -> U O U^dag``; ``W`` therefore carries ``U^dag``.
* Margolus circuits: layer 1 (``m1``) on the bonds ``(2x, 2x+1)``, then
  layer 2 (``m2``) on ``(2x+1, 2x+2)``; ``W = layer2 . layer1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

from .graded_algebra import (
    AlgebraError,
    CellLayout,
    GradedOperator,
    cell_op,
    embed,
    from_dense,
    pauli_decompose,
    restrict,
    to_dense,
)

TWO_PI = 2.0 * math.pi
UNITARY_TOL = 1e-10


class FcaError(ValueError):
    pass


def reduce_angle(a: float, period: float = TWO_PI) -> float:
    r = math.fmod(float(a), period)
    if r < 0:
        r += period
    if period - r < 1e-12:
        r = 0.0
    return r + 0.0  # no negative zero


# ---------------------------------------------------------------------------
# gates (two-cell gates live on a 2-cell, single-mode layout)

_PAIR = CellLayout(2)
_CELL = CellLayout(1)


def gate_controlled_phase(phi: float) -> GradedOperator:
    n0 = cell_op(_PAIR, 0, "P1")
    n1 = cell_op(_PAIR, 1, "P1")
    return GradedOperator.identity(_PAIR.width) + (np.exp(1j * phi) - 1.0) * (n0 * n1)


def gate_majorana_swap() -> GradedOperator:
    # (X (x) Y)^2 = -I, so the exponential is cos + sin
    xy = cell_op(_PAIR, 0, "X") * cell_op(_PAIR, 1, "Y")
    return math.sqrt(0.5) * (GradedOperator.identity(_PAIR.width) + xy)


def gate_fermionic_swap() -> GradedOperator:
    """Exact fermionic swap, ``G^dag (A (x) B) G = (-1)^{g(A)g(B)} B (x) A``.

    ``exp(pi/4 XX) exp(pi/4 YY)`` alone sends X_1 to -X_0; the trailing
    parity of cell 0 removes that sign.
    """
    xx = cell_op(_PAIR, 0, "X") * cell_op(_PAIR, 1, "X")
    yy = cell_op(_PAIR, 0, "Y") * cell_op(_PAIR, 1, "Y")
    one = GradedOperator.identity(_PAIR.width)
    return (math.sqrt(0.5) * (one + xx)) * (math.sqrt(0.5) * (one + yy)) * cell_op(_PAIR, 0, "Z")


@dataclass(frozen=True)
class Cellwise:
    kind: str  # "even_phase" | "odd_rotation"
    theta: float

    def __post_init__(self):
        if self.kind not in ("even_phase", "odd_rotation"):
            raise FcaError(f"unknown cellwise kind {self.kind!r}")
        object.__setattr__(self, "theta", reduce_angle(self.theta))

    @property
    def odd(self) -> bool:
        return self.kind == "odd_rotation"


def gate_cellwise(kind: Cellwise | str, theta: float | None = None) -> GradedOperator:
    cw = kind if isinstance(kind, Cellwise) else Cellwise(kind, theta)
    c, s = math.cos(cw.theta), math.sin(cw.theta)
    if cw.odd:
        return c * cell_op(_CELL, 0, "X") + s * cell_op(_CELL, 0, "Y")
    return c * GradedOperator.identity(2) + (1j * s) * cell_op(_CELL, 0, "Z")


def cellwise_step(cw: Cellwise) -> GradedOperator:
    """The factor entering ``W`` for the cell-wise label ``cw``."""
    return gate_cellwise(cw).dagger()


def pair_of(u: GradedOperator, v: GradedOperator) -> GradedOperator:
    return embed(u, [0], _PAIR) * embed(v, [1], _PAIR)


def is_unitary(g: GradedOperator, tol: float = UNITARY_TOL) -> bool:
    m = to_dense(g)
    return np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() < tol


# ---------------------------------------------------------------------------
# automaton specifications


@dataclass(frozen=True)
class SchumacherWerner:
    phi: float
    cellwise: Cellwise

    def __post_init__(self):
        object.__setattr__(self, "phi", reduce_angle(self.phi))

    family = "sw"
    radius = 1

    def margolus(self):
        c = gate_controlled_phase(self.phi)
        u = cellwise_step(self.cellwise)
        return c, pair_of(u, u) * c


@dataclass(frozen=True)
class Forking:
    cellwise: Cellwise

    family = "forking"
    radius = 1

    def margolus(self):
        s = gate_majorana_swap()
        u = cellwise_step(self.cellwise)
        return s, pair_of(u, u) * s


@dataclass(frozen=True)
class Circuit:
    m1: GradedOperator = field(compare=False)
    m2: GradedOperator = field(compare=False)

    family = "circuit"
    radius = 1

    def __post_init__(self):
        for g in (self.m1, self.m2):
            if g.width != _PAIR.width:
                raise FcaError("circuit gates must act on two single-mode cells")
            if g.grades() - {0}:
                raise FcaError("circuit gates must be even")
            if not is_unitary(g):
                raise FcaError("circuit gate is not unitary")

    def margolus(self):
        return self.m1, self.m2


@dataclass(frozen=True)
class Shift:
    direction: int

    family = "shift"
    radius = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise FcaError("shift direction must be +1 or -1")

    def margolus(self):
        return None

    def generator_images(self):
        lay = CellLayout(3)
        c = 1 + self.direction
        return cell_op(lay, c, "X"), cell_op(lay, c, "Y")


@dataclass(frozen=True)
class MajoranaShift:
    direction: int
    theta: float

    family = "majorana_shift"
    radius = 1

    def __post_init__(self):
        if self.direction not in (1, -1):
            raise FcaError("Majorana shift direction must be +1 or -1")
        object.__setattr__(self, "theta", reduce_angle(self.theta))

    def margolus(self):
        return None

    def generator_images(self):
        # sigma: X_x -> Y_x, Y_x -> X_{x+dir}; then O -> U O U^dag, U = exp(-i theta/2 Z)
        lay = CellLayout(3)
        c, s = math.cos(self.theta), math.sin(self.theta)
        t = 1 + self.direction
        x_img = c * cell_op(lay, 1, "Y") - s * cell_op(lay, 1, "X")
        y_img = c * cell_op(lay, t, "X") + s * cell_op(lay, t, "Y")
        return x_img, y_img


@dataclass(frozen=True)
class GeneratorMap:
    """Images of X_0 and Y_0 on the cells -radius..radius (stored 0..2*radius)."""

    x_image: GradedOperator = field(compare=False)
    y_image: GradedOperator = field(compare=False)
    radius: int = 1

    family = "generator_map"

    def __post_init__(self):
        w = 2 * (2 * self.radius + 1)
        if self.x_image.width != w or self.y_image.width != w:
            raise FcaError(f"generator images must live on {2 * self.radius + 1} cells")
        if self.x_image.grades() - {1} or self.y_image.grades() - {1}:
            raise FcaError("generator images must be odd")

    def margolus(self):
        return None

    def generator_images(self):
        return self.x_image, self.y_image


FcaSpec = Union[SchumacherWerner, Forking, Circuit, Shift, MajoranaShift, GeneratorMap]


def is_margolus(spec: FcaSpec) -> bool:
    return spec.margolus() is not None


# ---------------------------------------------------------------------------
# wrapped unitaries


class WrappedUnitary:
    """Step unitary ``W = F_k ... F_1`` of an automaton on a wrapping.

    Factors are kept separately (sparse gates or one dense matrix) so that
    ``W`` can be applied to a block of vectors without ever being formed.
    """

    def __init__(self, lattice_size: int, layout: CellLayout, factors: Sequence, graded: bool = True):
        self.lattice_size = lattice_size
        self.layout = layout
        self.factors = tuple(factors)
        self.graded = graded
        self._adj = None

    @property
    def dim(self) -> int:
        return self.layout.dim

    def apply(self, v: np.ndarray) -> np.ndarray:
        for f in self.factors:
            v = f @ v
        return np.asarray(v)

    def apply_dagger(self, v: np.ndarray) -> np.ndarray:
        if self._adj is None:
            self._adj = tuple(f.conj().T.tocsr() if sp.issparse(f) else f.conj().T for f in reversed(self.factors))
        for f in self._adj:
            v = f @ v
        return np.asarray(v)

    @cached_property
    def U(self) -> np.ndarray:
        return self.apply(np.eye(self.dim, dtype=complex))

    def power(self, n: int) -> "WrappedUnitary":
        if n < 1:
            raise FcaError("power needs n >= 1")
        return WrappedUnitary(self.lattice_size, self.layout, self.factors * n, self.graded)

    def heisenberg(self, o: np.ndarray) -> np.ndarray:
        """Dense ``W^dag O W``."""
        return self.apply_dagger(np.asarray(self.apply_dagger(np.asarray(o))).conj().T).conj().T

    def unitarity_defect(self, probes: int = 3, seed: int = 7) -> float:
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(self.dim, probes)) + 1j * rng.normal(size=(self.dim, probes))
        v /= np.linalg.norm(v, axis=0)
        return float(np.abs(self.apply_dagger(self.apply(v)) - v).max())


def power(u: WrappedUnitary, n: int) -> WrappedUnitary:
    return u.power(n)


def wrap_size_for(spec: FcaSpec | None, steps: int, radius: int | None = None, margolus: bool | None = None) -> int:
    if steps < 1:
        raise FcaError("steps must be >= 1")
    r = radius if radius is not None else getattr(spec, "radius", 1)
    marg = margolus if margolus is not None else (spec is not None and is_margolus(spec))
    bound = 4 * r * steps + 1
    size = steps * math.ceil(bound / steps)
    while marg and size % 2:
        size += steps
    return size


def _sparse_gate(g: GradedOperator, cells: Sequence[int], layout: CellLayout):
    return to_dense(embed(g, cells, layout), layout, sparse=True)


def _margolus_factors(m1: GradedOperator, m2: GradedOperator, size: int, layout: CellLayout):
    f = [_sparse_gate(m1, [2 * x, 2 * x + 1], layout) for x in range(size // 2)]
    f += [_sparse_gate(m2, [2 * x + 1, (2 * x + 2) % size], layout) for x in range(size // 2)]
    return f


def lattice_images(spec: FcaSpec, size: int) -> list[GradedOperator]:
    """Images of X_x, Y_x (interleaved) for every cell of the wrapping."""
    xi, yi = spec.generator_images()
    r = spec.radius
    lay = CellLayout(size)
    out = []
    for x in range(size):
        cells = [(x - r + j) % size for j in range(2 * r + 1)]
        out.append(embed(xi, cells, lay))
        out.append(embed(yi, cells, lay))
    return out


def check_car(images: Sequence[GradedOperator], tol: float = 1e-10) -> float:
    """Largest deviation of {a_i, a_j} from 2 delta_ij over the images."""
    worst = 0.0
    n = len(images)
    for i in range(n):
        for j in range(i, n):
            ac = images[i] * images[j] + images[j] * images[i]
            target = GradedOperator.identity(ac.width, 2.0 if i == j else 0.0)
            worst = max(worst, (ac - target).norm())
    return worst


def synthesize_unitary(images: Sequence[GradedOperator], layout: CellLayout, max_tries: int = 8) -> np.ndarray:
    """Dense ``W`` with ``W^dag gamma_j W = images[j]`` (intertwiner construction).

    With ``alpha`` the automorphism and ``r`` a fiducial vector,
    ``V = sum_k alpha(|k><0|) r <k|`` equals ``<0|W|r> W^dag``.  Columns are
    filled one mode at a time using ``|k> = c^dag_m |k'>``.
    """
    n = layout.n_modes
    dim = layout.dim
    cdag, zs = [], []
    for m in range(n):
        ax = images[2 * m]
        ay = images[2 * m + 1]
        cdag.append(to_dense(0.5 * (ax - 1j * ay), layout, sparse=True))
        zs.append(to_dense(-1j * (ax * ay), layout, sparse=True))
    for attempt in range(max_tries):
        rng = np.random.default_rng(1234 + attempt)
        w = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        for z in zs:
            w = 0.5 * (w + z @ w)
        scale = np.linalg.norm(w)
        if scale > 1e-6:
            break
    else:
        raise FcaError("intertwiner synthesis found no usable fiducial vector")
    v = np.zeros((dim, dim), dtype=complex)
    v[:, 0] = w / scale
    for b in range(n):
        lo = 1 << b
        v[:, lo: 2 * lo] = cdag[n - 1 - b] @ v[:, :lo]
    return v.conj().T


def build_wrapped_unitary(spec: FcaSpec, lattice_size: int, unsafe: bool = False) -> WrappedUnitary:
    size = int(lattice_size)
    if size < 3:
        raise FcaError("wrapping needs at least three cells")
    marg = spec.margolus()
    if marg is not None and size % 2:
        raise FcaError("Margolus circuits need an even lattice size")
    if not unsafe and size < wrap_size_for(spec, 1):
        raise FcaError(f"size {size} is below the regular-wrapping bound {wrap_size_for(spec, 1)}")
    layout = CellLayout(size)
    if marg is not None:
        m1, m2 = marg
        for g in (m1, m2):
            if not is_unitary(g):
                raise FcaError("non-unitary gate in circuit")
        return WrappedUnitary(size, layout, _margolus_factors(m1, m2, size, layout))
    images = lattice_images(spec, size)
    if check_car(images) > 1e-9:
        raise FcaError("generator images violate the canonical anticommutation relations")
    w = synthesize_unitary(images, layout)
    u = WrappedUnitary(size, layout, [w])
    if u.unitarity_defect() > 1e-8:
        raise FcaError("synthesised step operator is not unitary")
    return u


# ---------------------------------------------------------------------------
# transition rule and index


def cell_image(u: WrappedUnitary, op: GradedOperator) -> GradedOperator:
    return from_dense(u.heisenberg(to_dense(op, u.layout)), u.layout, tol=1e-11)


def transition_rule(u: WrappedUnitary, x: int = 1) -> tuple[GradedOperator, GradedOperator]:
    """Images of X_x and Y_x, restricted to the cells x-1, x, x+1."""
    lay = u.layout
    d = lay.modes_per_cell
    if d != 1:
        raise FcaError("transition_rule is implemented for single-mode cells")
    cells = [(x + j) % lay.cells for j in (-1, 0, 1)]
    out = []
    for name in ("X", "Y"):
        img = cell_image(u, cell_op(lay, x, name))
        out.append(restrict(img, lay, cells) if sorted(cells) == cells else img)
    return out[0], out[1]


def _basis_ops(layout: CellLayout, cells: Sequence[int]):
    span = 2 * layout.modes_per_cell * len(cells)
    lo = 2 * layout.modes_per_cell * min(cells)
    return [GradedOperator(layout.width, {m << lo: 1.0}) for m in range(1 << span)]


def algebra_basis(mats: list[np.ndarray], tol: float = 1e-8) -> list[np.ndarray]:
    """Orthonormal basis of the algebra generated by ``mats`` (span closed under products)."""
    if not mats:
        return []
    n = mats[0].shape[0]

    def orth(vecs):
        a = np.array([v.ravel() for v in vecs])
        if not len(a):
            return np.zeros((0, n * n))
        _, s, vh = np.linalg.svd(a, full_matrices=False)
        keep = s > tol * max(1.0, s[0])
        return vh[keep]

    basis = orth(mats)
    while True:
        ms = [b.reshape(n, n) for b in basis]
        prods = [a @ b for a in ms for b in ms]
        new = orth(list(basis) + prods)
        if len(new) == len(basis):
            return [b.reshape(n, n) for b in new]
        basis = new


def _algebra_dim(mats: list[np.ndarray], tol: float = 1e-8) -> int:
    return len(algebra_basis(mats, tol))


def support_algebra_dim(images: Sequence[GradedOperator], layout: CellLayout, side_cells: Sequence[int],
                        region_cells: Sequence[int], tol: float = 1e-8) -> int:
    """Dimension of the graded algebra generated by the ``side_cells`` coefficients.

    Each image is expanded over strings of the rest of the region; the side
    must be a contiguous block at one end of the region.
    """
    side = sorted(side_cells)
    region = sorted(region_cells)
    rest = [c for c in region if c not in side]
    if rest and not (min(side) > max(rest) or max(side) < min(rest)):
        raise FcaError("side cells must sit at one end of the region")
    region_mask = layout.cell_mask(region)
    side_mask = layout.cell_mask(side)
    sub = CellLayout(len(side), layout.modes_per_cell)
    mats = []
    for img in images:
        groups: dict[int, dict[int, complex]] = {}
        for m, c in img.terms.items():
            if abs(c) < tol:
                continue
            if m & ~region_mask:
                raise FcaError("image leaves the declared region")
            groups.setdefault(m & ~side_mask, {})[m & side_mask] = c
        for g in groups.values():
            op = restrict(GradedOperator(layout.width, g), layout, side)
            mats.append(to_dense(op, sub))
    return _algebra_dim(mats, tol)


def _pauli_side_mats(m: np.ndarray, n_modes: int, side: Sequence[int], region: Sequence[int], tol: float):
    side_bits = sum(1 << q for q in side)
    region_bits = sum(1 << q for q in region)
    groups: dict[tuple[int, int], dict] = {}
    for (x, z), c in pauli_decompose(m, tol).items():
        if (x | z) & ~region_bits:
            raise FcaError("image leaves the declared region")
        key = (x & ~side_bits, z & ~side_bits)
        groups.setdefault(key, {})[(x & side_bits, z & side_bits)] = c
    ns = len(side)
    s0 = min(side)
    paulis = {(0, 0): np.eye(2), (1, 0): np.array([[0, 1], [1, 0]]), (0, 1): np.diag([1.0, -1.0]),
              (1, 1): np.array([[0, -1], [1, 0]])}
    out = []
    for g in groups.values():
        acc = np.zeros((1 << ns, 1 << ns), dtype=complex)
        for (x, z), c in g.items():
            mat = np.eye(1)
            for q in range(ns):
                mat = np.kron(mat, paulis[((x >> (s0 + q)) & 1, (z >> (s0 + q)) & 1)])
            acc += c * mat
        out.append(acc)
    return out


def index_from_unitary(w: np.ndarray, layout: CellLayout, graded: bool = True, tol: float = 1e-8) -> float:
    """Index from the right support algebra of T(A_y (x) A_{y+1}) on cells y+1, y+2.

    The pair (y, y+1) is taken with the parity whose images stay inside
    y-1..y+2, which picks the right blocking for Margolus circuits.
    """
    if layout.modes_per_cell != 1:
        raise FcaError("index is implemented for single-mode cells")
    size = layout.cells
    if size < 5:
        raise FcaError("index needs a wrapping of at least five cells")
    wd = np.conj(w).T
    last_err = None
    for y in (1, 2):
        region = [y - 1, y, y + 1, y + 2]
        side = [y + 1, y + 2]
        try:
            if graded:
                imgs = [from_dense(wd @ to_dense(b, layout) @ w, layout, tol=1e-11) for b in _basis_ops(layout, [y, y + 1])]
                dim_r = support_algebra_dim(imgs, layout, side, region, tol)
            else:
                mats = []
                for q in range(16):
                    x, z = q & 3, q >> 2
                    op = _qubit_pauli(size, {y: (x & 1, z & 1), y + 1: (x >> 1, z >> 1)})
                    mats += _pauli_side_mats(wd @ op @ w, size, side, region, tol)
                dim_r = _algebra_dim(mats, tol)
        except FcaError as err:
            last_err = err
            continue
        return math.sqrt(dim_r / 4.0)
    raise FcaError(f"automaton radius exceeds one cell ({last_err})")


def _qubit_pauli(n: int, local: dict[int, tuple[int, int]]) -> np.ndarray:
    paulis = {(0, 0): np.eye(2), (1, 0): np.array([[0, 1], [1, 0]]), (0, 1): np.diag([1.0, -1.0]),
              (1, 1): np.array([[0, -1], [1, 0]])}
    out = np.eye(1)
    for q in range(n):
        out = np.kron(out, paulis[local.get(q, (0, 0))])
    return out


def index(spec: FcaSpec, lattice_size: int | None = None) -> float:
    size = lattice_size or wrap_size_for(spec, 1)
    u = build_wrapped_unitary(spec, size)
    return index_from_unitary(u.U, u.layout)


# ---------------------------------------------------------------------------
# JSON form


def _angle(d: dict, key: str) -> float:
    if key not in d:
        raise FcaError(f"missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise FcaError(f"field {key!r} must be a number of radians, got {v!r}")
    return float(v)


def _cellwise_from(d) -> Cellwise:
    if not isinstance(d, dict) or "kind" not in d:
        raise FcaError("cellwise needs {'kind': 'even_phase'|'odd_rotation', 'theta': ...}")
    return Cellwise(d["kind"], _angle(d, "theta"))


def _gate_from(v) -> GradedOperator:
    from .graded_algebra import parse_operator, parse_scalar

    if isinstance(v, str):
        op, lay = parse_operator(v)
        if lay.cells != 2:
            raise FcaError("circuit gate literals must act on two cells")
        return op
    if isinstance(v, list):
        def entry(e):
            if isinstance(e, str):
                return parse_scalar(e)
            if isinstance(e, list) and len(e) == 2:
                return complex(e[0], e[1])
            return complex(e)

        m = np.array([[entry(e) for e in row] for row in v], dtype=complex)
        if m.shape != (4, 4):
            raise FcaError("dense circuit gates must be 4x4")
        return from_dense(m, _PAIR)
    raise FcaError(f"cannot read gate {v!r}")


def spec_from_json(d: dict) -> FcaSpec:
    from .graded_algebra import parse_operator

    if not isinstance(d, dict):
        raise FcaError("automaton spec must be a JSON object")
    try:
        if "circuit" in d:
            c = d["circuit"]
            return Circuit(_gate_from(c["m1"]), _gate_from(c["m2"]))
        if "generator_map" in d:
            g = d["generator_map"]
            xi, lx = parse_operator(g["X0"])
            yi, ly = parse_operator(g["Y0"])
            if lx.cells != ly.cells or lx.cells % 2 == 0:
                raise FcaError("generator images need an odd number of cells centred on cell 0")
            return GeneratorMap(xi, yi, lx.cells // 2)
        fam = d.get("family")
        if fam == "sw":
            return SchumacherWerner(_angle(d, "phi"), _cellwise_from(d.get("cellwise")))
        if fam == "forking":
            return Forking(_cellwise_from(d.get("cellwise")))
        if fam == "shift":
            return Shift(int(d.get("dir", 1)))
        if fam == "majorana_shift":
            return MajoranaShift(int(d.get("dir", 1)), _angle(d, "theta") if "theta" in d else 0.0)
    except KeyError as err:
        raise FcaError(f"missing field {err}") from None
    except AlgebraError as err:
        raise FcaError(str(err)) from None
    raise FcaError(f"unknown automaton family in {d!r}")


def spec_to_json(spec: FcaSpec) -> dict:
    from .graded_algebra import format_operator

    if isinstance(spec, SchumacherWerner):
        return {"family": "sw", "phi": spec.phi, "cellwise": {"kind": spec.cellwise.kind, "theta": spec.cellwise.theta}}
    if isinstance(spec, Forking):
        return {"family": "forking", "cellwise": {"kind": spec.cellwise.kind, "theta": spec.cellwise.theta}}
    if isinstance(spec, Shift):
        return {"family": "shift", "dir": spec.direction}
    if isinstance(spec, MajoranaShift):
        return {"family": "majorana_shift", "dir": spec.direction, "theta": spec.theta}
    if isinstance(spec, Circuit):
        return {"circuit": {"m1": format_operator(spec.m1), "m2": format_operator(spec.m2)}}
    return {"generator_map": {"X0": format_operator(spec.x_image), "Y0": format_operator(spec.y_image)}}
