"""Z2-graded operator algebra over fermionic modes.

Operators are sparse linear combinations of Majorana strings.  Mode ``m``
carries the generators ``gamma_{2m}`` (X) and ``gamma_{2m+1}`` (Y) and
strings are stored with generators in ascending index order, so the signs
of the graded tensor product come out of plain string multiplication.

The dense picture is the Jordan-Wigner one: mode 0 is the leftmost tensor
factor, ``|0>`` is the empty state and ``Z = diag(1, -1) = -i X Y``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-12
RANK_TOL = 1e-8
MAX_DENSE_MODES = 16

_I_POW = (1.0, 1j, -1.0, -1j)


class AlgebraError(ValueError):
    pass


# ---------------------------------------------------------------------------
# layouts and strings


@dataclass(frozen=True)
class CellLayout:
    """Cells of ``modes_per_cell`` modes laid out contiguously, cell-major."""

    cells: int
    modes_per_cell: int = 1

    def __post_init__(self):
        if self.cells < 0 or self.modes_per_cell < 1:
            raise AlgebraError(f"bad layout {self.cells}x{self.modes_per_cell}")

    @property
    def n_modes(self) -> int:
        return self.cells * self.modes_per_cell

    @property
    def width(self) -> int:
        return 2 * self.n_modes

    @property
    def dim(self) -> int:
        return 1 << self.n_modes

    def mode(self, x: int, k: int = 0) -> int:
        if not (0 <= x < self.cells and 0 <= k < self.modes_per_cell):
            raise AlgebraError(f"cell/mode ({x},{k}) outside layout")
        return x * self.modes_per_cell + k

    def cell_mask(self, cells: Iterable[int]) -> int:
        """Bit mask of all Majorana generators living on ``cells``."""
        d = self.modes_per_cell
        block = (1 << (2 * d)) - 1
        m = 0
        for x in cells:
            m |= block << (2 * d * x)
        return m

    def cells_of(self, mask: int) -> set[int]:
        d2 = 2 * self.modes_per_cell
        out = set()
        while mask:
            low = mask & -mask
            out.add((low.bit_length() - 1) // d2)
            mask ^= low
        return out


@dataclass(frozen=True)
class MajoranaString:
    """``i**phase_exp`` times the ascending product of the generators in ``mask``."""

    width: int
    mask: int
    phase_exp: int = 0

    def __post_init__(self):
        if self.mask >> self.width:
            raise AlgebraError("mask exceeds string width")
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    @property
    def grade(self) -> int:
        return self.mask.bit_count() & 1

    @property
    def generators(self) -> tuple[int, ...]:
        return tuple(_bits(self.mask))


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _merge_sign(a: int, b: int) -> int:
    # transpositions needed to bring gamma_A gamma_B into ascending order
    s = 0
    while b:
        low = b & -b
        j = low.bit_length() - 1
        s += (a >> (j + 1)).bit_count()
        b ^= low
    return s & 1


def mul_strings(a: MajoranaString, b: MajoranaString) -> MajoranaString:
    if a.width != b.width:
        raise AlgebraError(f"width mismatch {a.width} != {b.width}")
    sign = _merge_sign(a.mask, b.mask)
    return MajoranaString(a.width, a.mask ^ b.mask, a.phase_exp + b.phase_exp + 2 * sign)


def _reverse_sign(mask: int) -> float:
    # (g1...gk)^dagger = gk...g1 = (-1)^{k(k-1)/2} g1...gk
    k = mask.bit_count()
    return -1.0 if (k * (k - 1) // 2) & 1 else 1.0


# ---------------------------------------------------------------------------
# operators


class GradedOperator:
    """Sparse complex combination of Majorana strings of a fixed width.

    ``terms`` maps a generator mask to its amplitude; phases of strings are
    folded into the amplitudes.  Instances are treated as immutable.
    """

    __slots__ = ("width", "terms")

    def __init__(self, width: int, terms: Mapping[int, complex] | None = None, prune: float = PRUNE_TOL):
        self.width = int(width)
        clean = {}
        if terms:
            for m, c in terms.items():
                c = complex(c)
                if abs(c) > prune:
                    if m >> self.width:
                        raise AlgebraError("mask exceeds operator width")
                    clean[int(m)] = c
        self.terms = clean

    # constructors
    @classmethod
    def identity(cls, width: int, scale: complex = 1.0) -> "GradedOperator":
        return cls(width, {0: scale})

    @classmethod
    def zero(cls, width: int) -> "GradedOperator":
        return cls(width)

    @classmethod
    def majorana(cls, width: int, j: int) -> "GradedOperator":
        if not 0 <= j < width:
            raise AlgebraError(f"generator {j} outside width {width}")
        return cls(width, {1 << j: 1.0})

    @classmethod
    def from_string(cls, s: MajoranaString, amplitude: complex = 1.0) -> "GradedOperator":
        return cls(s.width, {s.mask: amplitude * _I_POW[s.phase_exp]})

    # algebra
    def _check(self, other: "GradedOperator"):
        if self.width != other.width:
            raise AlgebraError(f"width mismatch {self.width} != {other.width}")

    def __add__(self, other):
        if not isinstance(other, GradedOperator):
            other = GradedOperator.identity(self.width, other)
        self._check(other)
        t = dict(self.terms)
        for m, c in other.terms.items():
            t[m] = t.get(m, 0.0) + c
        return GradedOperator(self.width, t)

    __radd__ = __add__

    def __neg__(self):
        return GradedOperator(self.width, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, GradedOperator):
            return op_mul(self, other)
        return GradedOperator(self.width, {m: c * other for m, c in self.terms.items()})

    def __rmul__(self, other):
        return GradedOperator(self.width, {m: other * c for m, c in self.terms.items()})

    def __truediv__(self, other):
        return self * (1.0 / other)

    def __pow__(self, n: int):
        out = GradedOperator.identity(self.width)
        for _ in range(n):
            out = out * self
        return out

    def dagger(self) -> "GradedOperator":
        return GradedOperator(self.width, {m: c.conjugate() * _reverse_sign(m) for m, c in self.terms.items()})

    def norm(self) -> float:
        """Normalised Hilbert-Schmidt norm, sqrt(tr(O^dag O)/dim)."""
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.terms.values())))

    def inner(self, other: "GradedOperator") -> complex:
        """Normalised Hilbert-Schmidt inner product tr(A^dag B)/dim."""
        self._check(other)
        return sum(c.conjugate() * other.terms.get(m, 0.0) for m, c in self.terms.items())

    def distance(self, other: "GradedOperator") -> float:
        return (self - other).norm()

    def grades(self) -> set[int]:
        return {m.bit_count() & 1 for m in self.terms}

    def is_zero(self, tol: float = 1e-10) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def strings(self) -> list[MajoranaString]:
        return [MajoranaString(self.width, m) for m in sorted(self.terms)]

    def pruned(self, tol: float) -> "GradedOperator":
        return GradedOperator(self.width, self.terms, prune=tol)

    def support_cells(self, layout: CellLayout) -> set[int]:
        out: set[int] = set()
        for m in self.terms:
            out |= layout.cells_of(m)
        return out

    def __repr__(self):
        if not self.terms:
            return f"GradedOperator(width={self.width}, 0)"
        body = " + ".join(f"{c:.6g}*g{list(_bits(m))}" for m, c in sorted(self.terms.items()))
        return f"GradedOperator(width={self.width}, {body})"


def op_mul(a: GradedOperator, b: GradedOperator) -> GradedOperator:
    a._check(b)
    out: dict[int, complex] = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            m = ma ^ mb
            c = ca * cb
            if _merge_sign(ma, mb):
                c = -c
            out[m] = out.get(m, 0.0) + c
    return GradedOperator(a.width, out)


def parity_of(o: GradedOperator) -> int:
    g = o.grades()
    if len(g) > 1:
        even = [list(_bits(m)) for m in o.terms if not m.bit_count() & 1][:3]
        odd = [list(_bits(m)) for m in o.terms if m.bit_count() & 1][:3]
        raise AlgebraError(f"mixed parity operator: even strings {even}, odd strings {odd}")
    return g.pop() if g else 0


def op_graded_commutator(a: GradedOperator, b: GradedOperator) -> GradedOperator:
    ga, gb = parity_of(a), parity_of(b)
    sign = -1.0 if (ga & gb) else 1.0
    return a * b - sign * (b * a)


def tracial_state(o: GradedOperator) -> complex:
    return o.terms.get(0, 0.0)


# ---------------------------------------------------------------------------
# cell-level helpers


def cell_op(layout: CellLayout, x: int, name: str, k: int = 0) -> GradedOperator:
    """Single-mode operator I, X, Y, Z or the projectors P0, P1 on (x, k)."""
    m = layout.mode(x, k)
    w = layout.width
    if name == "I":
        return GradedOperator.identity(w)
    if name == "X":
        return GradedOperator(w, {1 << (2 * m): 1.0})
    if name == "Y":
        return GradedOperator(w, {1 << (2 * m + 1): 1.0})
    z = GradedOperator(w, {3 << (2 * m): -1j})
    if name == "Z":
        return z
    if name == "P0":
        return 0.5 * (GradedOperator.identity(w) + z)
    if name == "P1":
        return 0.5 * (GradedOperator.identity(w) - z)
    raise AlgebraError(f"unknown single-mode operator {name!r}")


def product_op(layout: CellLayout, names: Sequence[str]) -> GradedOperator:
    """Ordered graded product of one named operator per cell (d = 1)."""
    if len(names) != layout.cells:
        raise AlgebraError("need one operator name per cell")
    out = GradedOperator.identity(layout.width)
    for x, n in enumerate(names):
        if n != "I":
            out = out * cell_op(layout, x, n)
    return out


def parity_operator(layout: CellLayout, cells: Iterable[int] | None = None) -> GradedOperator:
    cells = range(layout.cells) if cells is None else cells
    out = GradedOperator.identity(layout.width)
    for x in cells:
        for k in range(layout.modes_per_cell):
            out = out * cell_op(layout, x, "Z", k)
    return out


def embed(o: GradedOperator, source_cells: Sequence[int], target_layout: CellLayout) -> GradedOperator:
    """Place an operator living on ``len(source_cells)`` cells onto the given cells.

    The i-th cell of ``o`` goes to ``source_cells[i]``.  Strings are re-sorted
    into the target's ascending order, which produces the graded signs.
    """
    d = target_layout.modes_per_cell
    n_src = len(source_cells)
    if o.width != 2 * d * n_src:
        raise AlgebraError(f"operator width {o.width} does not match {n_src} cells of {d} modes")
    if len(set(source_cells)) != n_src:
        raise AlgebraError("overlapping target cells")
    for x in source_cells:
        if not 0 <= x < target_layout.cells:
            raise AlgebraError(f"cell {x} outside target layout")
    idx = []
    for j in range(o.width):
        m = j >> 1
        tm = source_cells[m // d] * d + (m % d)
        idx.append(2 * tm + (j & 1))
    out: dict[int, complex] = {}
    for mask, c in o.terms.items():
        lst = [idx[j] for j in _bits(mask)]
        inv = 0
        for i in range(len(lst)):
            for k in range(i + 1, len(lst)):
                if lst[i] > lst[k]:
                    inv += 1
        nm = 0
        for t in lst:
            nm |= 1 << t
        out[nm] = out.get(nm, 0.0) + (-c if inv & 1 else c)
    return GradedOperator(target_layout.width, out)


def restrict(o: GradedOperator, layout: CellLayout, cells: Sequence[int]) -> GradedOperator:
    """Inverse of ``embed`` for an operator supported on ``cells``."""
    d = layout.modes_per_cell
    sub = CellLayout(len(cells), d)
    back = {}
    for i, x in enumerate(cells):
        for k in range(d):
            back[2 * layout.mode(x, k)] = 2 * (i * d + k)
            back[2 * layout.mode(x, k) + 1] = 2 * (i * d + k) + 1
    out: dict[int, complex] = {}
    for mask, c in o.terms.items():
        lst = []
        for j in _bits(mask):
            if j not in back:
                raise AlgebraError(f"operator has support outside cells {list(cells)}")
            lst.append(back[j])
        inv = sum(1 for i in range(len(lst)) for k in range(i + 1, len(lst)) if lst[i] > lst[k])
        nm = 0
        for t in lst:
            nm |= 1 << t
        out[nm] = out.get(nm, 0.0) + (-c if inv & 1 else c)
    return GradedOperator(sub.width, out)


# ---------------------------------------------------------------------------
# dense conversion
#
# Pauli words are written i^ph X^x Z^z with bit m of x, z referring to mode m.


def _string_pauli(mask: int) -> tuple[int, int, int]:
    x = z = ph = 0
    for j in _bits(mask):
        m = j >> 1
        gx = 1 << m
        gz = (1 << m) - 1
        gph = 0
        if j & 1:
            gz |= 1 << m
            gph = 1
        ph += gph + 2 * (z & gx).bit_count()
        x ^= gx
        z ^= gz
    return x, z, ph % 4


def _pauli_string(x: int, z: int, n_modes: int) -> tuple[int, int]:
    """Majorana mask and phase exponent ph with X^x Z^z = i^{-ph} gamma_mask."""
    mask = 0
    s = 0
    for m in range(n_modes - 1, -1, -1):
        lx = (x >> m) & 1
        lz = ((z >> m) & 1) ^ s
        if lx and not lz:
            mask |= 1 << (2 * m)
        elif lx and lz:
            mask |= 1 << (2 * m + 1)
        elif lz:
            mask |= 3 << (2 * m)
        s ^= lx
    _, _, ph = _string_pauli(mask)
    return mask, ph


def _bitrev(v: int, n: int) -> int:
    out = 0
    for m in range(n):
        if (v >> m) & 1:
            out |= 1 << (n - 1 - m)
    return out


def _pauli_columns(x: int, z: int, ph: int, n: int):
    """Rows and values of X^x Z^z i^ph acting on the basis index vector."""
    xr, zr = _bitrev(x, n), _bitrev(z, n)
    idx = np.arange(1 << n, dtype=np.int64)
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & zr) & 1)
    return idx ^ xr, _I_POW[ph] * signs


def _check_modes(n: int, cap: int):
    if n > cap:
        raise AlgebraError(f"{n} modes exceed the dense cap of {cap}")


def to_dense(o: GradedOperator, layout: CellLayout | None = None, sparse: bool = False, cap: int = MAX_DENSE_MODES):
    n = (layout.n_modes if layout is not None else o.width // 2)
    if 2 * n != o.width:
        raise AlgebraError("layout does not match operator width")
    _check_modes(n, cap)
    dim = 1 << n
    cols = np.arange(dim, dtype=np.int64)
    if sparse:
        rr, cc, vv = [], [], []
        for mask, c in o.terms.items():
            x, z, ph = _string_pauli(mask)
            rows, vals = _pauli_columns(x, z, ph, n)
            rr.append(rows)
            cc.append(cols)
            vv.append(c * vals)
        if not rr:
            return sp.csr_matrix((dim, dim), dtype=complex)
        m = sp.coo_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))), shape=(dim, dim))
        return m.tocsr()
    out = np.zeros((dim, dim), dtype=complex)
    for mask, c in o.terms.items():
        x, z, ph = _string_pauli(mask)
        rows, vals = _pauli_columns(x, z, ph, n)
        out[rows, cols] += c * vals
    return out


def _wht(v: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform along the last axis (natural ordering)."""
    v = np.array(v, dtype=complex, copy=True)
    n = v.shape[-1]
    lead = v.shape[:-1]
    h = 1
    while h < n:
        v = v.reshape(*lead, n // (2 * h), 2, h)
        a = v[..., 0, :]
        b = v[..., 1, :]
        v = np.stack((a + b, a - b), axis=-2)
        h *= 2
    return v.reshape(*lead, n)


def pauli_decompose(m: np.ndarray, tol: float = PRUNE_TOL) -> dict[tuple[int, int], complex]:
    """Coefficients c with m = sum c[(x, z)] X^x Z^z, mode-bit masks."""
    m = np.asarray(m)
    dim = m.shape[0]
    n = dim.bit_length() - 1
    if m.shape != (dim, dim) or (1 << n) != dim:
        raise AlgebraError("matrix is not square of power-of-two size")
    idx = np.arange(dim, dtype=np.int64)
    v = m[idx[None, :] ^ idx[:, None], idx[None, :]]
    coef = _wht(v) / dim
    out = {}
    for xr, zr in zip(*np.nonzero(np.abs(coef) > tol)):
        out[(_bitrev(int(xr), n), _bitrev(int(zr), n))] = complex(coef[xr, zr])
    return out


def from_dense(m, layout: CellLayout | None = None, tol: float = PRUNE_TOL) -> GradedOperator:
    if sp.issparse(m):
        m = m.toarray()
    m = np.asarray(m, dtype=complex)
    n = m.shape[0].bit_length() - 1
    if layout is not None and layout.n_modes != n:
        raise AlgebraError("matrix size does not match layout")
    out: dict[int, complex] = {}
    for (x, z), c in pauli_decompose(m, tol).items():
        mask, ph = _pauli_string(x, z, n)
        out[mask] = c * _I_POW[(-ph) % 4]
    return GradedOperator(2 * n, out, prune=tol)


# ---------------------------------------------------------------------------
# operator Schmidt decomposition


@dataclass(frozen=True)
class SchmidtDecomposition:
    """``op = sum_mu weight_mu * (left_mu on left block) (right_mu on right block)``."""

    left_cells: tuple[int, ...]
    right_cells: tuple[int, ...]
    modes_per_cell: int
    pairs: tuple[tuple[GradedOperator, GradedOperator, float], ...]

    @property
    def rank(self) -> int:
        return len(self.pairs)

    @property
    def weights(self) -> list[float]:
        return [w for _, _, w in self.pairs]

    @property
    def layout(self) -> CellLayout:
        return CellLayout(len(self.left_cells) + len(self.right_cells), self.modes_per_cell)

    def reconstruct(self) -> GradedOperator:
        lay = self.layout
        nl = len(self.left_cells)
        out = GradedOperator.zero(lay.width)
        for lam, rho, w in self.pairs:
            out = out + w * (embed(lam, range(nl), lay) * embed(rho, range(nl, lay.cells), lay))
        return out


def _split_cut(layout: CellLayout, cut) -> int:
    if isinstance(cut, int):
        k = cut
    else:
        cells = sorted(cut)
        k = len(cells)
        if cells != list(range(k)):
            raise AlgebraError("cut must be a contiguous leading block of cells")
    if not 0 < k < layout.cells:
        raise AlgebraError(f"cut {k} does not split {layout.cells} cells")
    return k


def bipartite_coefficients(o: GradedOperator, layout: CellLayout, k: int):
    """Coefficient matrix C[left string, right string] across the cut after cell k-1."""
    shift = 2 * layout.modes_per_cell * k
    low = (1 << shift) - 1
    lefts: dict[int, int] = {}
    rights: dict[int, int] = {}
    entries = []
    for mask, c in o.terms.items():
        lm, rm = mask & low, mask >> shift
        i = lefts.setdefault(lm, len(lefts))
        j = rights.setdefault(rm, len(rights))
        entries.append((i, j, c))
    mat = np.zeros((len(lefts), len(rights)), dtype=complex)
    for i, j, c in entries:
        mat[i, j] += c
    return list(lefts), list(rights), mat


def operator_schmidt(p: GradedOperator, cut, layout: CellLayout | None = None, tol: float = RANK_TOL) -> SchmidtDecomposition:
    layout = layout or CellLayout(p.width // 2)
    if parity_of(p) != 0:
        raise AlgebraError("operator Schmidt decomposition needs an even operator")
    k = _split_cut(layout, cut)
    d = layout.modes_per_cell
    wl = 2 * d * k
    wr = layout.width - wl
    lefts, rights, mat = bipartite_coefficients(p, layout, k)
    pairs = []
    if mat.size:
        smax = np.linalg.norm(mat, 2)
        for g in (0, 1):
            li = [i for i, m in enumerate(lefts) if (m.bit_count() & 1) == g]
            ri = [j for j, m in enumerate(rights) if (m.bit_count() & 1) == g]
            if not li or not ri:
                continue
            block = mat[np.ix_(li, ri)]
            u, s, vh = np.linalg.svd(block, full_matrices=False)
            for a in range(len(s)):
                if s[a] <= tol * smax:
                    continue
                lam = GradedOperator(wl, {lefts[li[r]]: u[r, a] for r in range(len(li))})
                rho = GradedOperator(wr, {rights[ri[c]]: vh[a, c] for c in range(len(ri))})
                lam, rho = _gauge(lam, rho)
                pairs.append((lam, rho, float(s[a])))
    pairs.sort(key=lambda t: -t[2])
    return SchmidtDecomposition(tuple(range(k)), tuple(range(k, layout.cells)), d, tuple(pairs))


def _gauge(lam: GradedOperator, rho: GradedOperator):
    # dominant amplitude of the left factor real positive, phase moved right
    m, c = max(lam.terms.items(), key=lambda t: (round(abs(t[1]), 9), -t[0]))
    ph = c / abs(c)
    return lam * ph.conjugate(), rho * ph


def schmidt_rank(o: GradedOperator, cut, layout: CellLayout | None = None, tol: float = RANK_TOL) -> int:
    layout = layout or CellLayout(o.width // 2)
    k = _split_cut(layout, cut)
    _, _, mat = bipartite_coefficients(o, layout, k)
    if not mat.size:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(s > tol * s[0]))


# ---------------------------------------------------------------------------
# operator literals:  "0.5*I@I + 0.5*Z@Z",  "(0.5+0.5i)*X@Y",  "i*X@X"

_TOKENS = ("I", "X", "Y", "Z", "P0", "P1")


def _split_terms(text: str) -> list[str]:
    terms, depth, cur = [], 0, ""
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in "+-" and depth == 0 and cur.strip():
            prev = cur.rstrip()
            if not (prev[-1] in "eE" and len(prev) > 1 and (prev[-2].isdigit() or prev[-2] == ".")) and prev[-1] != "*":
                terms.append(cur)
                cur = ch
                continue
        cur += ch
    if depth != 0:
        raise AlgebraError(f"unbalanced parentheses in {text!r}")
    if cur.strip():
        terms.append(cur)
    return terms


def parse_scalar(s: str) -> complex:
    t = s.strip().replace(" ", "")
    if t.startswith("(") and t.endswith(")"):
        t = t[1:-1]
    if t in ("", "+"):
        return 1.0
    if t == "-":
        return -1.0
    t = re.sub(r"(?<![0-9.])i", "1i", t)
    try:
        return complex(t.replace("i", "j"))
    except ValueError:
        raise AlgebraError(f"bad scalar {s!r}") from None


def parse_operator(text: str) -> tuple[GradedOperator, CellLayout]:
    """Parse an operator literal with one token per single-mode cell.

    Tokens are I, X, Y, Z, P0 = |0><0| and P1 = |1><1|; ``@`` separates cells
    and complex scalars are written ``a+bi`` (parenthesised when both parts
    are present).
    """
    if not text or not text.strip():
        raise AlgebraError("empty operator literal")
    parsed = []
    for term in _split_terms(text):
        term = term.strip()
        if "*" in term:
            coef_s, prod = term.rsplit("*", 1)
            coef = parse_scalar(coef_s)
        else:
            sign = -1.0 if term.startswith("-") else 1.0
            prod = term.lstrip("+-").strip()
            coef = sign
        names = [t.strip() for t in prod.split("@")]
        for nm in names:
            if nm not in _TOKENS:
                raise AlgebraError(f"unknown token {nm!r} in {text!r}")
        parsed.append((coef, names))
    ncell = {len(n) for _, n in parsed}
    if len(ncell) != 1:
        raise AlgebraError(f"terms of {text!r} act on different numbers of cells")
    layout = CellLayout(ncell.pop())
    out = GradedOperator.zero(layout.width)
    for coef, names in parsed:
        out = out + coef * product_op(layout, names)
    return out, layout


def _fmt_scalar(c: complex) -> str:
    re_, im = c.real, c.imag
    if abs(im) < 1e-15:
        return f"{re_:.12g}"
    if abs(re_) < 1e-15:
        return f"{im:.12g}i"
    return f"({re_:.12g}{im:+.12g}i)"


def format_operator(o: GradedOperator, layout: CellLayout | None = None) -> str:
    """Render an operator on single-mode cells as a literal ``parse_operator`` reads."""
    layout = layout or CellLayout(o.width // 2)
    if layout.modes_per_cell != 1:
        raise AlgebraError("literals are defined for single-mode cells only")
    if not o.terms:
        return "0*" + "@".join("I" * layout.cells)
    parts = []
    for mask in sorted(o.terms, key=lambda m: (m.bit_count(), m)):
        c = o.terms[mask]
        names = []
        for x in range(layout.cells):
            b = (mask >> (2 * x)) & 3
            if b == 3:
                # gamma_{2x} gamma_{2x+1} = i Z_x
                c *= 1j
            names.append("IXYZ"[b])
        parts.append(f"{_fmt_scalar(c)}*{'@'.join(names)}")
    return " + ".join(parts)
