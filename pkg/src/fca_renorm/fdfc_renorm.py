"""Two-step renormalisation of Margolus circuits through the composite gate G.

For a one-cell translation invariant Margolus circuit with layers ``m1`` (on
the tiles) and ``m2`` (between tiles),

    m1_tiles . W^2 . m1_tiles^dag  =  G_tiles . G_between,     G = m1 m2,

so ``[W^2, Pi] = 0`` iff ``G_tiles G_between`` commutes with the tiled
``P = m1 Pi m1^dag``.  Since ``G`` conjugates ``rho_mu (x) lambda_nu`` across
each tile boundary, this happens exactly when every such product is mapped to
a product ``rho~_mu (x) lambda~_nu`` with the new factors reassembling
``G^dag P G``.  All conjugations here are Schroedinger-side: ``O -> G O G^dag``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .graded_algebra import (
    CellLayout,
    GradedOperator,
    SchmidtDecomposition,
    cell_op,
    from_dense,
    operator_schmidt,
    parity_of,
    to_dense,
)
from .lattice_fca import (
    Circuit,
    WrappedUnitary,
    _sparse_gate,
    algebra_basis,
    build_wrapped_unitary,
    gate_fermionic_swap,
    is_unitary,
    pair_of,
)
from .renorm import TileProjection, check_renormalisable, clean_json

PAIR = CellLayout(2)
CELL = CellLayout(1)
FACTOR_TOL = 1e-8
VALIDATION_SIZE = 10


class FdfcError(ValueError):
    pass


def _phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """``min_chi max|e^{i chi} a - b|``."""
    t = np.vdot(a, b)
    if abs(t) < 1e-12:
        return float(np.abs(a - b).max() + np.abs(a).max())
    return float(np.abs(a * (t / abs(t)) - b).max())


def _ring_layer(g: GradedOperator, offset: int, size: int, lay: CellLayout) -> list:
    return [_sparse_gate(g, [(2 * x + offset) % size, (2 * x + 1 + offset) % size], lay) for x in range(size // 2)]


def _apply_all(factors, v):
    for f in factors:
        v = f @ v
    return v


# ---------------------------------------------------------------------------
# G gate


@dataclass(frozen=True, eq=False)
class GGate:
    G: GradedOperator
    m1: GradedOperator
    m2: GradedOperator

    @property
    def dense(self) -> np.ndarray:
        return to_dense(self.G, PAIR)

    def conj(self, o: GradedOperator) -> GradedOperator:
        return self.G * o * self.G.dagger()

    def conj_dagger(self, o: GradedOperator) -> GradedOperator:
        return self.G.dagger() * o * self.G

    def tiled(self, size: int) -> WrappedUnitary:
        """``G_tiles . G_between`` on a wrapping (between-tile layer applied first)."""
        lay = CellLayout(size)
        return WrappedUnitary(size, lay, _ring_layer(self.G, 1, size, lay) + _ring_layer(self.G, 0, size, lay))


def build_G(m1: GradedOperator, m2: GradedOperator, validate: bool = True) -> GGate:
    for g in (m1, m2):
        if g.width != PAIR.width:
            raise FdfcError("layers must be two-cell gates on single-mode cells")
        if parity_of(g) != 0:
            raise FdfcError("layers must be even")
        if not is_unitary(g):
            raise FdfcError("non-unitary layer")
    gg = GGate(m1 * m2, m1, m2)
    if validate:
        size = VALIDATION_SIZE
        lay = CellLayout(size)
        w = build_wrapped_unitary(Circuit(m1, m2), size)
        a = _ring_layer(m1, 0, size, lay)
        probe = np.eye(lay.dim, dtype=complex)
        lhs = _apply_all(a, w.power(2).apply(probe))
        lhs = _apply_all(a, lhs.conj().T).conj().T  # A W^2 A^dag
        rhs = gg.tiled(size).U
        d = _phase_distance(rhs, lhs)
        if d > 1e-8:
            raise FdfcError(f"two-step evolution does not regroup into G layers (defect {d:.3g}); "
                            "the circuit is not one-cell translation invariant")
    return gg


def tile_projection_from_pi(pi: TileProjection, m1: GradedOperator, m2: GradedOperator | None = None,
                            name: str | None = None) -> TileProjection:
    """``P = m1 Pi m1^dag``; with ``m2`` given, the orientation is checked on a wrapping."""
    if pi.tile_size != 2 or pi.modes_per_cell != 1:
        raise FdfcError("tile projection must live on two single-mode cells")
    p = pi.conjugated(m1, name)
    if m2 is not None:
        size = VALIDATION_SIZE
        w = build_wrapped_unitary(Circuit(m1, m2), size)
        direct = check_renormalisable(w, pi, 2)
        via_g = check_renormalisable(build_G(m1, m2, validate=False).tiled(size), p, 1)
        if abs(direct.residual - via_g.residual) > 1e-8:
            raise FdfcError(f"projection orientation check failed ({direct.residual:.3g} vs {via_g.residual:.3g})")
    return p


# ---------------------------------------------------------------------------
# factorisation criterion


def _coef(o: GradedOperator) -> np.ndarray:
    """``C[l, r]`` with ``o = sum C[l, r] g^l (x) g^r`` over single-cell strings."""
    c = np.zeros((4, 4), dtype=complex)
    for m, v in o.terms.items():
        c[m & 3, m >> 2] += v
    return c


def _cell(v: np.ndarray) -> GradedOperator:
    return GradedOperator(2, {m: complex(v[m]) for m in range(4) if abs(v[m]) > 1e-14})


def _pair(left: np.ndarray, right: np.ndarray) -> GradedOperator:
    c = np.outer(left, right)
    return GradedOperator(4, {l | (r << 2): complex(c[l, r]) for l in range(4) for r in range(4) if abs(c[l, r]) > 1e-14})


def _rank(c: np.ndarray, tol: float = FACTOR_TOL) -> int:
    s = np.linalg.svd(c, compute_uv=False)
    if s[0] < 1e-14:
        return 0
    return int(np.sum(s > tol * s[0]))


def _factor(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Leading singular pair of a rank-one coefficient matrix, left dominant entry real positive."""
    u, s, vh = np.linalg.svd(c)
    a = u[:, 0]
    j = int(np.argmax(np.round(np.abs(a), 9)))
    ph = a[j] / abs(a[j])
    return a / ph, s[0] * vh[0] * ph


@dataclass
class FactorisationReport:
    satisfied: bool
    schmidt_in: SchmidtDecomposition
    schmidt_out: SchmidtDecomposition
    pair_ranks: np.ndarray
    rho_tilde: list[GradedOperator] | None
    lambda_tilde: list[GradedOperator] | None
    consistency: bool
    consistency_residual: float
    reconstruction_residual: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return clean_json({
            "satisfied": self.satisfied,
            "schmidt_rank_in": self.schmidt_in.rank,
            "schmidt_rank_out": self.schmidt_out.rank,
            "pair_ranks": self.pair_ranks.tolist(),
            "consistency": self.consistency,
            "consistency_residual": self.consistency_residual,
            "reconstruction_residual": self.reconstruction_residual,
        })


def _as_op(p) -> GradedOperator:
    return p.P if isinstance(p, TileProjection) else p


def check_factorisation(g: GGate, p: TileProjection | GradedOperator) -> FactorisationReport:
    op = _as_op(p)
    if parity_of(op) != 0:
        raise FdfcError("tile projection must be even")
    sin = operator_schmidt(op, 1, PAIR)
    sout = operator_schmidt(g.conj_dagger(op), 1, PAIR)
    n = sin.rank
    lam = [_coef(l)[:, 0] for l, _, _ in sin.pairs]  # cell-0 factors as 4-vectors
    rho = [_coef(r)[:, 0] for _, r, _ in sin.pairs]
    w = sin.weights
    images = [[_coef(g.conj(_pair(rho[m], lam[v]))) for v in range(n)] for m in range(n)]
    ranks = np.array([[_rank(images[m][v]) for v in range(n)] for m in range(n)])
    report_kw = dict(schmidt_in=sin, schmidt_out=sout, pair_ranks=ranks)
    if n == 0 or np.any(ranks != 1):
        return FactorisationReport(False, rho_tilde=None, lambda_tilde=None, consistency=False,
                                   consistency_residual=float("nan"), reconstruction_residual=float("nan"), **report_kw)
    a0, b0 = _factor(images[0][0])
    rt = [images[m][0] @ b0.conj() / np.vdot(b0, b0) for m in range(n)]
    lt = [a0.conj() @ images[0][v] / np.vdot(a0, a0) for v in range(n)]
    cres = max(float(np.abs(images[m][v] - np.outer(rt[m], lt[v])).max()) for m in range(n) for v in range(n))
    target = _coef(g.conj_dagger(op))
    recon = sum(w[m] * np.outer(lt[m], rt[m]) for m in range(n))
    rres = float(np.abs(recon - target).max())
    ok = cres < FACTOR_TOL
    return FactorisationReport(ok and rres < FACTOR_TOL, rho_tilde=[_cell(v) for v in rt], lambda_tilde=[_cell(v) for v in lt],
                               consistency=ok, consistency_residual=cres, reconstruction_residual=rres, **report_kw)


def _cell_mats(ops) -> list[np.ndarray]:
    return [to_dense(o, CELL) for o in ops]


def support_algebra_factor_test(g: GGate, p: TileProjection | GradedOperator) -> dict:
    """Dimensions of the factor algebras and whether ``G`` maps ``M (x) N`` to products.

    ``M`` is generated by the right Schmidt factors of ``P`` (they sit on the
    left cell of the boundary pair) and ``N`` by the left ones.
    """
    op = _as_op(p)
    sin = operator_schmidt(op, 1, PAIR)
    m_basis = algebra_basis(_cell_mats(r for _, r, _ in sin.pairs))
    n_basis = algebra_basis(_cell_mats(l for l, _, _ in sin.pairs))
    preserved = True
    lefts, rights = [], []
    for a in m_basis:
        for b in n_basis:
            ca = _coef(from_dense(a, CELL))[:, 0]
            cb = _coef(from_dense(b, CELL))[:, 0]
            img = _coef(g.conj(_pair(ca, cb)))
            u, s, vh = np.linalg.svd(img)
            k = int(np.sum(s > FACTOR_TOL * s[0]))
            preserved &= k <= 1
            lefts += [u[:, i] for i in range(k)]
            rights += [vh[i] for i in range(k)]
    mt = algebra_basis(_cell_mats(_cell(v) for v in lefts))
    nt = algebra_basis(_cell_mats(_cell(v) for v in rights))
    return {"dim_M": len(m_basis), "dim_N": len(n_basis), "dim_M_tilde": len(mt), "dim_N_tilde": len(nt),
            "preserved": bool(preserved)}


# ---------------------------------------------------------------------------
# factorisation-preserving two-cell gates


def _random_homogeneous(rng, parity: int) -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    idx = [0, 3] if parity == 0 else [1, 2]
    v[idx] = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v


def preserves_factorisation(f: GradedOperator, samples: int = 24, seed: int = 11) -> bool:
    """Whether conjugation by ``f`` sends products ``A (x) B`` to products."""
    rng = np.random.default_rng(seed)
    probes = [(np.eye(4)[i], np.eye(4)[j]) for i in range(4) for j in range(4)]
    for s in range(samples):
        probes.append((_random_homogeneous(rng, s & 1), _random_homogeneous(rng, (s >> 1) & 1)))
    for a, b in probes:
        if _rank(_coef(f * _pair(a, b) * f.dagger())) > 1:
            return False
    return True


@dataclass
class FactorPreservingForm:
    """``F = e^{i gamma} S^swap (U1 (x) U2) C`` with ``C = |a><a| (x) I + |1-a><1-a| (x) e^{i nu} Z^n``."""

    swap: int
    u1: GradedOperator
    u2: GradedOperator
    nu: float
    n: int
    a: int
    phase: float
    residual: float


def _cell_unitary(odd: int, alpha: float) -> GradedOperator:
    ph = math.cos(alpha) * GradedOperator.identity(2) + 1j * math.sin(alpha) * cell_op(CELL, 0, "Z")
    return cell_op(CELL, 0, "X") * ph if odd else ph


def control_gate(a: int, nu: float, n: int) -> GradedOperator:
    pa = cell_op(PAIR, 0, "P0" if a == 0 else "P1")
    pb = cell_op(PAIR, 0, "P1" if a == 0 else "P0")
    tail = GradedOperator.identity(4) if n == 0 else cell_op(PAIR, 1, "Z")
    return pa + np.exp(1j * nu) * (pb * tail)


def _model(swap: int, k1: int, k2: int, a: int, n: int, x) -> GradedOperator:
    al1, al2, nu, gam = x
    f = pair_of(_cell_unitary(k1, al1), _cell_unitary(k2, al2)) * control_gate(a, nu, n)
    if swap:
        f = gate_fermionic_swap() * f
    return np.exp(1j * gam) * f


def classify_factor_preserving(f: GradedOperator) -> FactorPreservingForm | None:
    if f.width != PAIR.width or parity_of(f) != 0 or not is_unitary(f):
        raise FdfcError("classification needs an even unitary on two single-mode cells")
    if not preserves_factorisation(f):
        return None
    target = to_dense(f, PAIR)
    s = gate_fermionic_swap()
    for swap in (0, 1):
        fb = to_dense(s.dagger() * f, PAIR) if swap else target
        col = np.abs(fb[:, 0])
        if np.sum(col > 1e-8) != 1:
            continue
        flip = int(np.argmax(col))  # |00> -> |flip>; bit 1 is cell 0
        k1, k2 = flip >> 1, flip & 1
        for n in (0, 1):
            for a in (0, 1):
                def resid(x):
                    d = to_dense(_model(swap, k1, k2, a, n, x), PAIR) - target
                    return np.concatenate([d.real.ravel(), d.imag.ravel()])

                rng = np.random.default_rng(5)
                starts = [np.zeros(4)] + [rng.uniform(-math.pi, math.pi, 4) for _ in range(6)]
                for x0 in starts:
                    sol = least_squares(resid, x0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
                    r = float(np.abs(resid(sol.x)).max())
                    if r < 1e-8:
                        al1, al2, nu, gam = sol.x
                        return FactorPreservingForm(swap, _cell_unitary(k1, al1), _cell_unitary(k2, al2),
                                                    float(nu % (2 * math.pi)) if n else 0.0, n, a, float(gam % (2 * math.pi)), r)
    raise FdfcError("gate preserves factorisation but matched no normal form")


# ---------------------------------------------------------------------------
# shift renormalisations


@dataclass
class ShiftRenorm:
    """``G = (U (x) V) S`` with ``S`` the fermionic swap."""

    u: GradedOperator
    v: GradedOperator
    valid_projections: list[str]


def detect_shift_renorm(g: GGate) -> ShiftRenorm | None:
    h = g.G * gate_fermionic_swap().dagger()
    c = _coef(h)
    if _rank(c) != 1:
        return None
    a, b = _factor(c)
    u, v = _cell(a), _cell(b)
    scale = u.norm()
    u, v = (1.0 / scale) * u, scale * v
    valid = []
    for side in ("L", "R"):
        for cc in (0, 1):
            proj = cell_op(PAIR, 1 if side == "L" else 0, f"P{cc}")
            if check_factorisation(g, proj).satisfied:
                valid.append(f"P{side}({cc})")
    return ShiftRenorm(u, v, valid)


def swap_commuting_check(g: GGate, p: TileProjection | GradedOperator) -> bool:
    """With ``G`` commuting with the swap, check ``G^2(P) = P`` and the enlarged-algebra factorisation."""
    s = gate_fermionic_swap()
    gd = g.dense
    sgs = to_dense(s * g.G * s.dagger(), PAIR)
    d = _phase_distance(sgs, gd)
    if d > 1e-8:
        raise FdfcError(f"G does not commute with the swap (defect {d:.3g})")
    op = _as_op(p)
    g2 = g.G * g.G
    back = g2 * op * g2.dagger()
    ok = (back - op).norm() < 1e-8
    sin = operator_schmidt(op, 1, PAIR)
    gens = _cell_mats(r for _, r, _ in sin.pairs) + _cell_mats(l for l, _, _ in sin.pairs)
    basis = algebra_basis(gens)
    for x in basis:
        for y in basis:
            cx = _coef(from_dense(x, CELL))[:, 0]
            cy = _coef(from_dense(y, CELL))[:, 0]
            if _rank(_coef(g.conj(_pair(cx, cy)))) > 1:
                return False
    return bool(ok)


def fdfc_summary(spec, pi: TileProjection) -> dict | None:
    """Factorisation report for a Margolus spec, or None for other automata."""
    marg = spec.margolus()
    if marg is None or pi.tile_size != 2 or pi.modes_per_cell != 1:
        return None
    m1, m2 = marg
    g = build_G(m1, m2, validate=False)
    return check_factorisation(g, tile_projection_from_pi(pi, m1)).to_dict()
