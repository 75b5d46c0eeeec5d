"""Randomised identities of the graded operator kernel."""

import numpy as np
from hypothesis import given, settings, strategies as st

from fca_renorm.graded_algebra import (
    CellLayout,
    GradedOperator,
    embed,
    from_dense,
    op_graded_commutator,
    operator_schmidt,
    parity_of,
    parity_operator,
    to_dense,
)

CASES = settings(max_examples=1000, deadline=None)
TOL = 1e-10

amp = st.complex_numbers(min_magnitude=0.05, max_magnitude=2.0, allow_nan=False, allow_infinity=False)


@st.composite
def homogeneous(draw, n_modes=None, grade=None):
    n = draw(st.integers(1, 4)) if n_modes is None else n_modes
    g = draw(st.integers(0, 1)) if grade is None else grade
    w = 2 * n
    masks = [m for m in range(1 << w) if m.bit_count() % 2 == g]
    chosen = draw(st.lists(st.sampled_from(masks), min_size=1, max_size=5, unique=True))
    return GradedOperator(w, {m: draw(amp) for m in chosen})


@st.composite
def operator(draw):
    n = draw(st.integers(1, 4))
    w = 2 * n
    chosen = draw(st.lists(st.integers(0, (1 << w) - 1), min_size=1, max_size=6, unique=True))
    return GradedOperator(w, {m: draw(amp) for m in chosen})


@CASES
@given(st.integers(1, 5), st.data())
def test_car_relations(n, data):
    lay = CellLayout(n)
    i = data.draw(st.integers(0, 2 * n - 1))
    j = data.draw(st.integers(0, 2 * n - 1))
    gi = GradedOperator.majorana(lay.width, i)
    gj = GradedOperator.majorana(lay.width, j)
    anti = gi * gj + gj * gi
    expect = GradedOperator.identity(lay.width, 2.0 if i == j else 0.0)
    assert anti.distance(expect) < TOL
    di, dj = to_dense(gi, lay), to_dense(gj, lay)
    assert np.abs(di @ dj + dj @ di - (2.0 if i == j else 0.0) * np.eye(lay.dim)).max() < TOL
    assert np.abs(di - di.conj().T).max() < TOL


@CASES
@given(st.data())
def test_grading_is_a_homomorphism(data):
    n = data.draw(st.integers(1, 4))
    a = data.draw(homogeneous(n_modes=n))
    b = data.draw(homogeneous(n_modes=n))
    prod = a * b
    if prod.is_zero():
        return
    assert parity_of(prod) == (parity_of(a) + parity_of(b)) % 2


@CASES
@given(st.data())
def test_braiding_sign_on_disjoint_cells(data):
    na = data.draw(st.integers(1, 2))
    nb = data.draw(st.integers(1, 2))
    a = data.draw(homogeneous(n_modes=na))
    b = data.draw(homogeneous(n_modes=nb))
    lay = CellLayout(na + nb)
    ea = embed(a, list(range(na)), lay)
    eb = embed(b, list(range(na, na + nb)), lay)
    sign = -1.0 if parity_of(a) and parity_of(b) else 1.0
    assert (ea * eb).distance(sign * (eb * ea)) < TOL * max(1.0, (ea * eb).norm())


@CASES
@given(operator(), operator())
def test_dense_round_trip_and_star_homomorphism(a, b):
    lay = CellLayout(a.width // 2)
    da = to_dense(a, lay)
    assert from_dense(da, lay).distance(a) < TOL
    assert np.abs(to_dense(a.dagger(), lay) - da.conj().T).max() < TOL
    if b.width == a.width:
        assert np.abs(to_dense(a * b, lay) - da @ to_dense(b, lay)).max() < TOL * 10


@CASES
@given(homogeneous())
def test_parity_conjugation(o):
    lay = CellLayout(o.width // 2)
    q = parity_operator(lay)
    sign = -1.0 if parity_of(o) else 1.0
    assert (q * o * q.dagger()).distance(sign * o) < TOL * max(1.0, o.norm())
    dq = to_dense(q, lay)
    do = to_dense(o, lay)
    assert np.abs(dq @ do @ dq.conj().T - sign * do).max() < TOL * 10


@CASES
@given(st.integers(1, 12), st.data())
def test_graded_commutator_of_generators_vanishes(n, data):
    w = 2 * n
    i = data.draw(st.integers(0, w - 1))
    j = data.draw(st.integers(0, w - 1).filter(lambda k: k != i))
    gi, gj = GradedOperator.majorana(w, i), GradedOperator.majorana(w, j)
    assert op_graded_commutator(gi, gj).is_zero(TOL)
    assert (gi * gi).distance(GradedOperator.identity(w)) < TOL


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_associativity_and_distributivity(data):
    n = data.draw(st.integers(1, 3))
    a, b, c = (data.draw(homogeneous(n_modes=n)) for _ in range(3))
    lay = CellLayout(n)
    d = lambda o: to_dense(o, lay)
    assert np.abs(d((a * b) * c) - d(a) @ d(b) @ d(c)).max() < 1e-12 * 100
    assert ((a * b) * c).distance(a * (b * c)) < 1e-12 * 100
    assert (a * (b + c)).distance(a * b + a * c) < 1e-12 * 100


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_schmidt_reconstruction(data):
    n = data.draw(st.integers(2, 3))
    o = data.draw(homogeneous(n_modes=n, grade=0))
    lay = CellLayout(n)
    k = data.draw(st.integers(1, n - 1))
    dec = operator_schmidt(o, k, lay)
    assert dec.reconstruct().distance(o) < 1e-10 * max(1.0, o.norm())
    lefts = [lam for lam, _, _ in dec.pairs]
    for x, l1 in enumerate(lefts):
        assert len(l1.grades()) == 1
        for y, l2 in enumerate(lefts):
            assert abs(l1.inner(l2) - (1.0 if x == y else 0.0)) < 1e-10
