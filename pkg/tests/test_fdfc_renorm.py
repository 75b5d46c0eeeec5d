import math

import numpy as np
import pytest

from fca_renorm.graded_algebra import CellLayout, GradedOperator, cell_op, from_dense
from fca_renorm.lattice_fca import (
    Cellwise,
    Forking,
    SchumacherWerner,
    build_wrapped_unitary,
    gate_controlled_phase,
    gate_fermionic_swap,
    pair_of,
)
from fca_renorm.fdfc_renorm import (
    FdfcError,
    _coef,
    _pair,
    _rank,
    build_G,
    check_factorisation,
    classify_factor_preserving,
    control_gate,
    detect_shift_renorm,
    fdfc_summary,
    preserves_factorisation,
    support_algebra_factor_test,
    swap_commuting_check,
    tile_projection_from_pi,
)
from fca_renorm.flow import PROJECTIONS, named_projection
from fca_renorm.renorm import check_renormalisable

PAIR = CellLayout(2)
SW = SchumacherWerner(0.7, Cellwise("even_phase", 0.3))
FORK = Forking(Cellwise("even_phase", math.pi / 4))


def test_g_regrouping_validated():
    m1, m2 = SW.margolus()
    g = build_G(m1, m2)
    assert g.G.distance(m1 * m2) < 1e-12


def test_g_rejects_circuit_without_one_cell_invariance():
    m1 = gate_controlled_phase(0.4)
    m2 = pair_of(GradedOperator.identity(2), GradedOperator(2, {0: math.cos(0.3), 3: math.sin(0.3)}))
    with pytest.raises(FdfcError):
        build_G(m1, m2)


@pytest.mark.parametrize("spec", [SW, FORK, Forking(Cellwise("even_phase", math.pi / 8))])
@pytest.mark.parametrize("name", PROJECTIONS)
def test_factorisation_matches_commutator(spec, name):
    m1, m2 = spec.margolus()
    pi = named_projection(name)
    p = tile_projection_from_pi(pi, m1, m2)
    fr = check_factorisation(build_G(m1, m2), p)
    rr = check_renormalisable(build_wrapped_unitary(spec, 10), pi, 2)
    assert fr.satisfied == rr.verdict
    if fr.satisfied:
        assert fr.reconstruction_residual < 1e-8
        assert support_algebra_factor_test(build_G(m1, m2), p)["preserved"]


def test_identity_pair_maps_to_identity_pair():
    m1, m2 = SW.margolus()
    g = build_G(m1, m2)
    p = tile_projection_from_pi(named_projection("Pe"), m1)
    fr = check_factorisation(g, p)
    assert fr.satisfied
    one = np.eye(4)[0]
    for lam, rho, _ in fr.schmidt_in.pairs:
        r = _coef(rho)[:, 0]
        img = _coef(g.conj(_pair(r, one)))
        assert _rank(img) == 1
        assert np.abs(img[:, 1:]).max() < 1e-9  # right factor stays the identity


def test_monomials_map_to_products():
    m1, m2 = SW.margolus()
    g = build_G(m1, m2)
    rng = np.random.default_rng(3)
    zz = _coef(cell_op(CellLayout(1), 0, "Z"))[:, 0]
    for _ in range(5):
        a = zz * rng.normal() + np.eye(4)[0] * rng.normal()
        b = zz * rng.normal() + np.eye(4)[0] * rng.normal()
        assert _rank(_coef(g.conj(_pair(a, b)))) == 1


def test_classification_normal_forms():
    cz = from_dense(np.diag([1, 1, 1, -1.0]), PAIR)
    form = classify_factor_preserving(cz)
    assert form is not None and form.swap == 0 and form.n == 1
    sw = classify_factor_preserving(gate_fermionic_swap())
    assert sw is not None and sw.swap == 1
    assert classify_factor_preserving(gate_controlled_phase(math.pi / 3)) is None


def test_random_gate_fails_preservation():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = h + h.conj().T
    # keep it even: zero the parity-changing blocks
    par = np.array([0, 1, 1, 0])
    h[par[:, None] != par[None, :]] = 0
    w, v = np.linalg.eigh(h)
    f = from_dense(v @ np.diag(np.exp(1j * w)) @ v.conj().T, PAIR)
    assert not preserves_factorisation(f)


def test_control_gate_is_unitary_and_even():
    g = control_gate(1, 0.5, 1)
    assert g.grades() == {0}


def test_forking_quarter_turn_is_a_shift_renormalisation():
    g = build_G(*FORK.margolus())
    res = detect_shift_renorm(g)
    assert res is not None
    assert sorted(res.valid_projections) == ["PL(0)", "PL(1)", "PR(0)", "PR(1)"]
    assert detect_shift_renorm(build_G(*SW.margolus())) is None


def test_swap_commuting_check():
    g = build_G(*SW.margolus())
    assert swap_commuting_check(g, named_projection("Pe"))
    with pytest.raises(FdfcError):
        swap_commuting_check(build_G(*Forking(Cellwise("even_phase", 0.3)).margolus()), named_projection("Pe"))


def test_summary_skips_non_margolus():
    from fca_renorm.lattice_fca import Shift

    assert fdfc_summary(Shift(1), named_projection("Pe")) is None
    assert fdfc_summary(SW, named_projection("Po"))["satisfied"] is True
