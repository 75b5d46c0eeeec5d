import numpy as np
import pytest

from fca_renorm.graded_algebra import (
    AlgebraError,
    CellLayout,
    GradedOperator,
    cell_op,
    embed,
    format_operator,
    from_dense,
    operator_schmidt,
    parity_of,
    parse_operator,
    parse_scalar,
    pauli_decompose,
    product_op,
    restrict,
    schmidt_rank,
    to_dense,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2)


def kron(*ms):
    out = np.eye(1)
    for m in ms:
        out = np.kron(out, m)
    return out


def test_jordan_wigner_dense_forms():
    lay = CellLayout(3)
    assert np.allclose(to_dense(cell_op(lay, 0, "X"), lay), kron(X, I2, I2))
    assert np.allclose(to_dense(cell_op(lay, 1, "X"), lay), kron(Z, X, I2))
    assert np.allclose(to_dense(cell_op(lay, 2, "Y"), lay), kron(Z, Z, Y))
    assert np.allclose(to_dense(cell_op(lay, 1, "Z"), lay), kron(I2, Z, I2))
    assert np.allclose(to_dense(cell_op(lay, 2, "P1"), lay), kron(I2, I2, np.diag([0, 1])))


def test_z_is_minus_i_xy():
    lay = CellLayout(1)
    z = -1j * cell_op(lay, 0, "X") * cell_op(lay, 0, "Y")
    assert z.distance(cell_op(lay, 0, "Z")) < 1e-14


def test_odd_operators_on_distinct_cells_anticommute():
    lay = CellLayout(2)
    x0, y1 = cell_op(lay, 0, "X"), cell_op(lay, 1, "Y")
    assert (x0 * y1 + y1 * x0).is_zero()
    z0 = cell_op(lay, 0, "Z")
    assert (z0 * y1 - y1 * z0).is_zero()


def test_parity_and_grades():
    lay = CellLayout(2)
    assert parity_of(cell_op(lay, 0, "X")) == 1
    assert parity_of(cell_op(lay, 0, "X") * cell_op(lay, 1, "Y")) == 0
    with pytest.raises(AlgebraError):
        parity_of(cell_op(lay, 0, "X") + cell_op(lay, 0, "Z"))


def test_embed_and_restrict_round_trip():
    src = CellLayout(2)
    big = CellLayout(5)
    o = cell_op(src, 0, "X") * cell_op(src, 1, "Y") + 0.5 * cell_op(src, 1, "Z")
    e = embed(o, [2, 3], big)
    assert e.support_cells(big) == {2, 3}
    back = restrict(e, big, [2, 3])
    assert back.distance(o) < 1e-14


def test_product_op_matches_kron_up_to_jw():
    lay = CellLayout(2)
    assert np.allclose(to_dense(product_op(lay, ["Z", "Z"]), lay), kron(Z, Z))
    # X0 X1 = X Z . Z X = (XZ) (x) X
    assert np.allclose(to_dense(product_op(lay, ["X", "X"]), lay), kron(X @ Z, X))


def test_pauli_decompose_frozen():
    dec = pauli_decompose(kron(X, Z) + 0.5 * kron(I2, Y))
    # bit m of the x and z masks belongs to mode m; Y = i X Z
    assert set(dec) == {(1, 2), (2, 2)}
    assert dec[(1, 2)] == pytest.approx(1.0)
    assert dec[(2, 2)] == pytest.approx(0.5j)


def test_from_dense_rejects_bad_shape():
    with pytest.raises(AlgebraError):
        from_dense(np.eye(3))


def test_schmidt_of_even_projection():
    lay = CellLayout(2)
    one = GradedOperator.identity(lay.width)
    pe = 0.5 * (one + cell_op(lay, 0, "Z") * cell_op(lay, 1, "Z"))
    dec = operator_schmidt(pe, 1, lay)
    assert dec.rank == 2
    assert dec.weights == pytest.approx([0.5, 0.5])
    assert dec.reconstruct().distance(pe) < 1e-12


def test_schmidt_of_majorana_pair_projection_is_odd_pair():
    lay = CellLayout(2)
    one = GradedOperator.identity(lay.width)
    pix = 0.5 * (one + 1j * cell_op(lay, 0, "X") * cell_op(lay, 1, "X"))
    dec = operator_schmidt(pix, 1, lay)
    assert dec.rank == 2
    assert sorted(parity_of(l) for l, _, _ in dec.pairs) == [0, 1]


def test_schmidt_rank_of_product():
    lay = CellLayout(3)
    assert schmidt_rank(product_op(lay, ["X", "Z", "Y"]), 1, lay) == 1
    with pytest.raises(AlgebraError):
        operator_schmidt(cell_op(lay, 0, "X"), 1, lay)


def test_parse_and_format_round_trip():
    op, lay = parse_operator("0.5*I@I + 0.5*Z@Z")
    assert lay.cells == 2
    pe = 0.5 * (GradedOperator.identity(4) + cell_op(lay, 0, "Z") * cell_op(lay, 1, "Z"))
    assert op.distance(pe) < 1e-14
    again, _ = parse_operator(format_operator(op, lay))
    assert again.distance(op) < 1e-12


@pytest.mark.parametrize("text,value", [("2", 2), ("-i", -1j), ("(0.5+0.5i)", 0.5 + 0.5j), ("1e-3", 1e-3)])
def test_parse_scalar(text, value):
    assert parse_scalar(text) == pytest.approx(value)


@pytest.mark.parametrize("bad", ["", "Q@I", "0.5*I@I + Z"])
def test_parse_operator_errors(bad):
    with pytest.raises(AlgebraError):
        parse_operator(bad)


def test_dense_cap():
    with pytest.raises(AlgebraError):
        to_dense(GradedOperator.identity(2 * 20), CellLayout(20))
