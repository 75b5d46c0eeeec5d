import csv
import math

import pytest
from hypothesis import given, settings, strategies as st

from fca_renorm.lattice_fca import index_from_unitary
from fca_renorm.flow import (
    FlowError,
    FlowPoint,
    fit_family,
    flow_orbit,
    flow_step,
    grid_angles,
    is_fixed_point,
    named_projection,
)
from fca_renorm.lattice_fca import build_wrapped_unitary

TWO_PI = 2 * math.pi
offgrid = st.floats(0.2, TWO_PI - 0.2).filter(lambda a: min(abs(a - k * math.pi / 2) for k in range(5)) > 0.1)


def circ(a, b, period=TWO_PI):
    d = (a - b) % period
    return min(d, period - d)


@pytest.mark.parametrize("name", ["PL(0)", "PL0", "PiX(+)", "PiX", "Pe", " PR ( 1 ) "])
def test_projection_names(name):
    assert named_projection(name).rank == 2


@pytest.mark.parametrize("bad", ["PL", "Pe(0)", "PiX(2)", "Q"])
def test_projection_name_errors(bad):
    with pytest.raises(FlowError):
        named_projection(bad)


def test_canonical_reduction():
    p = FlowPoint.sw(-2 * math.pi / 3, 4 * math.pi / 3)
    assert p.phi == pytest.approx(4 * math.pi / 3)
    assert p.theta == pytest.approx(math.pi / 3)
    assert FlowPoint.sw(TWO_PI, 0.4).family == "cellwise"
    assert FlowPoint.majorana_shift(1, 3 * math.pi / 2).theta == pytest.approx(3 * math.pi / 2)
    assert math.copysign(1, FlowPoint.sw(0.5, -0.0).theta) == 1


def test_grid_avoids_exclusions():
    g = grid_angles(8)
    assert len(g) == 8
    assert min(min(circ(a, k * math.pi / 2) for k in range(4)) for a in g) == pytest.approx(math.pi / 16)


def test_fit_recovers_parameters():
    pt = FlowPoint.sw(1.1, 0.4, "odd_rotation")
    u = build_wrapped_unitary(pt.to_spec(), 6)
    assert fit_family(u).distance(pt) < 1e-7
    sh = FlowPoint.shift(-1)
    assert fit_family(build_wrapped_unitary(sh.to_spec(), 6)).distance(sh) < 1e-7


def test_sw_even_pe_realised_branch():
    # phi' = 2 phi holds; theta' lands on 4 theta + phi (mod pi)
    res = flow_step(FlowPoint.sw(math.pi / 2, 0.2), "Pe")
    assert res.renormalisable
    assert res.point.phi == pytest.approx(math.pi)
    assert circ(res.point.theta, 0.8 + math.pi / 2, math.pi) < 1e-7


def test_forking_generic_angle_not_renormalisable():
    assert not flow_step(FlowPoint.forking(math.pi / 8), "PL(0)").renormalisable


def test_shift_is_trivial():
    res = flow_step(FlowPoint.shift(1), "PR(0)")
    assert res.renormalisable and res.trivial
    assert res.point.distance(FlowPoint.shift(1)) == 0


@settings(max_examples=6, deadline=None)
@given(offgrid, offgrid)
def test_sw_odd_po_column(phi, theta):
    res = flow_step(FlowPoint.sw(phi, theta, "odd_rotation"), "Po")
    assert res.renormalisable
    assert circ(res.point.phi, -2 * phi) < 1e-7
    assert circ(res.point.theta, phi, math.pi) < 1e-7


@settings(max_examples=6, deadline=None)
@given(offgrid, offgrid, st.sampled_from(["Pe", "Po", "PL(0)", "PR(1)", "PiX(+)", "PiY(-)"]))
def test_flow_closure(phi, theta, proj):
    for pt in (FlowPoint.sw(phi, theta), FlowPoint.sw(phi, theta, "odd_rotation")):
        res = flow_step(pt, proj)
        if res.renormalisable:
            assert res.point is not None and res.point.family != "unclassified"


def _coarse_index(pt, proj, frame="lattice"):
    res = flow_step(pt, proj, frame)
    assert res.renormalisable
    coarse = build_wrapped_unitary(res.point.to_spec(), 6)
    return index_from_unitary(coarse.U, coarse.layout)


def test_index_after_flow():
    assert _coarse_index(FlowPoint.majorana_shift(1, math.pi / 2), "PiX(+)") == pytest.approx(2.0)
    assert _coarse_index(FlowPoint.forking(math.pi / 4), "PL(0)", "circuit") == pytest.approx(2.0)
    assert _coarse_index(FlowPoint.forking(math.pi / 4), "PR(0)", "circuit") == pytest.approx(0.5)
    assert _coarse_index(FlowPoint.sw(1.0, 0.5), "Po") == pytest.approx(1.0)


def test_fixed_point_two_thirds():
    a = 2 * math.pi / 3
    orbit = flow_orbit(FlowPoint.sw(a, a), "Po")
    assert orbit.terminal == "fixed_point" and len(orbit.points) == 2
    assert is_fixed_point(FlowPoint.sw(a, a), "Po")


def test_shift_orbit_is_fixed():
    assert flow_orbit(FlowPoint.shift(1), "PR(0)").terminal == "fixed_point"


def test_orbit_from_third_turn(tmp_path):
    orbit = flow_orbit(FlowPoint.sw(math.pi / 3, 0.0), "Po", max_iter=6)
    phis = [p.phi for p in orbit.points]
    assert phis[0] == pytest.approx(math.pi / 3)
    assert circ(phis[1], -2 * math.pi / 3) < 1e-7
    assert orbit.terminal in ("fixed_point", "cycle")
    out = tmp_path / "orbit.csv"
    orbit.write_csv(out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["step", "family", "phi", "theta"]
    assert len(rows) == len(orbit.points) + 1


def test_orbit_stops_when_not_renormalisable():
    orbit = flow_orbit(FlowPoint.forking(math.pi / 8), "Pe")
    assert orbit.terminal == "not_renormalisable" and orbit.failed_step == 0


def test_unsafe_size_refused():
    with pytest.raises(FlowError):
        flow_step(FlowPoint.sw(1.0, 0.5), "Pe", size=6)
