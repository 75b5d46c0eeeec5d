"""Acceptance run: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also repeated in the terminal summary.
"""

import collections
import math

import numpy as np

from conftest import record
from fca_renorm.graded_algebra import CellLayout, cell_op, to_dense
from fca_renorm.lattice_fca import (
    Cellwise,
    Forking,
    MajoranaShift,
    SchumacherWerner,
    Shift,
    build_wrapped_unitary,
    index,
)
from fca_renorm.renorm import (
    brute_force_equation,
    brute_force_equivalence,
    build_isometry,
    check_renormalisable,
    coisometry_apply,
)
from fca_renorm.fdfc_renorm import build_G, check_factorisation, tile_projection_from_pi
from fca_renorm.flow import PROJECTIONS, FlowPoint, fixed_point_scan, flow_orbit, named_projection, table_sweep

PI = math.pi
BATTERY_SPECS = [
    SchumacherWerner(PI / 2, Cellwise("even_phase", 0.3)),
    SchumacherWerner(0.7, Cellwise("odd_rotation", 0.3)),
    SchumacherWerner(2 * PI / 3, Cellwise("even_phase", 2 * PI / 3)),
    SchumacherWerner(1.3, Cellwise("odd_rotation", 2.2)),
    Forking(Cellwise("even_phase", PI / 4)),
    Forking(Cellwise("even_phase", PI / 8)),
    Forking(Cellwise("odd_rotation", PI / 4)),
    Forking(Cellwise("even_phase", 0.3)),
    Shift(1),
    Shift(-1),
    MajoranaShift(1, PI / 2),
    MajoranaShift(-1, 0.3),
]
BATTERY = [(s, n) for s in BATTERY_SPECS for n in PROJECTIONS]


def test_criterion_1_table_reproduction():
    rep = table_sweep(8)
    bad = collections.Counter((c.row, c.column) for c in rep.failures())
    total = len(rep.cells)
    detail = f"({total - sum(bad.values())}/{total} cells)"
    if bad:
        detail += " failing: " + ", ".join(f"{r} {c} x{k}" for (r, c), k in sorted(bad.items()))
    ok = rep.passed
    record(1, ok, detail)
    assert ok, detail


def test_criterion_2_index_values():
    rng = np.random.default_rng(2024)
    checks = [
        (index(Shift(1)), 2.0),
        (index(Shift(-1)), 0.5),
        (index(MajoranaShift(1, 0.0)), math.sqrt(2)),
        (index(MajoranaShift(-1, 0.0)), math.sqrt(0.5)),
    ]
    for k in range(20):
        kind = ("even_phase", "odd_rotation")[k % 2]
        a, b = rng.uniform(0, 2 * PI, 2)
        spec = SchumacherWerner(a, Cellwise(kind, b)) if k < 10 else Forking(Cellwise(kind, b))
        checks.append((index(spec), 1.0))
    worst = max(abs(v - want) for v, want in checks)
    ok = worst < 1e-9
    record(2, ok, f"(24 values, worst deviation {worst:.2e})")
    assert ok


def test_criterion_3_commutator_vs_full_equation():
    agree, n_true = 0, 0
    for spec, name in BATTERY:
        u = build_wrapped_unitary(spec, 10)
        p = named_projection(name)
        e = build_isometry(p)
        verdict = check_renormalisable(u, p, 2, e).verdict
        holds = brute_force_equation(u, e, 2) < 1e-8
        agree += verdict == holds
        n_true += verdict
    ok = agree == len(BATTERY)
    record(3, ok, f"({agree}/{len(BATTERY)} pairs agree, {n_true} renormalisable)")
    assert ok and len(BATTERY) >= 40


def test_criterion_4_wrapping_independence():
    agree = 0
    for spec, name in BATTERY:
        agree += brute_force_equivalence(spec, named_projection(name), 2, (10, 12)).agree
    ok = agree == len(BATTERY)
    record(4, ok, f"({agree}/{len(BATTERY)} pairs agree between sizes 10 and 12)")
    assert ok


def test_criterion_5_factorisation_equivalence():
    agree, total = 0, 0
    for spec, name in BATTERY:
        marg = spec.margolus()
        if marg is None:
            continue
        m1, m2 = marg
        pi = named_projection(name)
        fr = check_factorisation(build_G(m1, m2), tile_projection_from_pi(pi, m1, m2))
        rr = check_renormalisable(build_wrapped_unitary(spec, 10), pi, 2)
        agree += fr.satisfied == rr.verdict
        total += 1
    ok = agree == total
    record(5, ok, f"({agree}/{total} Margolus pairs agree)")
    assert ok


def test_criterion_6_fixed_points():
    a = 2 * PI / 3
    orbit = flow_orbit(FlowPoint.sw(a, a), "Po")
    main = orbit.terminal == "fixed_point" and len(orbit.points) == 2
    # the known point rides along so the scan demonstrably detects fixed points
    found = fixed_point_scan(8, extra=[FlowPoint.sw(a, a), FlowPoint.sw(a, a, "odd_rotation")])
    graded = [(pt, proj) for pt, proj, res in found if res.coarse_parity == "graded" and not pt.is_shift]
    seen = sorted(f"{pt.label()}+{proj}" for pt, proj, _ in found)
    ok = main and not graded
    record(6, ok, f"(SW(2pi/3, 2pi/3)+Po fixed: {main}; fixed points found: {', '.join(seen) or 'none'}; "
                  f"{len(graded)} non-shift with graded coarse parity)")
    assert ok


def test_criterion_7_kernel_properties():
    # the randomised suite itself lives in test_properties.py (1000 cases each)
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                        "tests/test_properties.py"], capture_output=True, text=True)
    ok = r.returncode == 0
    record(7, ok, "(" + (r.stdout.strip().splitlines() or ["no output"])[-1] + ")")
    assert ok, r.stdout


def test_criterion_8_bosonization():
    pair = CellLayout(2)
    q = to_dense(cell_op(pair, 0, "Z") * cell_op(pair, 1, "Z"), pair)
    got = {}
    for name in PROJECTIONS:
        got[name] = coisometry_apply(build_isometry(named_projection(name)), q, 1)
    # P_e keeps a0 = a1 = +1 sectors, P_o the a0 = -a1 ones
    ok = np.allclose(got["Pe"], np.eye(2)) and np.allclose(got["Po"], -np.eye(2))
    z = np.diag([1.0, -1.0])
    graded = ["PiX(+)", "PiX(-)", "PiY(+)", "PiY(-)"]
    ok &= all(np.allclose(got[n], z) or np.allclose(got[n], -z) for n in graded)
    record(8, bool(ok), "(Pe -> +I, Po -> -I, PiX/PiY -> +-Z)")
    assert ok
