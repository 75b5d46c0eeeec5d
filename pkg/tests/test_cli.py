import json
import math

import jsonschema
import pytest
from click.testing import CliRunner

from fca_renorm.cli import ANGLE, main
from fca_renorm.renorm import report_schema

SW = json.dumps({"family": "sw", "phi": math.pi / 2, "cellwise": {"kind": "even_phase", "theta": 0.3}})
FORK = json.dumps({"family": "forking", "cellwise": {"kind": "even_phase", "theta": math.pi / 8}})


def run(*args):
    return CliRunner().invoke(main, list(args))


def test_check_exit_codes():
    assert run("check", "--fca", SW, "--proj", "Pe").exit_code == 0
    assert run("check", "--fca", FORK, "--proj", "Pe").exit_code == 1
    bad = run("check", "--fca", '{"family": "sw", "phi": "abc"}')
    assert bad.exit_code == 2 and "radians" in bad.output


def test_malformed_json_reports_position():
    r = run("check", "--fca", '{"family": "sw",')
    assert r.exit_code == 2
    assert "line 1 column" in r.output


def test_check_reads_files(tmp_path):
    f = tmp_path / "sw.json"
    f.write_text(SW)
    assert run("check", "--fca", str(f), "--proj", "Po").exit_code == 0


def test_reports_match_schema_and_are_deterministic():
    schema = report_schema()
    outs = []
    for _ in range(2):
        r = run("renorm", "--fca", SW, "--proj", "Po")
        assert r.exit_code == 0
        outs.append(r.output)
        jsonschema.validate(json.loads(r.output), schema)
    assert outs[0] == outs[1]
    r = run("check", "--fca", FORK, "--proj", "Pe")
    jsonschema.validate(json.loads(r.output), schema)


def test_renorm_fits_shift():
    r = run("renorm", "--fca", '{"family": "shift", "dir": 1}', "--proj", "PR(0)")
    d = json.loads(r.output)
    assert d["fit"]["family"] == "shift" and d["fit"]["dir"] == 1


def test_renorm_non_register_coarse_cell_warns():
    # rank-3 projection on a tile: coarse cells are not fermionic modes
    lit = "0.25*I@I + 0.25*Z@Z + 0.25*Z@I + 0.25*I@Z + P0@P1 + P1@P0"
    r = run("renorm", "--fca", '{"family": "shift", "dir": 1}', "--proj", lit)
    assert r.exit_code == 0
    d = json.loads(r.output)
    assert d["fit"] is None and d["coarse"]["dim"] == 3
    assert any("warning" in n or "not a fermionic mode register" in n for n in d["notes"])


def test_size_policy():
    assert run("check", "--fca", SW, "--size", "6").exit_code == 2
    assert run("check", "--fca", SW, "--size", "6", "--unsafe-wrapping").exit_code in (0, 1)


def test_index_command():
    r = run("index", "--fca", '{"family": "majorana_shift", "dir": 1}', "--out", "text")
    assert r.exit_code == 0 and float(r.output) == pytest.approx(math.sqrt(2), abs=1e-9)
    r = run("index", "--fca", '{"family": "shift", "dir": 1}')
    assert json.loads(r.output)["index"] == pytest.approx(2.0)


def test_flow_fixed_point_and_orbit_csv(tmp_path):
    out = tmp_path / "orbit.csv"
    r = run("flow", "--family", "sw", "--phi", "2pi/3", "--theta", "2pi/3", "--proj", "Po", "--emit-orbit", str(out))
    assert r.exit_code == 0
    assert json.loads(r.output)["terminal"] == "fixed_point"
    assert out.read_text().splitlines()[0] == "step,family,phi,theta"


def test_flow_rounded_angles_need_a_looser_tolerance():
    args = ["flow", "--phi", "2.0944", "--theta", "2.0944", "--proj", "Po", "--max-iter", "3"]
    assert json.loads(run(*args).output)["terminal"] != "fixed_point"
    assert json.loads(run(*args, "--tol", "1e-4").output)["terminal"] == "fixed_point"


def test_flow_not_renormalisable_exit():
    r = run("flow", "--family", "forking", "--theta", "pi/8", "--proj", "Pe")
    assert r.exit_code == 1


def test_schmidt_command():
    r = run("schmidt", "--proj", "Pe")
    assert r.exit_code == 0 and json.loads(r.output)["rank"] == 2


@pytest.mark.parametrize("text,value", [("2pi/3", 2 * math.pi / 3), ("-pi/4", -math.pi / 4), ("0.5", 0.5), ("pi", math.pi)])
def test_angle_parsing(text, value):
    assert ANGLE.convert(text, None, None) == pytest.approx(value)


def test_bad_angle_is_usage_error():
    assert run("flow", "--phi", "abc").exit_code == 2
