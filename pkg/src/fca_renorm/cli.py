"""Command-line front end.

Every command prints one report (JSON by default) and exits with 0 when the
automaton renormalises (or the command has no verdict), 1 when it does not
and 2 on a configuration error.
"""

from __future__ import annotations

import json
import math
import re
import sys
from pathlib import Path

import click

from .graded_algebra import AlgebraError, format_operator, operator_schmidt, parse_operator
from .lattice_fca import FcaError, build_wrapped_unitary, index_from_unitary, spec_from_json, spec_to_json, wrap_size_for
from .renorm import RenormError, TileProjection, build_isometry, check_renormalisable, clean_json, induced_automaton
from .flow import FIT_TOL, FlowError, FlowPoint, fit_family, flow_orbit, named_projection, table_sweep

EXIT_OK, EXIT_NO, EXIT_CONFIG = 0, 1, 2


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def _emit(payload: dict, out: str, text: str | None = None) -> None:
    if out == "json":
        click.echo(json.dumps(clean_json(payload), sort_keys=True, indent=2))
    else:
        click.echo(text if text is not None else _plain(payload))


def _plain(d, indent: int = 0) -> str:
    pad = "  " * indent
    lines = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            lines.append(f"{pad}{k}:")
            lines.append(_plain(v, indent + 1))
        else:
            lines.append(f"{pad}{k}: {json.dumps(clean_json(v))}")
    return "\n".join(lines)


_ANGLE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)?)\*?(pi)?(?:/(\d+\.?\d*))?$")


class Angle(click.ParamType):
    """Radians as a number or a multiple of pi such as ``2pi/3`` or ``-pi/4``."""

    name = "angle"

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        m = _ANGLE_RE.match(str(value).strip().replace(" ", ""))
        if not m or (m.group(1) in ("", "+", "-") and not m.group(2)):
            self.fail(f"{value!r} is not an angle", param, ctx)
        coef = m.group(1)
        v = float(coef + "1") if coef in ("", "+", "-") else float(coef)
        if m.group(2):
            v *= math.pi
        if m.group(3):
            v /= float(m.group(3))
        return v


ANGLE = Angle()


def load_fca(arg: str):
    """Automaton from a JSON file path or an inline JSON object."""
    p = Path(arg)
    src = arg
    if not arg.lstrip().startswith("{") and p.exists():
        src = p.read_text()
    try:
        data = json.loads(src)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed automaton JSON at line {err.lineno} column {err.colno}: {err.msg}")
    try:
        return spec_from_json(data)
    except (FcaError, AlgebraError, TypeError, ValueError) as err:
        raise ConfigError(f"invalid automaton: {err}")


def load_projection(arg: str) -> TileProjection:
    """A named tile projection, or an operator literal on the tile cells."""
    try:
        return named_projection(arg)
    except FlowError:
        pass
    try:
        op, lay = parse_operator(arg)
        return TileProjection(op, lay.cells, lay.modes_per_cell, arg)
    except (AlgebraError, RenormError) as err:
        raise ConfigError(f"invalid projection {arg!r}: {err}")


def _size(spec, steps: int, size: int | None, unsafe: bool) -> int:
    need = wrap_size_for(spec, steps)
    if size is None:
        return need
    if size < need and not unsafe:
        raise ConfigError(f"--size {size} is below the regular-wrapping bound {need}; pass --unsafe-wrapping to force")
    return size


def _renorm(fca: str, proj: str, steps: int, size: int | None, unsafe: bool, fit: bool):
    spec = load_fca(fca)
    tile = load_projection(proj)
    if steps < 1:
        raise ConfigError("--steps must be at least 1")
    n = _size(spec, steps, size, unsafe)
    if size is None:
        n = tile.tile_size * math.ceil(n / tile.tile_size)
    if n % tile.tile_size:
        raise ConfigError(f"lattice size {n} is not a multiple of the tile size {tile.tile_size}")
    try:
        u = build_wrapped_unitary(spec, n, unsafe=unsafe)
        e = build_isometry(tile)
        rep = check_renormalisable(u, tile, steps, e)
        if fit and rep.verdict:
            ind = induced_automaton(u, e, steps)
            point = None
            if ind.coarse is not None and ind.coarse.layout.modes_per_cell == 1:
                point = fit_family(ind.coarse)
            rep.fit = point.to_dict() if point is not None else None
            if point is None or point.family == "unclassified":
                rep.fit = None
                rep.notes.append("warning: coarse automaton is outside the known families")
    except (FcaError, RenormError, FlowError) as err:
        raise ConfigError(str(err))
    return spec, rep


_common = [
    click.option("--fca", "fca", required=True, help="automaton JSON file or inline JSON object"),
    click.option("--proj", "proj", default="Pe", show_default=True, help="projection name or operator literal"),
    click.option("--steps", type=int, default=2, show_default=True),
    click.option("--size", type=int, default=None, help="lattice size override"),
    click.option("--unsafe-wrapping", is_flag=True, help="allow sizes below the regular-wrapping bound"),
]


def _out_option(f):
    return click.option("--out", type=click.Choice(["json", "text"]), default="json", show_default=True)(f)


def common(f):
    for opt in reversed(_common):
        f = opt(f)
    return _out_option(f)


@click.group()
def main() -> None:
    """Renormalisation checks for fermionic cellular automata."""


@main.command()
@common
def check(fca, proj, steps, size, unsafe_wrapping, out):
    """Commutator test for the (steps, projection) renormalisation."""
    spec, rep = _renorm(fca, proj, steps, size, unsafe_wrapping, fit=False)
    d = rep.to_dict()
    d["automaton"] = spec_to_json(spec)
    d["projection"] = proj
    _emit(d, out)
    sys.exit(EXIT_OK if rep.verdict else EXIT_NO)


@main.command()
@common
def renorm(fca, proj, steps, size, unsafe_wrapping, out):
    """Commutator test plus the fitted coarse automaton."""
    spec, rep = _renorm(fca, proj, steps, size, unsafe_wrapping, fit=True)
    d = rep.to_dict()
    d["automaton"] = spec_to_json(spec)
    d["projection"] = proj
    _emit(d, out)
    sys.exit(EXIT_OK if rep.verdict else EXIT_NO)


@main.command()
@click.option("--fca", "fca", required=True)
@click.option("--size", type=int, default=None)
@click.option("--unsafe-wrapping", is_flag=True)
@_out_option
def index(fca, size, unsafe_wrapping, out):
    """Index of the automaton."""
    spec = load_fca(fca)
    n = _size(spec, 1, size, unsafe_wrapping)
    try:
        u = build_wrapped_unitary(spec, n, unsafe=unsafe_wrapping)
        val = index_from_unitary(u.U, u.layout)
    except FcaError as err:
        raise ConfigError(str(err))
    _emit({"index": val, "log2_index": math.log2(val), "lattice_size": n}, out, f"{val:.12g}")


def _point_from(family, phi, theta, kind, direction, fca):
    if fca is not None:
        d = json.loads(fca) if fca.lstrip().startswith("{") else json.loads(Path(fca).read_text())
        family = d.get("family", family)
        phi = d.get("phi", phi)
        cw = d.get("cellwise") or {}
        theta = cw.get("theta", d.get("theta", theta))
        kind = cw.get("kind", kind)
        direction = d.get("dir", direction)
    if family == "sw":
        return FlowPoint.sw(phi, theta, kind)
    if family == "forking":
        return FlowPoint.forking(theta, kind)
    if family == "cellwise":
        return FlowPoint.cellwise(theta, kind)
    if family == "shift":
        return FlowPoint.shift(direction)
    if family == "majorana_shift":
        return FlowPoint.majorana_shift(direction, theta)
    raise ConfigError(f"unknown family {family!r}")


@main.command()
@click.option("--family", type=click.Choice(["sw", "forking", "cellwise", "shift", "majorana_shift"]), default="sw")
@click.option("--phi", type=ANGLE, default=0.0, help="radians, or a multiple of pi like 2pi/3")
@click.option("--theta", type=ANGLE, default=0.0)
@click.option("--kind", type=click.Choice(["even_phase", "odd_rotation"]), default="even_phase")
@click.option("--dir", "direction", type=int, default=1)
@click.option("--fca", "fca", default=None, help="start point as automaton JSON (overrides the family flags)")
@click.option("--proj", default="Po", show_default=True)
@click.option("--frame", type=click.Choice(["lattice", "circuit"]), default="lattice", show_default=True)
@click.option("--max-iter", type=int, default=16, show_default=True)
@click.option("--tol", type=float, default=FIT_TOL, show_default=True, help="fixed-point tolerance on reduced angles")
@click.option("--emit-orbit", type=click.Path(dir_okay=False), default=None, help="write the orbit as CSV")
@_out_option
def flow(family, phi, theta, kind, direction, fca, proj, frame, max_iter, tol, emit_orbit, out):
    """Iterate the renormalisation map from a family point."""
    try:
        start = _point_from(family, phi, theta, kind, direction, fca)
        orbit = flow_orbit(start, proj, max_iter=max_iter, frame=frame, tol=tol)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed automaton JSON at line {err.lineno} column {err.colno}: {err.msg}")
    except (FlowError, FcaError, RenormError) as err:
        raise ConfigError(str(err))
    if emit_orbit:
        orbit.write_csv(emit_orbit)
    text = "\n".join([f"{k}: {p.label()}" for k, p in enumerate(orbit.points)] + [f"terminal: {orbit.terminal}"])
    _emit(orbit.to_dict(), out, text)
    sys.exit(EXIT_NO if orbit.terminal == "not_renormalisable" else EXIT_OK)


@main.command()
@click.option("--grid", type=int, default=8, show_default=True)
@click.option("--no-unlisted", is_flag=True, help="skip the combinations outside the table")
@_out_option
def table(grid, no_unlisted, out):
    """Sweep the tabulated flow on a parameter grid."""
    if grid < 1:
        raise ConfigError("--grid must be positive")
    rep = table_sweep(grid, include_unlisted=not no_unlisted)
    _emit(rep.to_dict(), out, rep.to_text())
    sys.exit(EXIT_OK if rep.passed else EXIT_NO)


@main.command()
@click.option("--proj", default="Pe", show_default=True)
@click.option("--cut", type=int, default=None, help="cells left of the cut (default half the tile)")
@_out_option
def schmidt(proj, cut, out):
    """Operator Schmidt decomposition of a tile projection."""
    tile = load_projection(proj)
    k = cut if cut is not None else tile.tile_size // 2
    try:
        dec = operator_schmidt(tile.P, k, tile.layout)
    except AlgebraError as err:
        raise ConfigError(str(err))
    pairs = [{"weight": w, "left": format_operator(lam), "right": format_operator(rho)} for lam, rho, w in dec.pairs]
    text = "\n".join([f"rank {dec.rank}"] + [f"{p['weight']:.12g}  {p['left']} | {p['right']}" for p in pairs])
    _emit({"projection": proj, "cut": k, "rank": dec.rank, "pairs": pairs}, out, text)
