"""Line-oriented text formats for stations, models, constraints and grids.

Every number is written with 17 significant digits so a write/read round
trip restores the exact float. Blank lines and ``#`` comments are ignored
except in constraint files, where a blank line ends a body block.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .forward import FieldGrid
from .invert import KINDS, InversionResult, ParameterBox
from .model import BarBody, BarCell, Spheroid, Station

_TOKEN = re.compile(r"\S+")


class ParseError(ValueError):
    """Malformed input; carries the 1-based line and column of the fault."""

    def __init__(self, message: str, line: int, column: int = 1, source: str = "<text>"):
        self.line = line
        self.column = column
        self.source = source
        super().__init__(f"{source}:{line}:{column}: {message}")


def fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _tokens(text: str, source: str):
    """Yield ``(line_no, [(column, token), ...])`` for every non-comment line."""
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        toks = [(m.start() + 1, m.group()) for m in _TOKEN.finditer(body)]
        yield n, toks


def _number(tok, line, source) -> float:
    col, text = tok
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"expected a number, got {text!r}", line, col, source) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", line, col, source)
    return v


def _integer(tok, line, source) -> int:
    col, text = tok
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected an integer, got {text!r}", line, col, source) from None


def _end_col(toks):
    col, text = toks[-1]
    return col + len(text)


def _build(factory, line, col, source):
    try:
        return factory()
    except ValueError as exc:
        raise ParseError(str(exc), line, col, source) from None


def _read(path) -> tuple[str, str]:
    p = Path(path)
    return p.read_text(encoding="utf-8"), str(p)


def _write(path, text: str):
    Path(path).write_text(text, encoding="utf-8")


# stations

def parse_stations(text: str, source: str = "<text>") -> list[Station]:
    out = []
    width = None
    for n, toks in _tokens(text, source):
        if not toks:
            continue
        if len(toks) not in (2, 3):
            raise ParseError(f"expected 'x y [vz]', got {len(toks)} fields", n,
                             toks[min(len(toks), 3) - 1][0], source)
        if width is not None and len(toks) != width:
            raise ParseError("mixed station lines with and without vz", n, toks[-1][0], source)
        width = len(toks)
        vals = [_number(t, n, source) for t in toks]
        out.append(Station(vals[0], vals[1], vals[2] if width == 3 else None))
    return out


def format_stations(stations) -> str:
    stations = list(stations)
    has_vz = bool(stations) and all(s.vz is not None for s in stations)
    lines = ["# x_km y_km vz_mgal" if has_vz else "# x_km y_km"]
    for s in stations:
        row = [fmt(s.x), fmt(s.y)] + ([fmt(s.vz)] if has_vz else [])
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def read_stations(path) -> list[Station]:
    text, src = _read(path)
    return parse_stations(text, src)


def write_stations(path, stations):
    _write(path, format_stations(stations))


# models: spheroid lines and bar-body blocks, in any order

def parse_model(text: str, source: str = "<text>") -> list:
    """Bodies in file order; spheroids are ``a eps rho x0 y0 z0`` lines and
    bar bodies are a ``body rho ncells`` header followed by cell lines
    ``xc yc dx dy nseg z1min z1max [z2min z2max ...]``."""
    lines = [(n, t) for n, t in _tokens(text, source) if t]
    out = []
    i = 0
    while i < len(lines):
        n, toks = lines[i]
        if toks[0][1] == "body":
            if len(toks) != 3:
                raise ParseError("expected 'body rho ncells'", n, toks[0][0], source)
            rho = _number(toks[1], n, source)
            ncells = _integer(toks[2], n, source)
            if ncells < 1:
                raise ParseError("a bar body needs at least one cell", n, toks[2][0], source)
            if i + ncells >= len(lines):
                raise ParseError(f"body declares {ncells} cells but the file ends early",
                                 n, toks[2][0], source)
            cells = [_parse_cell(*lines[i + 1 + k], source) for k in range(ncells)]
            out.append(_build(lambda: BarBody(rho, tuple(cells)), n, toks[1][0], source))
            i += ncells + 1
            continue
        if len(toks) != 6:
            raise ParseError(f"expected 'a eps rho x0 y0 z0', got {len(toks)} fields",
                             n, toks[0][0], source)
        vals = [_number(t, n, source) for t in toks]
        out.append(_build(lambda: Spheroid(*vals), n, toks[0][0], source))
        i += 1
    return out


def _parse_cell(n, toks, source) -> BarCell:
    if len(toks) < 7:
        raise ParseError("expected 'xc yc dx dy nseg zmin zmax ...'", n,
                         _end_col(toks), source)
    xc, yc, dx, dy = (_number(t, n, source) for t in toks[:4])
    nseg = _integer(toks[4], n, source)
    if nseg < 1 or len(toks) != 5 + 2 * nseg:
        raise ParseError(f"segment count {nseg} does not match the {len(toks) - 5} depths given",
                         n, toks[4][0], source)
    z = [_number(t, n, source) for t in toks[5:]]
    segs = tuple((z[2 * k], z[2 * k + 1]) for k in range(nseg))
    return _build(lambda: BarCell(xc, yc, dx, dy, segs), n, toks[0][0], source)


def format_model(bodies) -> str:
    lines = ["# spheroid: a eps rho x0 y0 z0 | bars: body rho ncells, then xc yc dx dy nseg z..."]
    for b in bodies:
        if isinstance(b, Spheroid):
            lines.append(" ".join(fmt(v) for v in (b.a, b.eps, b.rho, b.x0, b.y0, b.z0)))
        elif isinstance(b, BarBody):
            lines.append(f"body {fmt(b.rho)} {len(b.cells)}")
            for c in b.cells:
                z = " ".join(f"{fmt(lo)} {fmt(hi)}" for lo, hi in c.segments)
                lines.append(f"{fmt(c.xc)} {fmt(c.yc)} {fmt(c.dx)} {fmt(c.dy)} {len(c.segments)} {z}")
        else:
            raise TypeError(f"cannot serialise {type(b).__name__}")
    return "\n".join(lines) + "\n"


def read_model(path) -> list:
    text, src = _read(path)
    return parse_model(text, src)


def write_model(path, bodies):
    _write(path, format_model(bodies))


# constraints

def parse_constraints(text: str, source: str = "<text>") -> ParameterBox:
    """Blocks of ``name pmin pmax`` lines, one block per body, blank-line separated.

    Each block must name ``eps rho x0 y0 z0`` exactly once, in any order.
    """
    blocks: list[dict] = []
    current: dict | None = None
    start = 0
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        toks = [(m.start() + 1, m.group()) for m in _TOKEN.finditer(body)]
        if not toks:
            if not raw.strip() and current:
                _close_block(current, start, source)
                blocks.append(current)
                current = None
            continue
        if len(toks) != 3:
            raise ParseError("expected 'name pmin pmax'", n, toks[0][0], source)
        name = toks[0][1]
        if name not in KINDS:
            raise ParseError(f"unknown parameter {name!r}; expected one of {', '.join(KINDS)}",
                             n, toks[0][0], source)
        if current is None:
            current, start = {}, n
        if name in current:
            raise ParseError(f"parameter {name!r} repeated in one body block", n, toks[0][0], source)
        lo, hi = _number(toks[1], n, source), _number(toks[2], n, source)
        if not lo < hi:
            raise ParseError(f"empty corridor for {name}: {lo} >= {hi}", n, toks[2][0], source)
        current[name] = (lo, hi)
    if current:
        _close_block(current, start, source)
        blocks.append(current)
    if not blocks:
        raise ParseError("no constraint blocks found", 1, 1, source)
    return ParameterBox.from_corridors([[b[k] for k in KINDS] for b in blocks])


def _close_block(block, line, source):
    missing = [k for k in KINDS if k not in block]
    if missing:
        raise ParseError(f"body block is missing {', '.join(missing)}", line, 1, source)


def format_constraints(box: ParameterBox) -> str:
    blocks = []
    for body in box.corridors():
        blocks.append("\n".join(f"{k} {fmt(lo)} {fmt(hi)}" for k, (lo, hi) in zip(KINDS, body)))
    return "\n\n".join(blocks) + "\n"


def read_constraints(path) -> ParameterBox:
    text, src = _read(path)
    return parse_constraints(text, src)


def write_constraints(path, box: ParameterBox):
    _write(path, format_constraints(box))


# grids

def format_grid(grid: FieldGrid) -> str:
    lines = [f"# grid {fmt(grid.x_min)} {fmt(grid.x_max)} {fmt(grid.y_min)} {fmt(grid.y_max)} "
             f"{grid.nx} {grid.ny}"]
    xs, ys = grid.xs, grid.ys
    for j in range(grid.ny):
        for i in range(grid.nx):
            lines.append(f"{fmt(xs[i])} {fmt(ys[j])} {fmt(grid.values[j, i])}")
    return "\n".join(lines) + "\n"


def parse_grid(text: str, source: str = "<text>") -> FieldGrid:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# grid"):
        raise ParseError("missing '# grid xmin xmax ymin ymax nx ny' header", 1, 1, source)
    head = [(m.start() + 1, m.group()) for m in _TOKEN.finditer(lines[0])][2:]
    if len(head) != 6:
        raise ParseError("grid header needs xmin xmax ymin ymax nx ny", 1, 1, source)
    x0, x1, y0, y1 = (_number(t, 1, source) for t in head[:4])
    nx, ny = _integer(head[4], 1, source), _integer(head[5], 1, source)
    vals = []
    for n, toks in _tokens("\n".join(lines[1:]), source):
        if not toks:
            continue
        if len(toks) != 3:
            raise ParseError("expected 'x y vz'", n + 1, toks[0][0], source)
        vals.append(_number(toks[2], n + 1, source))
    if len(vals) != nx * ny:
        raise ParseError(f"grid header promises {nx * ny} rows, found {len(vals)}",
                         len(lines), 1, source)
    return _build(lambda: FieldGrid(x0, x1, y0, y1, np.array(vals).reshape(ny, nx)), 1, 1, source)


def write_grid(path, grid: FieldGrid):
    _write(path, format_grid(grid))


def read_grid(path) -> FieldGrid:
    text, src = _read(path)
    return parse_grid(text, src)


# reports

def format_summary(pairs) -> str:
    """``key value`` lines; floats get full precision."""
    out = []
    for k, v in pairs:
        if isinstance(v, (float, np.floating)):
            v = fmt(v)
        out.append(f"{k} {v}")
    return "\n".join(out) + "\n"


def format_result(result: InversionResult) -> str:
    """Solution as a spheroid model file, headed by the run summary as comments."""
    head = [
        ("bodies", result.m),
        ("functional", result.functional),
        ("alpha", result.alpha),
        ("rounds", result.rounds),
        ("f_initial", result.f_initial),
        ("f_final", result.f_final),
        ("misfit_final", result.misfit_final),
    ]
    lines = ["# " + line for line in format_summary(head).splitlines()]
    lines.append("# columns: a eps rho x0 y0 z0 ; per-body volume and mass follow as comments")
    for k, s in enumerate(result.spheroids, start=1):
        row = " ".join(fmt(v) for v in (s.a, s.eps, s.rho, s.x0, s.y0, s.z0))
        lines.append(f"{row}  # body {k} v {fmt(s.volume)} M {fmt(s.mass)}")
    return "\n".join(lines) + "\n"
