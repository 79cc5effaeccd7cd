"""OFF / OBJ / ASCII-PLY readers and writers."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParseError, UnsupportedFormatError
from .mesh import TriangleMesh

FORMATS = ("off", "obj", "ply")


def _format_of(path, fmt):
    fmt = (fmt or Path(path).suffix.lstrip(".")).lower()
    if fmt not in FORMATS:
        raise ParseError(f"unknown mesh format {fmt!r}")
    return fmt


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _floats(tokens, lineno, count):
    if len(tokens) < count:
        raise ParseError(f"expected {count} coordinates, got {len(tokens)}", lineno)
    try:
        return [float(t) for t in tokens[:count]]
    except ValueError:
        raise ParseError(f"malformed number in {' '.join(tokens)!r}", lineno) from None


def _ints(tokens, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError(f"malformed index in {' '.join(tokens)!r}", lineno) from None


def _parse_off(text):
    lines = _content_lines(text)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    tokens = head.split()
    if tokens[0] != "OFF":
        raise ParseError("missing OFF header", lineno)
    tokens = tokens[1:]
    if not tokens:
        try:
            lineno, counts = next(lines)
        except StopIteration:
            raise ParseError("missing element counts", lineno) from None
        tokens = counts.split()
    nv, nf = _ints(tokens[:2], lineno) if len(tokens) >= 2 else (None, None)
    if nv is None:
        raise ParseError("missing element counts", lineno)
    verts, faces = [], []
    for lineno, line in lines:
        tok = line.split()
        if len(verts) < nv:
            verts.append(_floats(tok, lineno, 3))
        elif len(faces) < nf:
            idx = _ints(tok, lineno)
            if idx[0] != 3 or len(idx) < 4:
                raise ParseError("only triangular faces are supported", lineno)
            faces.append(idx[1:4])
        else:
            raise ParseError("trailing data after declared elements", lineno)
    if len(verts) != nv or len(faces) != nf:
        raise ParseError(f"expected {nv} vertices and {nf} faces, found {len(verts)} and {len(faces)}")
    return verts, faces


def _parse_obj(text):
    verts, faces = [], []
    for lineno, line in _content_lines(text):
        tok = line.split()
        if tok[0] == "v":
            verts.append(_floats(tok[1:], lineno, 3))
        elif tok[0] == "f":
            if len(tok) != 4:
                raise ParseError("only triangular faces are supported", lineno)
            idx = _ints([t.split("/")[0] for t in tok[1:]], lineno)
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return verts, faces


def _parse_ply(text):
    lines = iter(enumerate(text.splitlines(), start=1))
    lineno, first = next(lines, (1, ""))
    if first.strip() != "ply":
        raise ParseError("missing ply magic", lineno)
    nv = nf = None
    current = None
    vprops = []
    for lineno, raw in lines:
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise UnsupportedFormatError(f"PLY encoding {tok[1]!r} is not supported (ascii only)", lineno)
        elif tok[0] == "element":
            current = tok[1]
            if current == "vertex":
                nv = _ints(tok[2:3], lineno)[0]
            elif current == "face":
                nf = _ints(tok[2:3], lineno)[0]
        elif tok[0] == "property" and current == "vertex":
            vprops.append(tok[-1])
        elif tok[0] == "end_header":
            break
    else:
        raise ParseError("missing end_header", lineno)
    if nv is None or nf is None:
        raise ParseError("header must declare vertex and face elements", lineno)
    try:
        cols = [vprops.index(c) for c in "xyz"]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z properties", lineno) from None
    verts, faces = [], []
    for lineno, raw in lines:
        tok = raw.split()
        if not tok:
            continue
        if len(verts) < nv:
            vals = _floats(tok, lineno, len(vprops))
            verts.append([vals[c] for c in cols])
        elif len(faces) < nf:
            idx = _ints(tok, lineno)
            if idx[0] != 3 or len(idx) < 4:
                raise ParseError("only triangular faces are supported", lineno)
            faces.append(idx[1:4])
        else:
            raise ParseError("trailing data after declared elements", lineno)
    if len(verts) != nv or len(faces) != nf:
        raise ParseError(f"expected {nv} vertices and {nf} faces, found {len(verts)} and {len(faces)}")
    return verts, faces


_PARSERS = {"off": _parse_off, "obj": _parse_obj, "ply": _parse_ply}


def load_mesh(path, format=None):
    """Read and validate a triangle mesh.

    Raises ParseError on malformed input and TopologyError when the parsed
    mesh is not an oriented manifold.
    """
    fmt = _format_of(path, format)
    raw = Path(path).read_bytes()
    if fmt == "ply" and b"format binary" in raw[:512]:
        raise UnsupportedFormatError("binary PLY is not supported (ascii only)", 2)
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise ParseError("file is not ASCII text") from None
    verts, faces = _PARSERS[fmt](text)
    v = np.array(verts, dtype=float).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(v, f, name=Path(path).stem)


def save_mesh(mesh, path, format=None):
    fmt = _format_of(path, format)
    v = mesh.vertices
    f = mesh.faces
    vlines = [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in v.tolist()]
    if fmt == "off":
        out = ["OFF", f"{len(v)} {len(f)} 0"] + vlines + [f"3 {a} {b} {c}" for a, b, c in f.tolist()]
    elif fmt == "obj":
        out = [f"v {s}" for s in vlines] + [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in f.tolist()]
    else:
        out = [
            "ply", "format ascii 1.0",
            f"element vertex {len(v)}", "property double x", "property double y", "property double z",
            f"element face {len(f)}", "property list uchar int vertex_indices", "end_header",
        ] + vlines + [f"3 {a} {b} {c}" for a, b, c in f.tolist()]
    Path(path).write_text("\n".join(out) + "\n")
