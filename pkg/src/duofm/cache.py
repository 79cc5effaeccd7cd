"""Binary spectral cache: operators, eigenbases and WKS of one mesh.

Layout (little-endian)::

    b"DUOF" | u32 version | u64 mesh hash | u32 section count
    section*: 8-byte tag | u64 payload length | payload
    u32 CRC32 of everything above

A payload is one array: u8 kind (0 dense, 1 sparse), u8 dtype code,
u8 ndim, u64 shape..., then either the raw row-major data or, for sparse
matrices, u64 nnz followed by sorted (row, col) int64 arrays and values.
"""
from __future__ import annotations

import io
import struct
import zlib

import numpy as np
import scipy.sparse as sp

from .descriptors import DescriptorSet
from .errors import CacheVersionError, CorruptionError, HashMismatchError
from .mesh import TriangleMesh
from .operators import DivergenceOperator
from .shape import ShapeData
from .spectral import ComplexSpectralBasis, RealSpectralBasis

MAGIC = b"DUOF"
VERSION = 1
_DTYPES = {0: "<f8", 1: "<c16", 2: "<i8"}
_CODES = {np.dtype("<f8"): 0, np.dtype("<c16"): 1, np.dtype("<i8"): 2}
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data):
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def mesh_hash(mesh):
    """FNV-1a over the canonical vertex (f8) and face (i8) bytes."""
    v = np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes()
    f = np.ascontiguousarray(mesh.faces, dtype="<i8").tobytes()
    return fnv1a64(v + f)


def _canon(a):
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return np.ascontiguousarray(a, dtype="<c16")
    if np.issubdtype(a.dtype, np.integer):
        return np.ascontiguousarray(a, dtype="<i8")
    return np.ascontiguousarray(a, dtype="<f8")


def _encode(obj):
    out = io.BytesIO()
    if sp.issparse(obj):
        coo = obj.tocoo()
        order = np.lexsort((coo.col, coo.row))
        vals = _canon(coo.data[order])
        out.write(struct.pack("<BBB", 1, _CODES[vals.dtype], 2))
        out.write(struct.pack("<QQ", *coo.shape))
        out.write(struct.pack("<Q", len(vals)))
        out.write(_canon(coo.row[order]).tobytes())
        out.write(_canon(coo.col[order]).tobytes())
        out.write(vals.tobytes())
    else:
        a = _canon(obj)
        out.write(struct.pack("<BBB", 0, _CODES[a.dtype], a.ndim))
        out.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        out.write(a.tobytes())
    return out.getvalue()


def _decode(buf):
    kind, code, ndim = struct.unpack_from("<BBB", buf, 0)
    if code not in _DTYPES:
        raise CorruptionError(f"unknown dtype code {code}")
    dt = np.dtype(_DTYPES[code])
    shape = struct.unpack_from(f"<{ndim}Q", buf, 3)
    pos = 3 + 8 * ndim
    if kind == 0:
        count = int(np.prod(shape))
        return np.frombuffer(buf, dtype=dt, count=count, offset=pos).reshape(shape).copy()
    if kind == 1:
        (nnz,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        row = np.frombuffer(buf, dtype="<i8", count=nnz, offset=pos)
        col = np.frombuffer(buf, dtype="<i8", count=nnz, offset=pos + 8 * nnz)
        val = np.frombuffer(buf, dtype=dt, count=nnz, offset=pos + 16 * nnz)
        m = sp.csr_matrix((val.copy(), (row.copy(), col.copy())), shape=shape)
        m.sort_indices()
        return m
    raise CorruptionError(f"unknown section kind {kind}")


def cache_write(path, shape):
    """Serialise a :class:`ShapeData` bundle."""
    sections = [
        ("vertices", shape.mesh.vertices), ("faces", shape.mesh.faces),
        ("W", shape.stiffness), ("M", shape.lb.mass), ("L", shape.connection),
        ("G", shape.gradient), ("Phi", shape.lb.evecs), ("lambda", shape.lb.evals),
        ("Psi", shape.conn.evecs), ("mu", shape.conn.evals), ("wks", shape.wks.values),
        ("wksprm", np.array([shape.wks.provenance.get("num_energies", 0),
                             shape.wks.provenance.get("sigma_scale", 0.0)], dtype=float)),
    ]
    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<IQI", VERSION, mesh_hash(shape.mesh), len(sections)))
    for tag, obj in sections:
        payload = _encode(obj)
        body.write(tag.encode("ascii").ljust(8, b"\0"))
        body.write(struct.pack("<Q", len(payload)))
        body.write(payload)
    data = body.getvalue()
    with open(path, "wb") as fh:
        fh.write(data)
        fh.write(struct.pack("<I", zlib.crc32(data) & 0xFFFFFFFF))


def cache_read(path, mesh=None):
    """Load a cache; ``mesh`` (optional) must hash to the stored value."""
    raw = open(path, "rb").read()
    if len(raw) < 24 or raw[:4] != MAGIC:
        raise CorruptionError(f"{path}: not a spectral cache (bad magic)")
    data, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(data) & 0xFFFFFFFF != crc:
        raise CorruptionError(f"{path}: checksum mismatch")
    version, stored_hash, count = struct.unpack_from("<IQI", data, 4)
    if version != VERSION:
        raise CacheVersionError(f"{path}: cache version {version}, expected {VERSION}")
    if mesh is not None and mesh_hash(mesh) != stored_hash:
        raise HashMismatchError(f"{path}: cache was built for a different mesh")
    pos = 20
    sec = {}
    try:
        for _ in range(count):
            tag = data[pos:pos + 8].rstrip(b"\0").decode("ascii")
            (length,) = struct.unpack_from("<Q", data, pos + 8)
            sec[tag] = _decode(data[pos + 16:pos + 16 + length])
            pos += 16 + length
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CorruptionError(f"{path}: malformed section ({exc})") from None
    m = sec["M"]
    msh = mesh if mesh is not None else TriangleMesh(sec["vertices"], sec["faces"], validate=False)
    prm = sec["wksprm"]
    wks = DescriptorSet(sec["wks"], "wks", {"num_energies": int(prm[0]), "sigma_scale": float(prm[1])})
    return ShapeData(msh, sec["W"], sp.diags(m).tocsr(), None, sec["L"], sec["G"],
                     DivergenceOperator(sec["G"], m), RealSpectralBasis(sec["Phi"], sec["lambda"], m),
                     ComplexSpectralBasis(sec["Psi"], sec["mu"], m), wks), stored_hash
