"""Binary field and metric files.

Layout: a 32-byte little-endian header ``magic 'SLAB', version u16, geometry
u8, symmetry u8, d u8, n_theta u32, n_r u32, L f64`` padded with zeros (byte
25 marks the payload kind), then row-major samples. Field payloads are
complex128; metric payloads store the d(d+1)/2 upper-triangle entries of G
per point as float64.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .geometry import ComplexField, DomainGrid, MetricField, make_metric

MAGIC = b"SLAB"
VERSION = 1
_HEAD = struct.Struct("<4sHBBBIId")
HEADER_SIZE = 32
_GEOM = {"domain": 0, "double": 1}
_SYM = {"none": 0, "odd": 1, "even": 2}
KIND_FIELD, KIND_METRIC = 0, 1


def _header(grid, symmetry: str, kind: int) -> bytes:
    base = grid.base if hasattr(grid, "base") and grid.base is not None else grid
    geometry = "double" if base is not grid else "domain"
    raw = _HEAD.pack(MAGIC, VERSION, _GEOM[geometry], _SYM[symmetry], base.d, base.n_theta, base.n_r, base.L)
    pad = bytearray(HEADER_SIZE - len(raw))
    pad[0] = kind
    return raw + bytes(pad)


def _parse(buf: bytes):
    if len(buf) < HEADER_SIZE:
        raise ConfigurationError("file too short for a slab header")
    magic, version, geom, sym, d, n_theta, n_r, L = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise ConfigurationError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ConfigurationError(f"unsupported version {version}")
    kind = buf[_HEAD.size]
    base = DomainGrid(L, n_theta, n_r, d=d)
    geometry = {v: k for k, v in _GEOM.items()}[geom]
    grid = base.doubled() if geometry == "double" else base
    symmetry = {v: k for k, v in _SYM.items()}[sym]
    return grid, symmetry, kind


def write_field(path, u: ComplexField) -> None:
    data = np.ascontiguousarray(u.values, dtype="<c16")
    Path(path).write_bytes(_header(u.grid, u.symmetry, KIND_FIELD) + data.tobytes())


def read_field(path) -> ComplexField:
    buf = Path(path).read_bytes()
    grid, symmetry, kind = _parse(buf)
    if kind != KIND_FIELD:
        raise ConfigurationError(f"{path} holds a metric, not a field")
    n = int(np.prod(grid.shape))
    data = np.frombuffer(buf, dtype="<c16", offset=HEADER_SIZE)
    if data.size != n:
        raise ConfigurationError(f"payload has {data.size} samples, expected {n}")
    return ComplexField(data.reshape(grid.shape).copy(), grid, symmetry)


def write_metric(path, g: MetricField) -> None:
    d = g.d
    iu = np.triu_indices(d)
    comps = np.stack([g.values[i, j] for i, j in zip(*iu)], axis=-1)
    Path(path).write_bytes(_header(g.grid, "even" if g.geometry == "double" else "none", KIND_METRIC)
                           + np.ascontiguousarray(comps, dtype="<f8").tobytes())


def read_metric(path) -> MetricField:
    buf = Path(path).read_bytes()
    grid, _, kind = _parse(buf)
    if kind != KIND_METRIC:
        raise ConfigurationError(f"{path} holds a field, not a metric")
    d = grid.base.d if hasattr(grid, "base") and grid.base is not None else grid.d
    m = d * (d + 1) // 2
    data = np.frombuffer(buf, dtype="<f8", offset=HEADER_SIZE)
    if data.size != m * int(np.prod(grid.shape)):
        raise ConfigurationError("metric payload size mismatch")
    comps = data.reshape(tuple(grid.shape) + (m,))
    vals = np.empty((d, d) + tuple(grid.shape))
    for c, (i, j) in enumerate(zip(*np.triu_indices(d))):
        vals[i, j] = vals[j, i] = comps[..., c]
    return make_metric(vals, grid)
