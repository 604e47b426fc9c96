"""File formats: FHM1 fields, measure and table CSVs, atomic writes.

FHM1 layout::

    FHM1
    n=2 d=2
    origin=-1 -1
    h=0.0625
    counts=33 33
    exterior=vortex
    <one CSV row of d values per node, row-major>

The binary variant keeps the header and stores the values as little-endian
float64 right after the ``exterior`` line. All numbers are written with 17
significant digits so that text files round-trip exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fields import ConstantExterior, GridSpec, VectorField, VortexExterior

MAGIC = "FHM1"
_TEXT_BYTES = set(b"0123456789+-.eEinfaINFA, \t\r\n")


class FormatError(ValueError):
    """Malformed input file."""


def fmt(x) -> str:
    """17-significant-digit decimal."""
    return format(float(x), ".17g")


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to a temporary file and rename it over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(prefix="." + path.name + ".", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else fmt(v))
                    for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))


def dumps17(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits; NaN becomes null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps17(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps17(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps17(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if np.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_json(path, obj) -> None:
    atomic_write(path, dumps17(obj) + "\n")


# --------------------------------------------------------------------------
# FHM1


def _exterior_header(u: VectorField) -> str:
    ext = u.exterior
    if ext is None:
        return "none"
    if isinstance(ext, ConstantExterior):
        return "constant " + " ".join(fmt(v) for v in ext.c)
    if isinstance(ext, VortexExterior):
        return "vortex"
    raise FormatError(f"exterior '{ext.name}' cannot be stored in FHM1")


def fhm_header(u: VectorField) -> str:
    s = u.spec
    return "\n".join([
        MAGIC,
        f"n={s.n} d={u.d}",
        "origin=" + " ".join(fmt(v) for v in s.origin),
        "h=" + fmt(s.h),
        "counts=" + " ".join(str(int(c)) for c in s.counts),
        "exterior=" + _exterior_header(u),
    ]) + "\n"


def write_fhm(path, u: VectorField, binary: bool = False) -> None:
    head = fhm_header(u)
    vals = np.ascontiguousarray(u.flat_values(), dtype="<f8")
    if binary:
        atomic_write(path, head.encode("ascii") + vals.tobytes())
    else:
        body = "".join(",".join(fmt(v) for v in row) + "\n" for row in vals)
        atomic_write(path, head + body)


def _parse_header(lines):
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError("missing FHM1 magic line")
    try:
        nd = dict(kv.split("=") for kv in lines[1].split())
        n, d = int(nd["n"]), int(nd["d"])
        keys = {}
        for ln in lines[2:6]:
            k, v = ln.split("=", 1)
            keys[k.strip()] = v.strip()
        origin = tuple(float(v) for v in keys["origin"].split())
        h = float(keys["h"])
        counts = tuple(int(v) for v in keys["counts"].split())
        ext_s = keys["exterior"].split()
    except (KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"bad FHM1 header: {exc}") from None
    if len(origin) != n or len(counts) != n:
        raise FormatError("origin/counts length does not match n")
    if ext_s[0] == "none":
        ext = None
    elif ext_s[0] == "vortex":
        ext = VortexExterior()
    elif ext_s[0] == "constant":
        c = [float(v) for v in ext_s[1:]]
        if len(c) != d:
            raise FormatError("constant exterior needs d values")
        ext = ConstantExterior(c)
    else:
        raise FormatError(f"unknown exterior '{ext_s[0]}'")
    return n, d, GridSpec(origin, h, counts), ext


def read_fhm(path) -> VectorField:
    """Read a text or binary FHM1 file.

    With a vortex exterior, a node sitting exactly at the origin is flagged
    again, as in :func:`fracmap.fields.analytic_vortex`.
    """
    raw = Path(path).read_bytes()
    pos = 0
    lines = []
    for _ in range(6):
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise FormatError("truncated FHM1 header")
        lines.append(raw[pos:nl].decode("ascii", errors="replace"))
        pos = nl + 1
    n, d, spec, ext = _parse_header(lines)
    body = raw[pos:]
    N = int(np.prod(spec.counts))
    if len(body) == 8 * N * d and not set(body) <= _TEXT_BYTES:
        vals = np.frombuffer(body, dtype="<f8").astype(float)
    else:
        try:
            vals = np.loadtxt(_io.StringIO(body.decode("ascii")), delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FormatError(f"bad FHM1 body: {exc}") from None
    if vals.size != N * d:
        raise FormatError(f"expected {N} rows of {d} values")
    vals = vals.reshape(spec.counts + (d,))
    flags = None
    if isinstance(ext, VortexExterior) and n == 2:
        x = spec.coords()
        idx = spec.index_of(np.zeros(2))
        if np.linalg.norm(x[idx]) <= 1e-9 * spec.h:
            flags = np.zeros(spec.counts, bool)
            flags[idx] = True
    return VectorField(spec, vals, ext, flags)


# --------------------------------------------------------------------------
# point tables


def _read_numeric_csv(path) -> np.ndarray:
    text = Path(path).read_text()
    rows = [r for r in csv.reader(_io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        return np.zeros((0, 0))
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]  # header
    try:
        arr = np.array([[float(c) for c in r] for r in rows], float)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if arr.ndim != 2:
        raise FormatError(f"{path}: ragged rows")
    return arr


def read_points(path) -> np.ndarray:
    """Point set CSV ``x1,...,xn`` (header optional); extra columns are ignored
    when the header names them."""
    text_head = Path(path).read_text().splitlines()[:1]
    arr = _read_numeric_csv(path)
    if text_head and arr.size:
        names = [c.strip() for c in text_head[0].split(",")]
        if all(nm.startswith("x") for nm in names[:1]):
            keep = [i for i, nm in enumerate(names) if nm.startswith("x") and nm[1:].isdigit()]
            if keep:
                arr = arr[:, keep]
    return arr


def write_points(path, pts, extra: dict | None = None) -> None:
    pts = np.atleast_2d(np.asarray(pts, float))
    n = pts.shape[1] if pts.size else 0
    cols = [f"x{i + 1}" for i in range(n)]
    data = [pts]
    for name, v in (extra or {}).items():
        cols.append(name)
        data.append(np.asarray(v, float).reshape(-1, 1))
    table = np.hstack(data) if pts.size else np.zeros((0, len(cols)))
    write_csv(path, cols, table)


def read_measure(path):
    """Measure CSV ``x1..xn,weight[,radius]``; the header decides whether radii are present."""
    from .reifenberg import DiscreteMeasure

    head = Path(path).read_text().splitlines()[:1]
    arr = _read_numeric_csv(path)
    if arr.size == 0:
        raise FormatError(f"{path}: empty measure")
    names = [c.strip() for c in head[0].split(",")] if head else []
    has_r = bool(names) and names[-1] == "radius"
    if not names or not names[0].startswith("x"):
        has_r = False
    if has_r:
        return DiscreteMeasure(arr[:, :-2], arr[:, -2], arr[:, -1])
    return DiscreteMeasure(arr[:, :-1], arr[:, -1])


def write_measure(path, mu) -> None:
    cols = [f"x{i + 1}" for i in range(mu.n)] + ["weight"]
    table = np.hstack([mu.points, mu.weights[:, None]])
    if mu.radii is not None:
        cols.append("radius")
        table = np.hstack([table, mu.radii[:, None]])
    write_csv(path, cols, table)


# --------------------------------------------------------------------------
# extensions


def write_extension(path, ue) -> None:
    """Store a :class:`fracmap.extension.HalfField` as a numpy ``.npz`` archive."""
    b = ue.spec.base
    buf = _io.BytesIO()
    np.savez(buf, origin=np.asarray(b.origin, float), h=np.float64(b.h),
             counts=np.asarray(b.counts, int), z=np.asarray(ue.spec.z, float),
             values=ue.values, grad=ue.grad)
    atomic_write(path, buf.getvalue())


def read_extension(path):
    from .extension import HalfField, HalfGridSpec

    try:
        with np.load(path) as f:
            base = GridSpec(tuple(f["origin"].tolist()), float(f["h"]),
                            tuple(int(c) for c in f["counts"]))
            return HalfField(HalfGridSpec(base, tuple(f["z"].tolist())), f["values"], f["grad"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not an extension archive ({exc})") from None
