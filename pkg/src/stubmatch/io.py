"""CSV artifacts: marked point sets, matchings and type assignments.

Every file starts with ``# key=value`` metadata lines followed by a header
row. Floats are written with ``repr`` so they read back bit-for-bit.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Dict, TextIO, Tuple, Union

import numpy as np

from .errors import FormatError
from .geometry import BoxSpec, PointSet
from .matching import Matching
from .process import MarkedPointSet

PathLike = Union[str, Path, TextIO]


def _open_write(target: PathLike):
    if hasattr(target, "write"):
        return target, False
    return open(target, "w", newline="", encoding="utf-8"), True


def _read_text(source: PathLike) -> str:
    if hasattr(source, "read"):
        return source.read()
    return Path(source).read_text(encoding="utf-8")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_meta(fh, meta: Dict):
    for key, value in meta.items():
        fh.write(f"# {key}={_fmt(value)}\n")


def _split(text: str):
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    return meta, list(csv.reader(body))


def instance_meta(m: MarkedPointSet, **extra) -> Dict:
    meta = {"d": m.box.dimension, "L": m.box.side, "periodic": m.box.periodic}
    meta.update(extra)
    return meta


def box_from_meta(meta: Dict) -> BoxSpec:
    try:
        return BoxSpec(int(meta["d"]), float(meta["L"]),
                       meta.get("periodic", "true").lower() == "true")
    except KeyError as exc:
        raise FormatError(f"missing metadata key {exc}") from None


def write_points_csv(target: PathLike, m: MarkedPointSet, meta: Dict = None):
    fh, close = _open_write(target)
    try:
        _write_meta(fh, meta if meta is not None else instance_meta(m))
        d = m.box.dimension
        fh.write(",".join([f"x{k}" for k in range(d)] + ["degree"]) + "\n")
        for row, deg in zip(m.coords.tolist(), m.degrees.tolist()):
            fh.write(",".join([repr(v) for v in row] + [str(deg)]) + "\n")
    finally:
        if close:
            fh.close()


def read_points_csv(source: PathLike) -> Tuple[MarkedPointSet, Dict]:
    meta, rows = _split(_read_text(source))
    box = box_from_meta(meta)
    d = box.dimension
    expected = [f"x{k}" for k in range(d)] + ["degree"]
    if not rows or rows[0] != expected:
        raise FormatError(f"expected header {','.join(expected)}")
    data = rows[1:]
    try:
        coords = np.array([[float(v) for v in r[:d]] for r in data], dtype=np.float64)
        degrees = np.array([int(r[d]) for r in data], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"bad point row: {exc}") from None
    return MarkedPointSet(PointSet(box, coords.reshape(-1, d)), degrees), meta


def write_matching_csv(target: PathLike, matching: Matching, meta: Dict = None):
    fh, close = _open_write(target)
    try:
        meta = dict(meta or {})
        meta.setdefault("n_points", matching.n_points)
        _write_meta(fh, meta)
        fh.write("i,j,length\n")
        for a, b, length in zip(matching.i.tolist(), matching.j.tolist(), matching.length.tolist()):
            fh.write(f"{a},{b},{length!r}\n")
    finally:
        if close:
            fh.close()


def read_matching_csv(source: PathLike, n_points: int = None) -> Tuple[Matching, Dict]:
    meta, rows = _split(_read_text(source))
    if not rows or rows[0] != ["i", "j", "length"]:
        raise FormatError("expected header i,j,length")
    if n_points is None:
        if "n_points" not in meta:
            raise FormatError("point count unknown: no n_points metadata")
        n_points = int(meta["n_points"])
    try:
        i = [int(r[0]) for r in rows[1:]]
        j = [int(r[1]) for r in rows[1:]]
        length = [float(r[2]) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise FormatError(f"bad edge row: {exc}") from None
    return Matching(n_points, i, j, length), meta


def write_types_csv(target: PathLike, m: MarkedPointSet, type_of: np.ndarray):
    fh, close = _open_write(target)
    try:
        fh.write("index,degree,type\n")
        for k in np.flatnonzero(type_of > 0).tolist():
            fh.write(f"{k},{int(m.degrees[k])},{int(type_of[k])}\n")
    finally:
        if close:
            fh.close()


def to_string(writer, *args, **kwargs) -> str:
    buf = io.StringIO()
    writer(buf, *args, **kwargs)
    return buf.getvalue()
