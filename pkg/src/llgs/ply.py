"""PLY point-cloud input/output (ASCII and binary little-endian)."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from .errors import PlyFormatError
from .geometry import PointCloud

logger = logging.getLogger(__name__)

_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4, "double": 8, "float64": 8,
}
_FLOAT_TYPES = {"float", "float32", "double", "float64"}
_SUPPORTED_FORMATS = {"ascii", "binary_little_endian"}


@dataclass(slots=True)
class _ElementLayout:
    name: str
    count: int
    line_offset: int
    properties: List[Tuple[str, str]] = field(default_factory=list)
    has_list: bool = False

    @property
    def row_size(self) -> int:
        return sum(_SCALAR_SIZES[kind] for kind, _ in self.properties)


@dataclass(slots=True)
class _HeaderLayout:
    fmt: str
    elements: List[_ElementLayout]
    data_offset: int


def _scan_header(raw: bytes) -> _HeaderLayout:
    """Walk the header line by line, keeping the byte offset of every line for error reports."""
    if not raw.startswith(b"ply"):
        raise PlyFormatError("malformed header: missing 'ply' magic", 0)
    offset = 0
    fmt: str | None = None
    elements: List[_ElementLayout] = []
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise PlyFormatError("malformed header: missing end_header", len(raw))
        try:
            line = raw[offset:end].decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyFormatError("malformed header: non-ASCII header line", offset) from None
        tokens = line.split()
        keyword = tokens[0] if tokens else ""
        if keyword in ("ply", "comment", "obj_info", ""):
            pass
        elif keyword == "format":
            if len(tokens) != 3:
                raise PlyFormatError("malformed header: bad format line", offset)
            if tokens[1] not in _SUPPORTED_FORMATS:
                raise PlyFormatError(f"unsupported format '{tokens[1]}'", offset)
            fmt = tokens[1]
        elif keyword == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise PlyFormatError("malformed header: bad element line", offset)
            elements.append(_ElementLayout(tokens[1], int(tokens[2]), offset))
        elif keyword == "property":
            if not elements:
                raise PlyFormatError("malformed header: property before element", offset)
            element = elements[-1]
            if len(tokens) >= 2 and tokens[1] == "list":
                if element.name == "vertex":
                    raise PlyFormatError("unsupported property type 'list' on vertex", offset)
                element.has_list = True
            elif len(tokens) == 3 and tokens[1] in _SCALAR_SIZES:
                element.properties.append((tokens[1], tokens[2]))
            else:
                raise PlyFormatError(f"unsupported property type in '{line}'", offset)
        elif keyword == "end_header":
            if fmt is None:
                raise PlyFormatError("malformed header: missing format line", offset)
            return _HeaderLayout(fmt, elements, end + 1)
        else:
            raise PlyFormatError(f"malformed header: unknown keyword '{keyword}'", offset)
        offset = end + 1


def _check_vertex_payload(raw: bytes, header: _HeaderLayout) -> _ElementLayout:
    vertex = next((e for e in header.elements if e.name == "vertex"), None)
    if vertex is None:
        raise PlyFormatError("malformed header: no vertex element", header.data_offset)
    names = {name: kind for kind, name in vertex.properties}
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise PlyFormatError(f"vertex element lacks property '{axis}'", vertex.line_offset)
        if names[axis] not in _FLOAT_TYPES:
            raise PlyFormatError(
                f"unsupported property type '{names[axis]}' for '{axis}'", vertex.line_offset
            )

    # Offsets are only computable when everything before the vertices has fixed size.
    preceding = header.elements[: header.elements.index(vertex)]
    if any(e.has_list for e in preceding):
        return vertex

    if header.fmt == "binary_little_endian":
        start = header.data_offset + sum(e.count * e.row_size for e in preceding)
        available = max(0, len(raw) - start)
        complete = available // vertex.row_size if vertex.row_size else vertex.count
        if complete < vertex.count:
            raise PlyFormatError(
                f"truncated payload: vertex {complete + 1} of {vertex.count} is incomplete",
                start + complete * vertex.row_size,
            )
        return vertex

    lines = raw[header.data_offset:].split(b"\n")
    cursor = header.data_offset
    skip = sum(e.count for e in preceding)
    row = 0
    for line in lines:
        if line.strip():
            if skip:
                skip -= 1
            else:
                if row == vertex.count:
                    break
                if len(line.split()) != len(vertex.properties):
                    raise PlyFormatError(
                        f"malformed vertex {row + 1}: expected {len(vertex.properties)} values",
                        cursor,
                    )
                row += 1
        cursor += len(line) + 1
    if row < vertex.count:
        raise PlyFormatError(
            f"truncated payload: vertex {row + 1} of {vertex.count} is missing",
            min(cursor, len(raw)),
        )
    return vertex


def load_ply(path: str | Path) -> PointCloud:
    """Read all vertices of a PLY file; colours are filled when red/green/blue exist."""
    raw = Path(path).read_bytes()
    header = _scan_header(raw)
    _check_vertex_payload(raw, header)
    try:
        ply = PlyData.read(io.BytesIO(raw))
    except PlyParseError as exc:
        raise PlyFormatError(f"unparseable payload: {exc}", header.data_offset) from exc
    vertex = ply["vertex"].data
    points = np.stack([vertex[axis].astype(np.float64) for axis in ("x", "y", "z")], axis=1)
    colors = None
    fields = vertex.dtype.names or ()
    if all(channel in fields for channel in ("red", "green", "blue")):
        stacked = np.stack([vertex[c] for c in ("red", "green", "blue")], axis=1)
        colors = stacked.astype(np.float64)
        if np.issubdtype(stacked.dtype, np.integer):
            colors = colors / 255.0
    logger.debug("Loaded %d vertices from %s (%s)", len(points), path, header.fmt)
    return PointCloud(points=points, colors=colors)


def save_ply(path: str | Path, cloud: PointCloud, *, binary: bool = True) -> Path:
    """Write ``cloud`` with double-precision coordinates and 8-bit colours."""
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vertex = np.empty(len(cloud), dtype=fields)
    vertex["x"], vertex["y"], vertex["z"] = cloud.points.T
    if cloud.colors is not None:
        quantized = np.clip(np.round(cloud.colors * 255.0), 0, 255).astype(np.uint8)
        vertex["red"], vertex["green"], vertex["blue"] = quantized.T
    destination = Path(path).expanduser().resolve()
    destination.parent.mkdir(parents=True, exist_ok=True)
    PlyData(
        [PlyElement.describe(vertex, "vertex")],
        text=not binary,
        byte_order="<",
    ).write(str(destination))
    return destination
