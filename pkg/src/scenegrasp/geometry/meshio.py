"""OBJ and PLY mesh readers/writers.

OBJ is ASCII only; semantic labels ride on ``g``/``usemtl`` group names and
are resolved through a sidecar JSON label table (group name -> integer id).
PLY supports ASCII and binary little-endian, with an optional per-face
``label`` property carrying the integer ids directly.

Floats are written at full precision so load(write(mesh)) round-trips
vertices and faces exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .mesh import MeshError, TriMesh

UNLABELED = -1


class MeshFormatError(MeshError):
    """Parse failure; carries file path and 1-based line number when known."""

    def __init__(self, path, message: str, line: int | None = None):
        loc = f"{path}" if line is None else f"{path}:{line}"
        super().__init__(f"{loc}: {message}")
        self.path = str(path)
        self.line = line


def load_label_table(path) -> dict[str, int]:
    """Sidecar table mapping group/material names to integer semantic ids."""
    with open(path, "r", encoding="utf-8") as fh:
        table = json.load(fh)
    if not isinstance(table, dict) or not all(
        isinstance(k, str) and isinstance(v, int) for k, v in table.items()
    ):
        raise MeshFormatError(path, "label table must map names to integers")
    return table


def write_label_table(table: dict[str, int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")


def detect_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".obj":
        return "obj"
    if ext == ".ply":
        return "ply"
    raise MeshFormatError(path, f"cannot infer mesh format from extension {ext!r}")


def load_mesh(path, fmt: str | None = None, label_table: dict[str, int] | None = None) -> TriMesh:
    """Load an OBJ or PLY mesh, preserving vertex order from the file.

    With a label table, OBJ group/material names become per-face integer
    labels (names missing from the table map to -1). PLY meshes take labels
    from a per-face ``label`` property when present.
    """
    fmt = fmt or detect_format(path)
    if fmt == "obj":
        return _load_obj(path, label_table)
    if fmt == "ply":
        return _load_ply(path)
    raise MeshFormatError(path, f"unsupported format {fmt!r}")


def write_mesh(
    mesh: TriMesh,
    path,
    fmt: str | None = None,
    label_names: dict[int, str] | None = None,
    binary: bool = False,
) -> None:
    """Write a mesh as OBJ (labels become groups via ``label_names``) or PLY."""
    fmt = fmt or detect_format(path)
    if fmt == "obj":
        _write_obj(mesh, path, label_names)
    elif fmt == "ply":
        _write_ply(mesh, path, binary=binary)
    else:
        raise MeshFormatError(path, f"unsupported format {fmt!r}")


# -- OBJ ---------------------------------------------------------------

def _load_obj(path, label_table: dict[str, int] | None) -> TriMesh:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    labels: list[int] = []
    current_label = UNLABELED
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise MeshFormatError(path, f"cannot open: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError(path, "vertex needs 3 coordinates", lineno)
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise MeshFormatError(path, f"bad vertex: {exc}", lineno) from exc
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(path, "face needs at least 3 vertices", lineno)
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise MeshFormatError(path, f"bad face index {token!r}", lineno) from exc
                    # OBJ indices are 1-based; negatives count from the end.
                    if i < 0:
                        i = len(vertices) + i
                    else:
                        i = i - 1
                    if i < 0 or i >= len(vertices):
                        raise MeshFormatError(
                            path, f"face index {token} out of range (have {len(vertices)} vertices)", lineno
                        )
                    idx.append(i)
                # Fan-triangulate polygons.
                for k in range(1, len(idx) - 1):
                    tri = (idx[0], idx[k], idx[k + 1])
                    if len(set(tri)) != 3:
                        raise MeshFormatError(
                            path, f"degenerate face at face index {len(faces)}", lineno
                        )
                    faces.append(tri)
                    labels.append(current_label)
            elif tag in ("g", "usemtl", "o"):
                name = parts[1] if len(parts) > 1 else ""
                if label_table is not None:
                    current_label = label_table.get(name, UNLABELED)
            # vn/vt/mtllib/s are accepted and ignored.
    if not vertices:
        raise MeshFormatError(path, "no vertices found")
    face_labels = np.array(labels, dtype=np.int64) if label_table is not None else None
    try:
        return TriMesh(np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3), face_labels)
    except MeshError as exc:
        raise MeshFormatError(path, str(exc)) from exc


def _write_obj(mesh: TriMesh, path, label_names: dict[int, str] | None) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    if mesh.face_labels is not None and label_names:
        # Group faces by label, keeping face order stable inside each group.
        order = np.argsort(mesh.face_labels, kind="stable")
        current = None
        for fid in order:
            label = int(mesh.face_labels[fid])
            if label != current:
                lines.append(f"g {label_names.get(label, f'label_{label}')}")
                current = label
            f = mesh.faces[fid]
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    else:
        for f in mesh.faces:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# -- PLY ---------------------------------------------------------------

_PLY_SCALARS = {
    "char": "b", "int8": "b",
    "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h",
    "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i",
    "uint": "I", "uint32": "I",
    "float": "f", "float32": "f",
    "double": "d", "float64": "d",
}


def _load_ply(path) -> TriMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise MeshFormatError(path, "missing 'ply' magic", 1)
    try:
        header_end = data.index(b"end_header\n") + len(b"end_header\n")
    except ValueError:
        raise MeshFormatError(path, "missing end_header") from None
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = data[header_end:]

    fmt = None
    elements: list[tuple[str, int, list]] = []  # (name, count, [properties])
    for lineno, line in enumerate(header, start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] == "ascii":
                fmt = "ascii"
            elif parts[1] == "binary_little_endian":
                fmt = "binary"
            else:
                raise MeshFormatError(path, f"unsupported PLY format {parts[1]!r}", lineno)
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError(path, "property before element", lineno)
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
    if fmt is None:
        raise MeshFormatError(path, "missing format line")

    vertices = None
    faces: list[tuple[int, int, int]] = []
    labels: list[int] = []
    have_labels = False

    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            if name == "vertex":
                coords = np.empty((count, 3), dtype=np.float64)
                width = len(props)
                names = [p[2] for p in props if p[0] == "scalar"]
                try:
                    ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
                except ValueError:
                    raise MeshFormatError(path, "vertex element lacks x/y/z") from None
                for i in range(count):
                    row = tokens[pos : pos + width]
                    pos += width
                    coords[i] = (float(row[ix]), float(row[iy]), float(row[iz]))
                vertices = coords
            elif name == "face":
                have_labels = any(p[0] == "scalar" and p[2] == "label" for p in props)
                for i in range(count):
                    face_label = UNLABELED
                    tris: list[tuple[int, int, int]] = []
                    for p in props:
                        if p[0] == "list":
                            n = int(tokens[pos]); pos += 1
                            idx = [int(tokens[pos + k]) for k in range(n)]
                            pos += n
                            if n < 3:
                                raise MeshFormatError(path, f"face {i} has {n} indices")
                            for k in range(1, n - 1):
                                tris.append((idx[0], idx[k], idx[k + 1]))
                        elif p[2] == "label":
                            face_label = int(tokens[pos]); pos += 1
                        else:
                            pos += 1
                    faces.extend(tris)
                    if have_labels:
                        labels.extend([face_label] * len(tris))
            else:
                # skip unknown elements
                for i in range(count):
                    for p in props:
                        if p[0] == "list":
                            n = int(tokens[pos]); pos += 1
                            pos += n
                        else:
                            pos += 1
    else:
        off = 0
        for name, count, props in elements:
            if name == "vertex":
                scalar_fmts = "".join(_PLY_SCALARS[p[1]] for p in props)
                names = [p[2] for p in props]
                rec = struct.Struct("<" + scalar_fmts)
                try:
                    ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
                except ValueError:
                    raise MeshFormatError(path, "vertex element lacks x/y/z") from None
                coords = np.empty((count, 3), dtype=np.float64)
                for i in range(count):
                    row = rec.unpack_from(body, off)
                    off += rec.size
                    coords[i] = (row[ix], row[iy], row[iz])
                vertices = coords
            elif name == "face":
                have_labels = any(p[0] == "scalar" and p[2] == "label" for p in props)
                for i in range(count):
                    face_label = UNLABELED
                    tris_before = len(faces)
                    for p in props:
                        if p[0] == "list":
                            cnt_s = struct.Struct("<" + _PLY_SCALARS[p[1]])
                            idx_s = struct.Struct("<" + _PLY_SCALARS[p[2]])
                            n = cnt_s.unpack_from(body, off)[0]
                            off += cnt_s.size
                            idx = [idx_s.unpack_from(body, off + k * idx_s.size)[0] for k in range(n)]
                            off += n * idx_s.size
                            if n < 3:
                                raise MeshFormatError(path, f"face {i} has {n} indices")
                            for k in range(1, n - 1):
                                faces.append((idx[0], idx[k], idx[k + 1]))
                        else:
                            s = struct.Struct("<" + _PLY_SCALARS[p[1]])
                            val = s.unpack_from(body, off)[0]
                            off += s.size
                            if p[2] == "label":
                                face_label = int(val)
                    if have_labels:
                        labels.extend([face_label] * (len(faces) - tris_before))
            else:
                raise MeshFormatError(path, f"cannot skip unknown binary element {name!r}")

    if vertices is None:
        raise MeshFormatError(path, "no vertex element")
    face_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    label_arr = np.array(labels, dtype=np.int64) if have_labels else None
    try:
        return TriMesh(vertices, face_arr, label_arr)
    except MeshError as exc:
        raise MeshFormatError(path, str(exc)) from exc


def _write_ply(mesh: TriMesh, path, binary: bool = False) -> None:
    labeled = mesh.face_labels is not None
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {mesh.num_vertices}")
    header += ["property double x", "property double y", "property double z"]
    header.append(f"element face {mesh.num_faces}")
    header.append("property list uchar int vertex_indices")
    if labeled:
        header.append("property int label")
    header.append("end_header")

    if binary:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(mesh.vertices.astype("<f8").tobytes())
            face_s = struct.Struct("<B3i")
            label_s = struct.Struct("<i")
            for i, f in enumerate(mesh.faces):
                fh.write(face_s.pack(3, int(f[0]), int(f[1]), int(f[2])))
                if labeled:
                    fh.write(label_s.pack(int(mesh.face_labels[i])))
    else:
        lines = header[:]
        for v in mesh.vertices:
            lines.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
        for i, f in enumerate(mesh.faces):
            row = f"3 {f[0]} {f[1]} {f[2]}"
            if labeled:
                row += f" {int(mesh.face_labels[i])}"
            lines.append(row)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
