"""Volumes (vgrid, NIfTI-1 subset), meshes (OFF, ASCII PLY), CSV tables and
run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .geometry.mesh import TriangleMesh
from .geometry.volume import GridSpec, Volume

# ------------------------------------------------------------------ vgrid
VGRID_SUFFIX = ".vgrid"


def _raw_path(path: Path) -> Path:
    return path.with_suffix(".raw")


def write_vgrid(vol: Volume, path):
    path = Path(path)
    raw = _raw_path(path)
    header = {
        "dims": list(vol.grid.dims),
        "spacing": list(vol.grid.spacing),
        "origin": list(vol.grid.origin),
        "dtype": "f32",
        "byte_order": "little",
        "data_file": raw.name,
        "units": vol.units,
    }
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    raw.write_bytes(np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes())
    return path


def read_vgrid(path) -> Volume:
    path = Path(path)
    try:
        header = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: header is not valid JSON ({exc})", "header") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header must be a JSON object", "header")
    for key in ("dims", "spacing", "origin", "dtype", "byte_order"):
        if key not in header:
            raise FormatError(f"{path}: header lacks '{key}'", key)
    if header["dtype"] != "f32":
        raise FormatError(f"{path}: unsupported dtype {header['dtype']!r} (only 'f32')", "dtype")
    if header["byte_order"] != "little":
        raise FormatError(f"{path}: unsupported byte_order {header['byte_order']!r}", "byte_order")
    try:
        grid = GridSpec(tuple(header["dims"]), tuple(header["spacing"]), tuple(header["origin"]))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad grid fields ({exc})", "dims") from exc
    raw = path.parent / header.get("data_file", _raw_path(path).name)
    payload = raw.read_bytes()
    expected = grid.size * 4
    if len(payload) != expected:
        raise FormatError(
            f"{raw}: size mismatch, expected {expected} bytes for dims {grid.dims}, got {len(payload)}",
            "data_file",
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(grid.dims, order="F").astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{raw}: payload contains non-finite values", "data_file")
    return Volume(grid, data, units=header.get("units", "mm"))


# ------------------------------------------------------------------ NIfTI-1
NIFTI_HEADER_SIZE = 348
NIFTI_FLOAT32 = 16
_NIFTI_TYPES = {2: "uint8", 4: "int16", 8: "int32", 16: "float32", 64: "float64",
                256: "int8", 512: "uint16", 768: "uint32"}


def write_nifti(vol: Volume, path):
    hdr = bytearray(NIFTI_HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, NIFTI_HEADER_SIZE)
    nx, ny, nz = vol.grid.dims
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hh", hdr, 70, NIFTI_FLOAT32, 32)
    sx, sy, sz = vol.grid.spacing
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)          # vox_offset
    struct.pack_into("<ff", hdr, 112, 1.0, 0.0)      # scl_slope, scl_inter
    hdr[123] = 2                                     # xyzt_units: mm
    ox, oy, oz = vol.grid.origin
    struct.pack_into("<hh", hdr, 252, 1, 1)          # qform_code, sform_code
    struct.pack_into("<6f", hdr, 256, 0.0, 0.0, 0.0, ox, oy, oz)
    struct.pack_into("<4f", hdr, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", hdr, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, sz, oz)
    hdr[344:348] = b"n+1\x00"
    data = np.asarray(vol.data, dtype="<f4").ravel(order="F").tobytes()
    Path(path).write_bytes(bytes(hdr) + b"\x00" * 4 + data)
    return Path(path)


def _nifti_fail(path, field, msg):
    raise FormatError(f"{path}: NIfTI field '{field}': {msg}", field)


def read_nifti(path) -> Volume:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < NIFTI_HEADER_SIZE:
        _nifti_fail(path, "sizeof_hdr", f"file has only {len(blob)} bytes")
    (size,) = struct.unpack_from("<i", blob, 0)
    if size != NIFTI_HEADER_SIZE:
        if struct.unpack_from(">i", blob, 0)[0] == NIFTI_HEADER_SIZE:
            _nifti_fail(path, "sizeof_hdr", "big-endian files are not supported")
        _nifti_fail(path, "sizeof_hdr", f"expected 348, got {size}")
    magic = blob[344:348]
    if magic != b"n+1\x00":
        _nifti_fail(path, "magic", f"expected single-file 'n+1', got {magic!r}")
    dim = struct.unpack_from("<8h", blob, 40)
    ndim = dim[0]
    if ndim < 3 or ndim > 7 or any(d != 1 for d in dim[4:ndim + 1]):
        _nifti_fail(path, "dim", f"only 3-D volumes are supported, got dim={dim}")
    dims = dim[1:4]
    if min(dims) < 1:
        _nifti_fail(path, "dim", f"non-positive extent {dims}")
    datatype, bitpix = struct.unpack_from("<hh", blob, 70)
    if datatype != NIFTI_FLOAT32:
        name = _NIFTI_TYPES.get(datatype, "unknown")
        _nifti_fail(path, "datatype", f"unsupported datatype {datatype} ({name}); only float32 (16)")
    if bitpix != 32:
        _nifti_fail(path, "bitpix", f"expected 32 for float32, got {bitpix}")
    pixdim = struct.unpack_from("<8f", blob, 76)
    vox_offset, slope, inter = struct.unpack_from("<fff", blob, 108)
    qform_code, sform_code = struct.unpack_from("<hh", blob, 252)
    quat = struct.unpack_from("<6f", blob, 256)
    srow = np.array(struct.unpack_from("<12f", blob, 280), dtype=np.float64).reshape(3, 4)

    if sform_code > 0:
        lin = srow[:, :3]
        off_diag = lin - np.diag(np.diag(lin))
        if np.any(off_diag != 0) or np.any(np.diag(lin) <= 0):
            _nifti_fail(path, "srow", "orientation must be axis-aligned with positive spacing")
        spacing = tuple(np.diag(lin))
        origin = tuple(srow[:, 3])
    elif qform_code > 0:
        qfac = pixdim[0] if pixdim[0] in (-1.0, 1.0) else 1.0
        if any(q != 0 for q in quat[:3]) or qfac < 0:
            _nifti_fail(path, "quatern", "orientation must be axis-aligned (zero rotation, qfac 1)")
        spacing = tuple(float(p) for p in pixdim[1:4])
        origin = tuple(float(q) for q in quat[3:])
    else:
        spacing = tuple(float(p) for p in pixdim[1:4])
        origin = (0.0, 0.0, 0.0)
    if min(spacing) <= 0:
        _nifti_fail(path, "pixdim", f"spacing must be positive, got {spacing}")

    start = int(vox_offset)
    if start < NIFTI_HEADER_SIZE or vox_offset != start:
        _nifti_fail(path, "vox_offset", f"invalid data offset {vox_offset}")
    n = int(np.prod(dims))
    payload = blob[start:start + 4 * n]
    if len(payload) != 4 * n:
        _nifti_fail(path, "vox_offset", f"size mismatch: need {4 * n} bytes after offset {start}, got {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F").astype(np.float64)
    if slope != 0 and not (slope == 1 and inter == 0):
        data = data * slope + inter
    if not np.all(np.isfinite(data)):
        _nifti_fail(path, "data", "non-finite voxel values")
    return Volume(GridSpec(dims, spacing, origin), data)


def _is_nifti(path):
    return str(path).endswith(".nii")


def write_volume(vol: Volume, path):
    if _is_nifti(path):
        return write_nifti(vol, path)
    if str(path).endswith(VGRID_SUFFIX):
        return write_vgrid(vol, path)
    raise FormatError(f"{path}: unknown volume extension (use .vgrid or .nii)", "extension")


def read_volume(path) -> Volume:
    if _is_nifti(path):
        return read_nifti(path)
    if str(path).endswith(VGRID_SUFFIX):
        return read_vgrid(path)
    raise FormatError(f"{path}: unknown volume extension (use .vgrid or .nii)", "extension")


# ------------------------------------------------------------------ meshes
def _fmt(x):
    return f"{float(x):.9g}"


def write_off(mesh: TriangleMesh, path):
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} 0"]
    lines += [" ".join(_fmt(c) for c in v) for v in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
    return Path(path)


def _tokens(path):
    for line in Path(path).read_text(encoding="ascii", errors="strict").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _faces_to_triangles(path, faces, n_vertices):
    tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if tris.size and (tris.min() < 0 or tris.max() >= n_vertices):
        raise FormatError(f"{path}: face index out of range [0, {n_vertices})", "face")
    return tris


def _build_mesh(path, verts, tris, channels=None):
    try:
        return TriangleMesh(verts, tris, channels or {})
    except InputError as exc:
        raise FormatError(f"{path}: {exc}", "face") from exc


def read_off(path) -> TriangleMesh:
    lines = list(_tokens(path))
    if not lines or not lines[0].startswith("OFF"):
        raise FormatError(f"{path}: missing OFF magic", "magic")
    head = lines[0][3:].split() or []
    rest = lines[1:]
    if not head:
        if not rest:
            raise FormatError(f"{path}: missing element counts", "counts")
        head, rest = rest[0].split(), rest[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: bad element counts {head}", "counts") from exc
    if len(rest) < nv + nf:
        raise FormatError(f"{path}: expected {nv} vertices and {nf} faces, file is short", "counts")
    try:
        verts = np.array([[float(t) for t in rest[i].split()[:3]] for i in range(nv)], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: bad vertex line ({exc})", "vertex") from exc
    faces = []
    for line in rest[nv:nv + nf]:
        parts = line.split()
        k = int(parts[0])
        if k != 3:
            raise FormatError(f"{path}: unsupported face with {k} vertices (triangles only)", "face")
        faces.append([int(p) for p in parts[1:4]])
    return _build_mesh(path, verts.reshape(-1, 3), _faces_to_triangles(path, faces, nv))


def write_ply(mesh: TriangleMesh, path):
    names = sorted(mesh.channels)
    head = ["ply", "format ascii 1.0", f"element vertex {mesh.n_vertices}",
            "property double x", "property double y", "property double z"]
    head += [f"property double {n}" for n in names]
    head += [f"element face {mesh.n_triangles}", "property list uchar int vertex_indices", "end_header"]
    cols = [mesh.vertices] + [np.asarray(mesh.channels[n]).reshape(-1, 1) for n in names]
    table = np.hstack(cols) if names else mesh.vertices
    body = [" ".join(_fmt(x) for x in row) for row in table]
    body += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(head + body) + "\n", encoding="ascii")
    return Path(path)


def read_ply(path) -> TriangleMesh:
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0].strip() != "ply":
        raise FormatError(f"{path}: missing ply magic", "magic")
    elements = []  # [name, count, [props]]
    i = 1
    fmt = None
    while i < len(text):
        parts = text[i].split()
        i += 1
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise FormatError(f"{path}: property before element", "header")
            elements[-1][2].append(parts[1:])
        elif parts[0] == "end_header":
            break
    else:
        raise FormatError(f"{path}: no end_header", "header")
    if fmt != "ascii":
        raise FormatError(f"{path}: only ASCII PLY is supported, got format {fmt!r}", "format")
    body = [ln for ln in text[i:] if ln.strip()]
    pos = 0
    verts, channels, faces, nv = None, {}, [], 0
    for name, count, props in elements:
        rows = body[pos:pos + count]
        if len(rows) != count:
            raise FormatError(f"{path}: element '{name}' expects {count} rows", name)
        pos += count
        if name == "vertex":
            nv = count
            pnames = [p[-1] for p in props]
            for axis in "xyz":
                if axis not in pnames:
                    raise FormatError(f"{path}: vertex lacks property '{axis}'", "vertex")
            vals = np.array([[float(t) for t in r.split()] for r in rows], dtype=np.float64).reshape(count, len(pnames))
            verts = vals[:, [pnames.index(a) for a in "xyz"]]
            for j, pn in enumerate(pnames):
                if pn not in "xyz":
                    channels[pn] = vals[:, j]
        elif name == "face":
            for r in rows:
                parts = r.split()
                k = int(parts[0])
                if k != 3:
                    raise FormatError(f"{path}: unsupported face with {k} vertices (triangles only)", "face")
                faces.append([int(p) for p in parts[1:4]])
    if verts is None:
        raise FormatError(f"{path}: no vertex element", "vertex")
    return _build_mesh(path, verts, _faces_to_triangles(path, faces, nv), channels)


def write_mesh(mesh: TriangleMesh, path):
    s = str(path)
    if s.endswith(".ply"):
        return write_ply(mesh, path)
    if s.endswith(".off"):
        return write_off(mesh, path)
    raise FormatError(f"{path}: unknown mesh extension (use .ply or .off)", "extension")


def read_mesh(path) -> TriangleMesh:
    s = str(path)
    if s.endswith(".ply"):
        return read_ply(path)
    if s.endswith(".off"):
        return read_off(path)
    raise FormatError(f"{path}: unknown mesh extension (use .ply or .off)", "extension")


# ------------------------------------------------------------------ tables
def format_value(v):
    """Locale-independent text for a CSV cell; ``None``/NaN become empty."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return Path(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV", "header")
    return rows[0], rows[1:]


# ------------------------------------------------------------------ manifest
def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config: dict, seed, name="manifest.json"):
    """Hash every file under ``out_dir`` (except the manifest) into a JSON manifest."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != name)
    artifacts = {p.relative_to(out_dir).as_posix(): sha256_file(p) for p in files}
    doc = {"seed": seed, "config": config, "artifacts": artifacts}
    path = out_dir / name
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def verify_manifest(path):
    """Names of artifacts whose current hash differs from the manifest (or are missing)."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    bad = []
    for rel, digest in sorted(doc["artifacts"].items()):
        p = path.parent / rel
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(rel)
    return bad


def atomic_write_json(path, obj):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path
