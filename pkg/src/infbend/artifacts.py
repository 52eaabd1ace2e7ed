"""On-disk artifacts: atomic writes, OBJ meshes, JSON reports, stage state."""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def atomic_write(path, data: str | bytes) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def oriented_triangles(vertices, triangles, normal) -> np.ndarray:
    """Reorder each triangle so its geometric normal agrees with ``normal``
    (evaluated as the vertex average)."""
    tri = np.array(triangles, dtype=np.int64, copy=True)
    p0, p1, p2 = (vertices[tri[:, k]] for k in range(3))
    geo = np.cross(p1 - p0, p2 - p0)
    ref = normal[tri].mean(axis=1)
    flip = np.einsum("ij,ij->i", geo, ref) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def obj_text(vertices, triangles, comment: str = "") -> str:
    lines = [f"# {line}" for line in comment.splitlines()] if comment else []
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in np.asarray(vertices, float)]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(triangles, np.int64)]
    return "\n".join(lines) + "\n"


def read_obj(text: str):
    verts, faces = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.asarray(verts, float).reshape(-1, 3), np.asarray(faces, np.int64).reshape(-1, 3)


def _clean(obj):
    """JSON-safe conversion: numpy scalars/arrays, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, json_text(obj))


def write_state(path, **arrays) -> Path:
    """Stage state as an uncompressed ``.npz`` archive (atomic)."""
    import io

    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return atomic_write(path, buf.getvalue())


def read_state(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k] for k in data.files}
