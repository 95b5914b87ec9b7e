"""Point-cloud and mesh data model, file I/O, sampling and simple transforms.

Coordinates are float64 in memory.  Files carry 32-bit floats: PLY values
are written with 9 significant digits so float32 data round-trips exactly.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DegenerateMesh,
    EmptyCloud,
    IndexOutOfRange,
    InputError,
    MalformedHeader,
    MissingCoordinateProperty,
    NonTriangleFace,
)

log = logging.getLogger(__name__)


@dataclass
class PointCloud:
    """An ordered set of 3D points with an optional category label."""

    points: np.ndarray
    label: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InputError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InputError("point coordinates must be finite")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def copy(self) -> "PointCloud":
        return PointCloud(self.points.copy(), self.label)


@dataclass
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.size == 0:
            v = v.reshape(0, 3)
        f = np.asarray(self.faces, dtype=np.int64)
        if f.size == 0:
            f = f.reshape(0, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InputError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise InputError(f"faces must have shape (m, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise IndexOutOfRange("face index outside vertex range")
        self.vertices = v
        self.faces = f

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


CloudLike = Union[PointCloud, np.ndarray, Sequence[Sequence[float]]]


def as_points(cloud: CloudLike) -> np.ndarray:
    """Return the (n, 3) float64 coordinate array behind ``cloud``."""
    if isinstance(cloud, PointCloud):
        return cloud.points
    pts = np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InputError(f"points must have shape (n, 3), got {pts.shape}")
    return pts


# --------------------------------------------------------------------------
# OFF
# --------------------------------------------------------------------------

_GLUED_OFF = re.compile(r"^OFF(?=[\s\d+-])")


def _text(data: bytes | str) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MalformedHeader("content is not ASCII") from exc
    return data


def parse_off(data: bytes | str) -> TriMesh:
    """Parse ASCII OFF content into a triangle mesh.

    Polygons with more than three vertices are fan-triangulated.  The
    ModelNet malformation where the keyword and the counts share one line
    (``OFF490 448 0``) is accepted.
    """
    lines = []
    for raw in _text(data).splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise MalformedHeader("empty OFF content")
    first = lines[0]
    if first == "OFF":
        head_tokens = []
        rest = lines[1:]
    elif _GLUED_OFF.match(first):
        head_tokens = first[3:].split()
        rest = lines[1:]
    else:
        raise MalformedHeader(f"bad OFF magic: {first[:16]!r}")

    tokens: list[str] = list(head_tokens)
    for line in rest:
        tokens.extend(line.split())
    try:
        nv, nf = int(tokens[0]), int(tokens[1])
        int(tokens[2])
    except (IndexError, ValueError) as exc:
        raise MalformedHeader("OFF header needs vertex, face and edge counts") from exc
    if nv < 0 or nf < 0:
        raise MalformedHeader("negative element count")

    pos = 3
    try:
        verts = np.array(tokens[pos:pos + 3 * nv], dtype=np.float64)
    except ValueError as exc:
        raise MalformedHeader("non-numeric vertex coordinate") from exc
    if verts.size != 3 * nv:
        raise MalformedHeader("fewer vertices than declared")
    verts = verts.reshape(nv, 3)
    pos += 3 * nv

    faces: list[tuple[int, int, int]] = []
    for _ in range(nf):
        try:
            k = int(tokens[pos])
            idx = [int(t) for t in tokens[pos + 1:pos + 1 + k]]
        except (IndexError, ValueError) as exc:
            raise MalformedHeader("truncated or non-integer face record") from exc
        if len(idx) != k:
            raise MalformedHeader("fewer faces than declared")
        pos += 1 + k
        if k < 3:
            raise NonTriangleFace(f"face with {k} vertices")
        for i in idx:
            if i < 0 or i >= nv:
                raise IndexOutOfRange(f"face index {i} with {nv} vertices")
        for j in range(1, k - 1):
            tri = (idx[0], idx[j], idx[j + 1])
            if len(set(tri)) == 3:
                faces.append(tri)
            else:
                log.debug("dropping face with repeated index %s", tri)
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(mesh: TriMesh) -> bytes:
    out = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
    out += [" ".join(f"{c:.9g}" for c in v) for v in mesh.vertices]
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    return ("\n".join(out) + "\n").encode("ascii")


# --------------------------------------------------------------------------
# PLY
# --------------------------------------------------------------------------


def parse_ply(data: bytes | str) -> PointCloud:
    text = _text(data)
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedHeader("missing 'ply' magic")
    elements: list[tuple[str, int, list[str]]] = []
    fmt = None
    end = None
    for i, raw in enumerate(lines[1:], start=1):
        parts = raw.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1] if len(parts) > 1 else None
        elif parts[0] == "element":
            if len(parts) != 3:
                raise MalformedHeader(f"bad element line: {raw!r}")
            try:
                elements.append((parts[1], int(parts[2]), []))
            except ValueError as exc:
                raise MalformedHeader(f"bad element count: {raw!r}") from exc
        elif parts[0] == "property":
            if not elements:
                raise MalformedHeader("property before any element")
            elements[-1][2].append(parts[-1])
        elif parts[0] == "end_header":
            end = i
            break
        else:
            raise MalformedHeader(f"unexpected header line: {raw!r}")
    if end is None:
        raise MalformedHeader("missing end_header")
    if fmt != "ascii":
        raise MalformedHeader(f"only ASCII PLY is supported, got format {fmt!r}")
    if not elements or elements[0][0] != "vertex":
        raise MalformedHeader("first element must be 'vertex'")
    _, n, props = elements[0]
    cols = []
    for name in ("x", "y", "z"):
        if name not in props:
            raise MissingCoordinateProperty(f"vertex element lacks property {name!r}")
        cols.append(props.index(name))
    body = lines[end + 1:end + 1 + n]
    if len(body) != n:
        raise MalformedHeader("fewer vertex rows than declared")
    pts = np.empty((n, 3), dtype=np.float64)
    for r, row in enumerate(body):
        vals = row.split()
        if len(vals) < len(props):
            raise MalformedHeader(f"vertex row {r} has {len(vals)} values")
        pts[r] = [float(vals[c]) for c in cols]
    return PointCloud(pts)


def write_ply(cloud: CloudLike) -> bytes:
    pts = as_points(cloud).astype(np.float32)
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    rows = [f"{float(x):.9g} {float(y):.9g} {float(z):.9g}" for x, y, z in pts]
    return ("\n".join(head + rows) + "\n").encode("ascii")


def parse_part_labels(data: bytes | str, n_points: int | None = None) -> np.ndarray:
    """Whitespace-separated integer part labels, one per point."""
    try:
        labels = np.array([int(t) for t in _text(data).split()], dtype=np.int64)
    except ValueError as exc:
        raise InputError("part labels must be integers") from exc
    if n_points is not None and len(labels) != n_points:
        raise InputError(f"{len(labels)} part labels for {n_points} points")
    return labels


def load_geometry(path) -> TriMesh | PointCloud:
    """Read an .off mesh or a .ply cloud from disk."""
    with open(path, "rb") as fh:
        data = fh.read()
    if str(path).lower().endswith(".off"):
        return parse_off(data)
    if str(path).lower().endswith(".ply"):
        return parse_ply(data)
    raise InputError(f"unsupported geometry file: {path}")


# --------------------------------------------------------------------------
# sampling, normalization, transforms
# --------------------------------------------------------------------------


def sample_mesh(mesh: TriMesh, n: int, rng: np.random.Generator) -> PointCloud:
    """Draw ``n`` points uniformly by area from the mesh surface."""
    if n < 1:
        raise InputError("n must be >= 1")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if not total > 0:
        raise DegenerateMesh("mesh has zero total area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.faces[tri, k]] for k in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return PointCloud(pts)


def normalize_unit_sphere(cloud: CloudLike) -> PointCloud:
    """Center on the centroid and scale so the farthest point has norm 1."""
    pts = as_points(cloud)
    if len(pts) == 0:
        raise EmptyCloud("cannot normalize an empty cloud")
    centered = pts - pts.mean(axis=0)
    radius = np.sqrt((centered ** 2).sum(axis=1)).max()
    if radius > 0:
        centered = centered / radius
    label = cloud.label if isinstance(cloud, PointCloud) else None
    return PointCloud(centered, label)


def euler_to_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cz, sz = math.cos(yaw), math.sin(yaw)
    cy, sy = math.cos(pitch), math.sin(pitch)
    cx, sx = math.cos(roll), math.sin(roll)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class TransformSpec:
    """One robustness transform.

    ``angles`` fixes the rotation's (yaw, pitch, roll); when ``None`` each
    angle is drawn uniformly from [0, 2*pi).
    """

    kind: str
    sigma: float = 0.01
    clip: float = 0.05
    range: float = 0.2
    angles: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("jitter", "translate", "rotate"):
            raise InputError(f"unknown transform kind {self.kind!r}")
        if self.sigma < 0 or self.clip < 0 or self.range < 0:
            raise InputError("sigma, clip and range must be non-negative")


def apply_transform(cloud: CloudLike, spec: TransformSpec, rng: np.random.Generator) -> PointCloud:
    pts = as_points(cloud)
    if spec.kind == "jitter":
        noise = np.clip(spec.sigma * rng.standard_normal(pts.shape), -spec.clip, spec.clip)
        out = pts + noise
    elif spec.kind == "translate":
        out = pts + rng.uniform(-spec.range, spec.range, size=3)
    else:
        angles = spec.angles if spec.angles is not None else tuple(rng.uniform(0.0, 2 * np.pi, size=3))
        out = pts @ euler_to_matrix(*angles).T
    label = cloud.label if isinstance(cloud, PointCloud) else None
    return PointCloud(out, label)


def apply_transforms(cloud: CloudLike, specs: Iterable[TransformSpec], rng: np.random.Generator) -> PointCloud:
    out = cloud if isinstance(cloud, PointCloud) else PointCloud(as_points(cloud))
    for spec in specs:
        out = apply_transform(out, spec, rng)
    return out
