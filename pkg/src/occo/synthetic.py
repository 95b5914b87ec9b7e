"""Procedural meshes for smoke training and the desk-scale benchmarks.

Three classes (sphere, box, cylinder) with randomized proportions.  Every
face carries a part id derived from its normal: 0 = top, 1 = bottom,
2 = side, which gives the dissection probe its concept masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import TriMesh

CLASSES = ("sphere", "box", "cylinder")
PART_NAMES = ("top", "bottom", "side")


@dataclass
class LabeledMesh:
    mesh: TriMesh
    label: int
    face_parts: np.ndarray
    name: str = ""


def icosphere(subdivisions: int = 2) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(np.array(verts), np.array(faces))


def box(sx: float = 1.0, sy: float = 1.0, sz: float = 1.0) -> TriMesh:
    v = np.array([(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    v *= np.array([sx, sy, sz]) / 2
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriMesh(v, np.array(faces))


def cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 32) -> TriMesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    bot = np.column_stack([ring, np.full(segments, -height / 2)])
    verts = np.vstack([top, bot, [[0, 0, height / 2], [0, 0, -height / 2]]])
    ct, cb = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i)]
        faces += [(ct, j, i), (cb, segments + i, segments + j)]
    return TriMesh(verts, np.array(faces))


def face_parts(mesh: TriMesh) -> np.ndarray:
    """Part id per face from the direction of its normal."""
    a, b, c = (mesh.vertices[mesh.faces[:, k]] for k in range(3))
    n = np.cross(b - a, c - a)
    nz = n[:, 2] / np.maximum(np.linalg.norm(n, axis=1), 1e-300)
    parts = np.full(len(n), 2, dtype=np.int64)
    parts[nz > 0.7] = 0
    parts[nz < -0.7] = 1
    return parts


def random_shape(label: int, rng: np.random.Generator, spread: float = 0.3) -> LabeledMesh:
    """Random member of class ``label``; each extent is drawn from 1 +- ``spread``."""
    kind = CLASSES[label]
    ext = rng.uniform(1.0 - spread, 1.0 + spread, size=3)
    if kind == "sphere":
        mesh = icosphere(2)
        mesh = TriMesh(mesh.vertices * ext / 2, mesh.faces)
    elif kind == "box":
        mesh = box(*ext)
    else:
        mesh = cylinder(0.5 * ext[0], ext[2])
        mesh = TriMesh(mesh.vertices * np.array([1.0, ext[1] / ext[0], 1.0]), mesh.faces)
    return LabeledMesh(mesh, label, face_parts(mesh), kind)


def make_shapes(n_per_class: int, rng: np.random.Generator, spread: float = 0.3) -> list[LabeledMesh]:
    """``n_per_class`` random shapes of each class, interleaved by class."""
    out = []
    for _ in range(n_per_class):
        for label in range(len(CLASSES)):
            out.append(random_shape(label, rng, spread))
    return out


def sample_with_parts(shape: LabeledMesh, n: int, rng: np.random.Generator):
    """Area-weighted surface sample plus the part id of each point."""
    mesh = shape.mesh
    areas = mesh.triangle_areas()
    tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.faces[tri, k]] for k in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return pts, shape.face_parts[tri]
