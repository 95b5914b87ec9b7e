"""Occluded completion dataset generation and the OCCO container format.

Layout (little-endian)::

    b"OCCO" | u16 version | u32 record count
    per record: u32 object id | u16 view id | u32 n_partial | u32 n_coarse | u32 n_fine
                | float32 xyz * (n_partial + n_coarse + n_fine)

Every sample is rounded to float32 in memory too, so a dataset read back
from disk trains exactly like the one that was generated.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, TriMesh, load_geometry, normalize_unit_sphere, sample_mesh
from .errors import AllOccluded, DegenerateMesh, InputError
from .model import CompletionSample
from .occlusion import DEFAULT_EPS_DEPTH, DEFAULT_STANDOFF, CameraIntrinsics, occlude, sample_views

log = logging.getLogger(__name__)

MAGIC = b"OCCO"
VERSION = 1
_HEAD = struct.Struct("<4sHI")
_REC = struct.Struct("<IHIII")


@dataclass(frozen=True)
class GenConfig:
    views: int = 10
    n_input: int = 256
    n_coarse: int = 64
    n_fine: int = 1024
    seed: int = 0
    standoff: float = DEFAULT_STANDOFF
    eps_depth: float = DEFAULT_EPS_DEPTH
    intrinsics: CameraIntrinsics = CameraIntrinsics()
    frame: str = "world"

    def __post_init__(self):
        if self.frame not in ("world", "camera"):
            raise InputError("frame must be 'world' or 'camera'")
        if min(self.views, self.n_input, self.n_coarse, self.n_fine) < 1:
            raise InputError("views and point counts must be >= 1")
        if self.n_coarse > self.n_fine:
            raise InputError("n_coarse cannot exceed n_fine")


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator seeded from a tuple of non-negative integers."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _normalizing(points: np.ndarray) -> tuple[np.ndarray, float]:
    center = points.mean(axis=0)
    radius = np.sqrt(((points - center) ** 2).sum(axis=1)).max()
    return center, (radius if radius > 0 else 1.0)


def _surface_sampler(shape: TriMesh | PointCloud):
    if isinstance(shape, TriMesh):
        return lambda n, rng: sample_mesh(shape, n, rng).points
    pts = shape.points
    if len(pts) == 0:
        raise DegenerateMesh("empty point cloud")
    return lambda n, rng: pts[rng.choice(len(pts), size=n, replace=n > len(pts))]


def _generate_object(obj_id: int, shape, cfg: GenConfig):
    sampler = _surface_sampler(shape)
    rng = derive_rng(cfg.seed, obj_id, 0)
    fine_raw = sampler(cfg.n_fine, rng)
    center, radius = _normalizing(fine_raw)
    fine = (fine_raw - center) / radius
    coarse = fine[np.sort(rng.choice(cfg.n_fine, size=cfg.n_coarse, replace=False))]
    partial_src = (sampler(cfg.n_input, rng) - center) / radius
    out = []
    for view_id in range(cfg.views):
        vrng = derive_rng(cfg.seed, obj_id, view_id + 1)
        view = sample_views(1, vrng, cfg.intrinsics, cfg.standoff)[0]
        ov = occlude(partial_src, view, cfg.eps_depth)
        part, co, fi = ov.cloud.points, coarse, fine
        if cfg.frame == "camera":
            # express the sample in the rotated camera frame (random pose per view)
            R = view.pose.R
            part, co, fi = part @ R.T, co @ R.T, fi @ R.T
        sample = CompletionSample(_f32(part), _f32(co), _f32(fi), obj_id, view_id)
        entry = {
            "object_id": obj_id,
            "view_id": view_id,
            "seed": [cfg.seed, obj_id, view_id + 1],
            "angles": list(view.angles),
            "visible_fraction": ov.visible_fraction,
            "n_partial": len(ov.cloud),
        }
        out.append((sample, entry))
    return out


def generate_dataset(shapes, cfg: GenConfig, threads: int = 1, names=None):
    """Occluded samples for every shape and view, plus a JSON-ready manifest.

    Objects that raise DegenerateMesh or AllOccluded are skipped and logged.
    Results do not depend on ``threads``.
    """
    shapes = list(shapes)
    names = list(names) if names is not None else [str(i) for i in range(len(shapes))]

    def work(i):
        try:
            return _generate_object(i, shapes[i], cfg)
        except (DegenerateMesh, AllOccluded) as exc:
            log.warning("skipping object %d (%s): %s", i, names[i], exc)
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(shapes))))
    else:
        results = [work(i) for i in range(len(shapes))]

    samples, entries, skipped = [], [], []
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            skipped.append({"object_id": i, "name": names[i], "error": type(res).__name__})
            continue
        for sample, entry in res:
            samples.append(sample)
            entries.append(entry)
    if not samples:
        raise InputError("every object was skipped; nothing to write")
    k = cfg.intrinsics
    manifest = {
        "format": "OCCO",
        "version": VERSION,
        "master_seed": cfg.seed,
        "intrinsics": {"f": k.f, "gamma": k.gamma, "w": k.w, "h": k.h},
        "standoff": cfg.standoff,
        "frame": cfg.frame,
        "eps_depth": cfg.eps_depth,
        "views_per_object": cfg.views,
        "counts": {"input": cfg.n_input, "coarse": cfg.n_coarse, "fine": cfg.n_fine},
        "objects": names,
        "n_objects": len(shapes) - len(skipped),
        "n_samples": len(samples),
        "mean_visible_fraction": float(np.mean([e["visible_fraction"] for e in entries])),
        "samples": entries,
        "skipped": skipped,
    }
    return samples, manifest


def encode_dataset(samples: list[CompletionSample]) -> bytes:
    parts = [_HEAD.pack(MAGIC, VERSION, len(samples))]
    for s in samples:
        parts.append(_REC.pack(s.object_id, s.view_id, len(s.partial), len(s.coarse), len(s.fine)))
        for arr in (s.partial, s.coarse, s.fine):
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_dataset(data: bytes) -> list[CompletionSample]:
    if len(data) < _HEAD.size:
        raise InputError("dataset file is truncated")
    magic, version, count = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise InputError("not an OCCO dataset (bad magic)")
    if version != VERSION:
        raise InputError(f"unsupported dataset version {version}")
    pos = _HEAD.size
    out = []
    for _ in range(count):
        if pos + _REC.size > len(data):
            raise InputError("dataset file is truncated")
        obj, view, n_p, n_c, n_f = _REC.unpack_from(data, pos)
        pos += _REC.size
        arrs = []
        for n in (n_p, n_c, n_f):
            nbytes = 12 * n
            if pos + nbytes > len(data):
                raise InputError("dataset file is truncated")
            arrs.append(np.frombuffer(data, dtype="<f4", count=3 * n, offset=pos)
                        .reshape(n, 3).astype(np.float64))
            pos += nbytes
        out.append(CompletionSample(arrs[0], arrs[1], arrs[2], obj, view))
    return out


def write_dataset(samples, manifest: dict | None, path) -> None:
    path = Path(path)
    path.write_bytes(encode_dataset(samples))
    if manifest is not None:
        m = dict(manifest)
        m["timestamps"] = {"written": _dt.datetime.now(_dt.timezone.utc).isoformat()}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(m, indent=2, sort_keys=True))


def read_dataset(path) -> list[CompletionSample]:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise InputError(f"dataset not found: {path}") from exc
    return decode_dataset(data)


def load_shapes_dir(directory) -> tuple[list, list[str]]:
    """All .off and .ply files in a directory, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".off", ".ply"))
    shapes, names = [], []
    for p in files:
        try:
            shapes.append(load_geometry(p))
            names.append(p.name)
        except InputError as exc:
            log.warning("skipping %s: %s", p.name, exc)
    return shapes, names


def normalized_cloud(shape, n: int, rng: np.random.Generator) -> PointCloud:
    return normalize_unit_sphere(_surface_sampler(shape)(n, rng))
