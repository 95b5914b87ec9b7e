"""Camera projection, hidden-point removal and view sampling.

A view maps world points through ``K @ (R @ p + t + standoff * e_z)``.
Visibility is decided in pixel space: points are visited front to back and
a point is hidden when the triangulated surface of the points already
found visible covers its pixel at a nearer depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import ORIENT_BOUND, orient_sign, plane_depth
from .cloud import CloudLike, PointCloud, TriMesh, as_points, euler_to_matrix
from .errors import AllOccluded, EmptyCloud, InputError, NonPositiveDepth, SingularIntrinsics

DEDUP_TOL = 1e-9
DEFAULT_EPS_DEPTH = 1e-4
DEFAULT_STANDOFF = 3.0


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float = 1000.0
    gamma: float = 0.0
    w: float = 1600.0
    h: float = 1200.0

    def __post_init__(self):
        if not (self.f > 0 and self.w > 0 and self.h > 0):
            raise InputError("intrinsics need f > 0, w > 0, h > 0")

    @property
    def K(self) -> np.ndarray:
        return np.array([
            [self.f, self.gamma, self.w / 2],
            [0.0, self.f, self.h / 2],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True)
class RigidPose:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64)
        if R.shape != (3, 3) or t.shape != (3,):
            raise InputError("pose needs a 3x3 rotation and a 3-vector translation")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise InputError("R is not a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)


@dataclass(frozen=True)
class ViewSpec:
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    pose: RigidPose = field(default_factory=RigidPose)
    standoff: float = DEFAULT_STANDOFF
    angles: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.standoff > 0:
            raise InputError("standoff must be positive")

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "f": k.f, "gamma": k.gamma, "w": k.w, "h": k.h,
            "R": self.pose.R.tolist(), "t": self.pose.t.tolist(),
            "standoff": self.standoff,
            "angles": list(self.angles) if self.angles is not None else None,
        }


@dataclass
class CamPoints:
    """Projected points, one row per input point (struct of arrays)."""

    cam: np.ndarray          # (n, 3) homogeneous camera coordinates
    uv: np.ndarray           # (n, 2) pixel coordinates
    depth: np.ndarray        # (n,)
    source_index: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.depth)

    def subset(self, mask_or_index) -> "CamPoints":
        return CamPoints(self.cam[mask_or_index], self.uv[mask_or_index],
                         self.depth[mask_or_index], self.source_index[mask_or_index])


@dataclass
class OccludedView:
    cloud: PointCloud
    visible_mask: np.ndarray
    view: ViewSpec

    @property
    def visible_fraction(self) -> float:
        return float(self.visible_mask.mean())


def project_to_camera(cloud: CloudLike, view: ViewSpec) -> CamPoints:
    pts = as_points(cloud)
    if len(pts) == 0:
        raise EmptyCloud("cannot project an empty cloud")
    X = pts @ view.pose.R.T + view.pose.t
    X[:, 2] += view.standoff
    if np.any(X[:, 2] <= 0):
        raise NonPositiveDepth(
            f"{int((X[:, 2] <= 0).sum())} points at non-positive depth; increase the standoff")
    cam = X @ view.intrinsics.K.T
    z = cam[:, 2]
    uv = cam[:, :2] / z[:, None]
    return CamPoints(cam, uv, z.copy(), np.arange(len(pts)))


def unproject(campoints: CamPoints, view: ViewSpec) -> PointCloud:
    k = view.intrinsics
    if k.f == 0:
        raise SingularIntrinsics("focal length is zero")
    z = campoints.depth
    if np.any(z <= 0):
        raise NonPositiveDepth("cannot unproject points at non-positive depth")
    xc = campoints.uv[:, 0] * z
    yc = campoints.uv[:, 1] * z
    Y = (yc - (k.h / 2) * z) / k.f
    X = (xc - k.gamma * Y - (k.w / 2) * z) / k.f
    Z = z - view.standoff
    q = np.stack([X, Y, Z], axis=1) - view.pose.t
    return PointCloud(q @ view.pose.R)


def delaunay_2d(pixels) -> TriMesh:
    """Delaunay triangulation of 2D points (returned with z = 0).

    Points closer than 1e-9 are merged; a collinear input yields no
    triangles.  Faces are counter-clockwise index triples into ``pixels``.
    """
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    verts = np.column_stack([px, np.zeros(len(px))])
    if len(px) < 3:
        return TriMesh(verts)
    tris, _ = kernels.delaunay(px[:, 0].tolist(), px[:, 1].tolist(), DEDUP_TOL)
    return TriMesh(verts, np.array(tris, dtype=np.int64).reshape(-1, 3))


def visibility_zbuffer(campoints: CamPoints, eps_depth: float = DEFAULT_EPS_DEPTH) -> np.ndarray:
    """Boolean visibility mask, computed with the incremental kernel."""
    if len(campoints) == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(kernels.zbuffer_visibility(
        campoints.uv[:, 0].tolist(), campoints.uv[:, 1].tolist(),
        campoints.depth.tolist(), float(eps_depth), DEDUP_TOL), dtype=bool)


def _covering_scan(u, v, faces, pu, pv):
    """Indices of faces whose closed triangle contains (pu, pv), by full scan."""
    if len(faces) == 0:
        return []
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    inside = np.ones(len(faces), dtype=bool)
    for p, q in ((b, c), (c, a), (a, b)):
        l = (u[p] - pu) * (v[q] - pv)
        r = (v[p] - pv) * (u[q] - pu)
        det = l - r
        bound = ORIENT_BOUND * (np.abs(l) + np.abs(r))
        sign = np.where(det > bound, 1, np.where(-det > bound, -1, 0))
        for k in np.flatnonzero(sign == 0):
            sign[k] = orient_sign(u[p[k]], v[p[k]], u[q[k]], v[q[k]], pu, pv)
        inside &= sign >= 0
    return np.flatnonzero(inside).tolist()


def visibility_reference(campoints: CamPoints, eps_depth: float = DEFAULT_EPS_DEPTH) -> np.ndarray:
    """Same contract as :func:`visibility_zbuffer`, by brute force.

    Re-triangulates the visible surface from scratch whenever it grows and
    tests every point against every triangle.
    """
    n = len(campoints)
    u_arr = campoints.uv[:, 0]
    v_arr = campoints.uv[:, 1]
    u = u_arr.tolist()
    v = v_arr.tolist()
    depth = campoints.depth.tolist()
    order = sorted(range(n), key=lambda i: (depth[i], i))
    mask = np.zeros(n, dtype=bool)
    surface: list[int] = []
    faces = np.zeros((0, 3), dtype=np.int64)
    tol2 = DEDUP_TOL * DEDUP_TOL
    for i in order:
        hidden = False
        for k in _covering_scan(u_arr, v_arr, faces, u[i], v[i]):
            a, b, c = sorted(faces[k].tolist())
            if plane_depth(u, v, depth, a, b, c, u[i], v[i]) < depth[i] - eps_depth:
                hidden = True
                break
        if hidden:
            continue
        mask[i] = True
        dup = False
        for j in surface:
            du = u[i] - u[j]
            dv = v[i] - v[j]
            if du * du + dv * dv <= tol2:
                dup = True
                break
        if dup:
            continue
        surface.append(i)
        if len(surface) >= 3:
            sub = delaunay_2d(np.column_stack([u_arr[surface], v_arr[surface]]))
            faces = np.asarray(surface, dtype=np.int64)[sub.faces]
    return mask


def occlude(cloud: CloudLike, view: ViewSpec, eps_depth: float = DEFAULT_EPS_DEPTH) -> OccludedView:
    """Remove the points of ``cloud`` that ``view`` cannot see."""
    cp = project_to_camera(cloud, view)
    mask = visibility_zbuffer(cp, eps_depth)
    if not mask.any():
        raise AllOccluded("no point survived occlusion")
    back = unproject(cp.subset(mask), view)
    label = cloud.label if isinstance(cloud, PointCloud) else None
    return OccludedView(PointCloud(back.points, label), mask, view)


def sample_views(V: int, rng: np.random.Generator,
                 intrinsics: CameraIntrinsics | None = None,
                 standoff: float = DEFAULT_STANDOFF) -> list[ViewSpec]:
    """Random viewpoints with yaw, pitch and roll uniform on [0, 2*pi)."""
    if V < 1:
        raise InputError("V must be >= 1")
    intrinsics = intrinsics or CameraIntrinsics()
    angles = rng.uniform(0.0, 2 * np.pi, size=(V, 3))
    return [
        ViewSpec(intrinsics, RigidPose(euler_to_matrix(*a), np.zeros(3)), standoff,
                 tuple(float(x) for x in a))
        for a in angles
    ]
