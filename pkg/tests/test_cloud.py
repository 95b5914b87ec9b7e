import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occo.cloud import (PointCloud, TransformSpec, TriMesh, apply_transform, apply_transforms,
                        euler_to_matrix, load_geometry, normalize_unit_sphere, parse_off,
                        parse_part_labels, parse_ply, sample_mesh, write_off, write_ply)
from occo.errors import (DegenerateMesh, IndexOutOfRange, InputError, MalformedHeader,
                         MissingCoordinateProperty, NonTriangleFace)
from occo.synthetic import box, icosphere

CUBE_OFF = """OFF
8 6 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
4 0 3 2 1
4 4 5 6 7
4 0 1 5 4
4 2 3 7 6
4 1 2 6 5
4 0 4 7 3
"""


def test_cube_quads_fan_split():
    mesh = parse_off(CUBE_OFF)
    assert mesh.vertices.shape == (8, 3)
    assert mesh.faces.shape == (12, 3)
    assert np.isclose(mesh.triangle_areas().sum(), 6.0)


def test_glued_header_modelnet_style():
    mesh = icosphere(3)
    assert len(mesh.vertices) == 642
    # build a 490-vertex / 448-face mesh out of the sphere's pieces
    faces = mesh.faces[:448]
    used = np.unique(faces)
    keep = np.concatenate([used, np.setdiff1d(np.arange(len(mesh.vertices)), used)])[:490]
    assert len(used) <= 490
    remap = {int(o): i for i, o in enumerate(keep)}
    body = "\n".join(" ".join(f"{x:.6f}" for x in mesh.vertices[o]) for o in keep)
    fbody = "\n".join("3 " + " ".join(str(remap[int(i)]) for i in f) for f in faces)
    text = f"OFF490 448 0\n{body}\n{fbody}\n"
    parsed = parse_off(text)
    assert parsed.vertices.shape == (490, 3)
    assert parsed.faces.shape == (448, 3)


def test_off_errors():
    with pytest.raises(MalformedHeader):
        parse_off("OFZ\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    with pytest.raises(IndexOutOfRange):
        parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n")
    with pytest.raises(NonTriangleFace):
        parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n2 0 1\n")
    with pytest.raises(MalformedHeader):
        parse_off("OFF\n3 1 0\n0 0 0\n")


def test_off_roundtrip_and_comments():
    mesh = box(1, 2, 3)
    back = parse_off(write_off(mesh))
    np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-9)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    commented = "# made by hand\nOFF\n3 1 0 # counts\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    assert parse_off(commented).faces.shape == (1, 3)


def test_ply_three_points_and_roundtrip(rng):
    text = ("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
            "property float z\nend_header\n0 0 0\n1 2 3\n-1 0.5 2\n")
    cloud = parse_ply(text)
    assert len(cloud) == 3
    np.testing.assert_allclose(cloud.points[1], [1, 2, 3])
    pts = rng.normal(size=(50, 3))
    back = parse_ply(write_ply(pts))
    np.testing.assert_array_equal(back.points.astype(np.float32), pts.astype(np.float32))


def test_ply_extra_properties_and_errors():
    text = ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float nx\nproperty float x\n"
            "property float y\nproperty float z\nend_header\n9 1 2 3\n9 4 5 6\n")
    np.testing.assert_allclose(parse_ply(text).points, [[1, 2, 3], [4, 5, 6]])
    with pytest.raises(MissingCoordinateProperty):
        parse_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
                  "property float y\nend_header\n0 0\n")
    with pytest.raises(MalformedHeader):
        parse_ply("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(MalformedHeader):
        parse_ply("plx\n")


def test_part_labels():
    np.testing.assert_array_equal(parse_part_labels("1 2\n3\n"), [1, 2, 3])
    with pytest.raises(InputError):
        parse_part_labels("1 2", n_points=3)
    with pytest.raises(InputError):
        parse_part_labels("1 a")


def test_load_geometry(tmp_path):
    (tmp_path / "m.off").write_bytes(write_off(box()))
    (tmp_path / "c.ply").write_bytes(write_ply(np.eye(3)))
    assert isinstance(load_geometry(tmp_path / "m.off"), TriMesh)
    assert isinstance(load_geometry(tmp_path / "c.ply"), PointCloud)
    (tmp_path / "x.obj").write_text("")
    with pytest.raises(InputError):
        load_geometry(tmp_path / "x.obj")


def test_sample_single_triangle_on_plane(rng):
    tri = TriMesh([[0, 0, 1], [1, 0, 2], [0, 1, 3]], [[0, 1, 2]])
    pts = sample_mesh(tri, 10, rng).points
    # plane: z = 1 + x + 2y
    np.testing.assert_allclose(pts[:, 2], 1 + pts[:, 0] + 2 * pts[:, 1], atol=1e-9)
    assert (pts[:, :2] >= -1e-12).all() and (pts[:, 0] + pts[:, 1] <= 1 + 1e-12).all()


def test_sample_area_weighting(rng):
    # areas 1 and 3
    mesh = TriMesh([[0, 0, 0], [2, 0, 0], [0, 1, 0], [10, 0, 0], [13, 0, 0], [10, 2, 0]],
                   [[0, 1, 2], [3, 4, 5]])
    np.testing.assert_allclose(mesh.triangle_areas(), [1, 3])
    pts = sample_mesh(mesh, 40000, rng).points
    second = int((pts[:, 0] >= 10 - 1e-12).sum())
    assert abs(second - 30000) <= 500


def test_sample_degenerate(rng):
    flat = TriMesh([[0, 0, 0], [1, 1, 1], [2, 2, 2]], [[0, 1, 2]])
    with pytest.raises(DegenerateMesh):
        sample_mesh(flat, 5, rng)


def test_normalize_examples(rng):
    out = normalize_unit_sphere([[2, 0, 0], [4, 0, 0]]).points
    np.testing.assert_allclose(out, [[-1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(normalize_unit_sphere([[5, 5, 5]]).points, [[0, 0, 0]])
    once = normalize_unit_sphere(rng.normal(size=(100, 3)))
    np.testing.assert_allclose(normalize_unit_sphere(once).points, once.points, atol=1e-9)


def test_transforms(rng):
    pts = rng.normal(size=(64, 3))
    same = apply_transform(pts, TransformSpec("jitter", sigma=0.0), rng).points
    np.testing.assert_array_equal(same, pts)
    moved = apply_transform(pts, TransformSpec("translate", range=0.3), rng).points
    shift = moved.mean(0) - pts.mean(0)
    assert np.abs(shift).max() <= 0.3
    np.testing.assert_allclose(moved - shift, pts, atol=1e-9)
    jit = apply_transform(pts, TransformSpec("jitter", sigma=1.0, clip=0.05), rng).points
    assert np.abs(jit - pts).max() <= 0.05 + 1e-15
    rot = apply_transform(pts, TransformSpec("rotate", angles=(0.3, 1.1, -0.4)), rng).points
    np.testing.assert_allclose(rot, pts @ euler_to_matrix(0.3, 1.1, -0.4).T)
    np.testing.assert_allclose(np.linalg.norm(rot, axis=1), np.linalg.norm(pts, axis=1))
    chained = apply_transforms(PointCloud(pts, label=4), [TransformSpec("jitter")], rng)
    assert chained.label == 4
    with pytest.raises(InputError):
        TransformSpec("shear")


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_euler_is_rotation(yaw, pitch, roll):
    R = euler_to_matrix(yaw, pitch, roll)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(R), 1.0)


def test_cloud_validation():
    with pytest.raises(InputError):
        PointCloud(np.zeros((3, 2)))
    with pytest.raises(InputError):
        PointCloud([[0, 0, np.nan]])
    with pytest.raises(IndexOutOfRange):
        TriMesh(np.zeros((3, 3)), [[0, 1, 3]])
