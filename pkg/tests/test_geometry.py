import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import REF_TET, REG_TET, tet_poly, unit_cube
from ivem.boundary_tri import triangulate_faces
from ivem.geometry import (
    GeometryError, Plane, Polyhedron, box, clip_tet_by_plane, cut_by_plane, cut_cuboid_by_plane, diameter,
    inscribed_ball_radius, tet_volumes, tetrahedralize,
)

unit = st.floats(-1.0, 1.0, allow_nan=False)


def mc_fraction(inside, n=10**7, seed=7, chunk=10**6):
    """Monte-Carlo fraction of the unit cube where ``inside`` holds, and its sigma."""
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n // chunk):
        hits += int(np.count_nonzero(inside(rng.random((chunk, 3)))))
    p = hits / n
    return p, np.sqrt(p * (1 - p) / n)


def test_plane_normalised():
    p = Plane([0.0, 0.0, 2.0], 1.0)
    assert np.linalg.norm(p.normal) == pytest.approx(1.0, abs=1e-12)
    assert p.offset == pytest.approx(0.5)
    with pytest.raises(GeometryError):
        Plane([0.0, 0.0, 0.0], 1.0)


def test_cube_halves():
    minus, plus = cut_cuboid_by_plane(unit_cube(), Plane([0, 0, 1], 0.5))
    assert minus.volume() == pytest.approx(0.5, abs=1e-15)
    assert plus.volume() == pytest.approx(0.5, abs=1e-15)
    assert minus.is_closed() and plus.is_closed()


def test_corner_cut_against_monte_carlo():
    minus, plus = cut_cuboid_by_plane(unit_cube(), Plane([1, 1, 1], 0.5))
    p, sigma = mc_fraction(lambda x: x.sum(axis=1) < 0.5)
    assert abs(minus.volume() - p) <= 3 * sigma
    assert minus.volume() == pytest.approx(1 / 48, abs=1e-15)
    assert plus.volume() == pytest.approx(47 / 48, abs=1e-15)


def test_plane_missing_cube():
    minus, plus = cut_cuboid_by_plane(unit_cube(), Plane([0, 0, 1], 2.0))
    assert plus is None and minus.volume() == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.tuples(unit, unit, unit).filter(lambda v: np.linalg.norm(v) > 0.1), st.floats(0.05, 0.95))
def test_cut_volume_additivity(n, t):
    cube = unit_cube()
    n = np.asarray(n)
    plane = Plane.through(np.full(3, t), n)
    minus, plus, _ = cut_by_plane(cube, plane)
    vol = sum(p.volume() for p in (minus, plus) if p is not None)
    assert vol == pytest.approx(1.0, abs=1e-13)
    for p in (minus, plus):
        if p is not None:
            assert p.is_closed()
            assert p.volume() > 0


def test_diameter():
    assert diameter(unit_cube().points) == pytest.approx(np.sqrt(3))
    assert diameter(np.array([[0.0, 0, 0], [3.0, 4.0, 0]])) == pytest.approx(5.0)
    corner, _ = cut_cuboid_by_plane(unit_cube(), Plane([1, 1, 1], 0.5))
    brute = max(np.linalg.norm(a - b) for a in corner.points for b in corner.points)
    assert diameter(corner.points) == pytest.approx(brute)
    assert diameter(corner.points) == pytest.approx(0.5 * np.sqrt(2))


def test_cube_tetrahedralization():
    cube = unit_cube()
    tets = tetrahedralize(cube, triangulate_faces(cube))
    assert len(tets) == 12
    np.testing.assert_allclose(tet_volumes(tets), 1 / 12, atol=1e-15)


def test_regular_tet_fan():
    poly = tet_poly(REG_TET)
    tri = triangulate_faces(poly)
    tets = tetrahedralize(poly, tri)
    assert len(tets) == 4
    assert tet_volumes(tets).sum() == pytest.approx(1 / (6 * np.sqrt(2)), rel=1e-14)


def l_prism(arm=3.0):
    base = np.array([[0, 0], [arm, 0], [arm, 1], [1, 1], [1, arm], [0, arm]], dtype=float)
    pts = np.vstack([np.column_stack([base, np.zeros(6)]), np.column_stack([base, np.ones(6)])])
    faces = [tuple(range(5, -1, -1)), tuple(range(6, 12))]
    for i in range(6):
        j = (i + 1) % 6
        faces.append((i, j, j + 6, i + 6))
    return Polyhedron(pts, faces)


def test_l_shape_fan_rejected():
    poly = l_prism()
    assert poly.volume() == pytest.approx(5.0)
    with pytest.raises(GeometryError):
        tetrahedralize(poly, triangulate_faces(poly))


def test_clip_reference_tet():
    m, p = clip_tet_by_plane(REF_TET, Plane([1, 0, 0], 0.5))
    assert np.abs(tet_volumes(m)).sum() == pytest.approx(7 / 48, abs=1e-15)
    assert np.abs(tet_volumes(p)).sum() == pytest.approx(1 / 48, abs=1e-15)
    pm, sigma = mc_fraction(lambda x: (x.sum(axis=1) <= 1) & (x[:, 0] > 0.5), n=4 * 10**6)
    assert abs(np.abs(tet_volumes(p)).sum() - pm) <= 3 * sigma


def test_clip_through_face():
    m, p = clip_tet_by_plane(REF_TET, Plane([0, 0, 1], 0.0))
    assert len(m) == 0 and len(p) == 1
    assert tet_volumes(p)[0] == pytest.approx(1 / 6)


def test_clip_case_table():
    # one vertex alone on a side: 1 tet there, a 3-tet prism on the other
    m, p = clip_tet_by_plane(REF_TET, Plane([1, 1, 1], 0.3))
    assert (len(m), len(p)) == (1, 3)
    m, p = clip_tet_by_plane(REF_TET, Plane([-1, -1, -1], -0.3))
    assert (len(m), len(p)) == (3, 1)


@settings(max_examples=80, deadline=None)
@given(st.tuples(unit, unit, unit).filter(lambda v: np.linalg.norm(v) > 0.1), st.floats(-0.2, 0.8))
def test_clip_additivity(n, t):
    plane = Plane(np.asarray(n), t)
    m, p = clip_tet_by_plane(REF_TET, plane)
    vm, vp = tet_volumes(m), tet_volumes(p)
    assert np.all(vm > 0) and np.all(vp > 0)
    assert vm.sum() + vp.sum() == pytest.approx(1 / 6, abs=1e-14)
    for tets, sign in ((m, -1), (p, 1)):
        if len(tets):
            d = plane.signed_distance(tets.reshape(-1, 3))
            assert np.all(sign * d >= -1e-12)


def test_inscribed_ball():
    assert inscribed_ball_radius(unit_cube()) == pytest.approx(0.5, abs=1e-9)
    assert inscribed_ball_radius(tet_poly(REG_TET)) == pytest.approx(1 / (2 * np.sqrt(6)), abs=1e-9)
    for t in (1e-1, 1e-3, 1e-6):
        slab = box([0, 0, 0], [1, 1, t])
        assert inscribed_ball_radius(slab) == pytest.approx(t / 2, rel=1e-6)


def test_inscribed_ball_rejects_nonconvex():
    with pytest.raises(GeometryError, match="convex"):
        inscribed_ball_radius(l_prism())
