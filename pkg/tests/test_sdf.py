import numpy as np
import pytest

from oracles import mesh_distance_ref, signed_distance_ref
from scenegrasp.fixtures import box_mesh
from scenegrasp.geometry import (
    MeshDistanceField,
    NotWatertightWarning,
    TriMesh,
    is_watertight,
    signed_distance,
)


def test_cube_center_is_inside(unit_cube):
    assert signed_distance(unit_cube, (0, 0, 0)) == pytest.approx(-0.5)


def test_cube_exterior_distance(unit_cube):
    assert signed_distance(unit_cube, (1.0, 0, 0)) == pytest.approx(0.5)


def test_watertight_detection(unit_cube, icosphere):
    assert is_watertight(unit_cube)
    assert is_watertight(icosphere)
    open_mesh = TriMesh(np.eye(3), [[0, 1, 2]])
    assert not is_watertight(open_mesh)


def test_open_mesh_sign_warns():
    open_mesh = TriMesh(np.eye(3), [[0, 1, 2]])
    fld = MeshDistanceField(open_mesh)
    with pytest.warns(NotWatertightWarning):
        fld.signed((0.0, 0.0, 0.0))


def test_nan_query_rejected(unit_cube):
    fld = MeshDistanceField(unit_cube)
    with pytest.raises(ValueError):
        fld.distance((np.nan, 0, 0))
    with pytest.raises(ValueError):
        fld.signed((0, np.inf, 0))


def test_icosphere_random_queries_match_oracle(icosphere, rng):
    fld = MeshDistanceField(icosphere)
    tri = icosphere.triangles()
    queries = rng.uniform(-1.6, 1.6, size=(200, 3))
    got = fld.signed_many(queries)
    for q, g in zip(queries, got):
        assert g == pytest.approx(signed_distance_ref(q, tri), abs=1e-6)


def test_box_distances_match_oracle(rng):
    box = box_mesh((-0.3, -0.2, 0.1), (0.4, 0.5, 0.9))
    fld = MeshDistanceField(box)
    tri = box.triangles()
    queries = rng.uniform(-1, 1.5, size=(100, 3))
    d = fld.distance_many(queries)
    for q, g in zip(queries, d):
        assert g == pytest.approx(mesh_distance_ref(q, tri), abs=1e-9)


def test_sign_flips_exactly_at_surface(icosphere, rng):
    """Bisection along random segments crossing the surface: the sign change
    happens where the unsigned distance vanishes."""
    fld = MeshDistanceField(icosphere)
    for _ in range(20):
        inside = rng.normal(size=3)
        inside = inside / np.linalg.norm(inside) * 0.3
        outside = rng.normal(size=3)
        outside = outside / np.linalg.norm(outside) * 1.8
        assert fld.signed(inside) < 0 < fld.signed(outside)
        a, b = inside, outside
        for _ in range(40):
            mid = 0.5 * (a + b)
            if fld.signed(mid) < 0:
                a = mid
            else:
                b = mid
        crossing = 0.5 * (a + b)
        assert abs(fld.signed(crossing)) < 1e-6


def test_grazing_ray_still_classified(unit_cube):
    # query aligned with cube edges: the +x primary ray hits edge-on and the
    # fallback rays must decide by majority
    fld = MeshDistanceField(unit_cube)
    assert fld.signed((0.0, 0.5, 0.5)) == pytest.approx(0.0, abs=1e-12)
    assert fld.signed((0.0, 0.0, 0.4999999)) < 0
    assert fld.signed((0.0, 0.0, 0.5000001)) > 0
