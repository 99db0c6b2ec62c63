import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastoscat.dtn import fourier_coefficients
from elastoscat.mesh import BoundaryLayer, Mesh, SceneGeometry, build_scene_mesh, node_regions
from elastoscat.mshio import read_msh, write_msh
from elastoscat.norms import (boundary_l2_norm, boundary_modal_coeffs, boundary_trace, h1_norm, l2_norm,
                              sobolev_boundary_norm)
from elastoscat.space import DisplacementField, FunctionSpace
from elastoscat.tags import Boundary, Region

POLY = ((0.45, 0.0), (0.1, 0.35), (-0.4, 0.2), (-0.3, -0.3), (0.15, -0.4))


class TestGeometry:
    @pytest.mark.parametrize("kw", [dict(a=1.0), dict(a=0.0), dict(R_omega=1.6), dict(r0=2.5),
                                    dict(polygon=((0.2, 0.0), (0.0, 0.2), (-1.2, 0.0), (0.0, -0.2)))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SceneGeometry(**kw)

    def test_clockwise_polygon_rejected(self):
        with pytest.raises(ValueError):
            SceneGeometry(polygon=POLY[::-1])

    def test_min_gap(self):
        assert SceneGeometry().min_gap() == pytest.approx(0.5)


class TestBuild:
    def test_structure(self, mesh01):
        mesh01.validate()
        assert set(np.unique(mesh01.regions)) == {int(r) for r in Region}
        for tag in Boundary:
            nodes = mesh01.boundary_nodes(tag)
            assert len(nodes) == len(mesh01.tagged_edges(tag))
        assert mesh01.signed_areas().min() >= 1e-14

    def test_circles_exact(self, mesh01):
        for tag, rad in ((Boundary.OBSTACLE, 0.5), (Boundary.MEDIUM, 1.0), (Boundary.TRUNCATION, 2.0)):
            pts = mesh01.points[mesh01.boundary_nodes(tag)]
            assert np.allclose(np.hypot(*pts.T), rad, rtol=1e-14)
            assert mesh01.circle_radius(tag) == rad

    def test_region_areas_match_inscribed_polygons(self, mesh01):
        def poly(tag):
            n = len(mesh01.boundary_nodes(tag))
            R = mesh01.circle_radius(tag)
            return 0.5 * n * R**2 * math.sin(2 * math.pi / n)

        A = mesh01.signed_areas()
        d, m, t = (poly(b) for b in (Boundary.OBSTACLE, Boundary.MEDIUM, Boundary.TRUNCATION))
        for reg, exact in ((Region.D, d), (Region.ANNULUS, m - d), (Region.SHELL, t - m)):
            assert A[mesh01.regions == reg].sum() == pytest.approx(exact, rel=1e-12)

    def test_perimeter_second_order(self, geom):
        errs = [abs(build_scene_mesh(geom, h).edge_lengths(Boundary.OBSTACLE).sum() - math.pi) for h in (0.1, 0.05)]
        assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)

    def test_refinement_quadruples(self, geom, mesh01):
        fine = build_scene_mesh(geom, 0.05)
        assert fine.n_triangles >= 4 * mesh01.n_triangles * 0.95
        fine.validate()
        assert fine.n_triangles >= 3.8 * mesh01.n_triangles

    def test_too_coarse(self, geom):
        with pytest.raises(ValueError):
            build_scene_mesh(geom, 0.6)
        with pytest.raises(ValueError):
            build_scene_mesh(geom, 0.0)

    def test_boundary_layer(self, geom):
        m = build_scene_mesh(geom, 0.1, BoundaryLayer(0.005, 1.2))
        m.validate()
        rad = np.unique(np.round(np.hypot(*m.points.T), 12))
        inner = rad[(rad < 0.5) & (rad > 0.45)]
        assert inner.max() == pytest.approx(0.495, abs=1e-9)
        assert m.signed_areas()[m.regions == Region.D].sum() == pytest.approx(math.pi / 4, rel=1e-2)

    def test_polygon_obstacle(self):
        g = SceneGeometry(polygon=POLY)
        m = build_scene_mesh(g, 0.05)
        m.validate()
        x, y = np.array(POLY).T
        area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        assert m.signed_areas()[m.regions == Region.D].sum() == pytest.approx(area, rel=1e-12)
        assert not m.is_circle(Boundary.OBSTACLE)
        nodes = {tuple(p) for p in np.round(m.points, 12)}
        assert all(tuple(np.round(v, 12)) in nodes for v in POLY)

    def test_node_regions(self, mesh01):
        nr = node_regions(mesh01)
        shared = np.nonzero(nr[Region.D] & nr[Region.ANNULUS])[0]
        assert np.array_equal(np.sort(shared), np.sort(mesh01.boundary_nodes(Boundary.OBSTACLE)))

    def test_immutable(self, mesh01):
        with pytest.raises(ValueError):
            mesh01.points[0, 0] = 1.0


class TestMsh:
    def test_round_trip(self, mesh01, tmp_path):
        path = tmp_path / "scene.msh"
        write_msh(mesh01, path)
        back = read_msh(path, h=mesh01.h)
        assert np.array_equal(back.points, mesh01.points)
        assert np.array_equal(back.triangles, mesh01.triangles)
        assert np.array_equal(back.regions, mesh01.regions)
        assert sorted(map(tuple, back.edges.tolist())) == sorted(map(tuple, mesh01.edges.tolist()))

    def test_quadratic_triangles_and_orientation(self, tmp_path):
        text = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
7
1 1 0 0
2 -0.5 0.8 0
3 -0.5 -0.8 0
4 0.25 0.4 0
5 -0.5 0 0
6 0.25 -0.4 0
7 5 5 0
$EndNodes
$Elements
4
1 9 2 2 2 1 3 2 6 5 4
2 1 2 12 12 2 1
3 8 2 12 12 2 3 5
4 1 2 12 12 3 1
$EndElements
"""
        p = tmp_path / "q.msh"
        p.write_text(text)
        m = read_msh(p)
        assert m.n_nodes == 3 and m.signed_areas()[0] == pytest.approx(0.5 * 1.5 * 1.6)
        assert m.edge_tags.tolist() == [12, 12, 12]
        assert m.boundary_nodes(Boundary.MEDIUM).size == 3

    def test_binary_rejected(self, tmp_path):
        p = tmp_path / "b.msh"
        p.write_text("$MeshFormat\n2.2 1 8\n$EndMeshFormat\n")
        with pytest.raises(ValueError):
            read_msh(p)


def _field(space, fn):
    return DisplacementField(space, space.interpolate(fn))


class TestNorms:
    def test_zero(self, space01):
        assert h1_norm(_field(space01, lambda x: np.zeros((len(x), 2)))) == 0.0

    def test_constant(self, space01, mesh01):
        u = _field(space01, lambda x: np.tile([1.0, 0.0], (len(x), 1)))
        area = mesh01.signed_areas()[mesh01.regions == Region.SHELL].sum()
        assert h1_norm(u, [Region.SHELL]) == pytest.approx(math.sqrt(area), rel=1e-13)

    def test_linear_on_unit_disk(self, geom):
        space = FunctionSpace(build_scene_mesh(geom, 0.05), 2)
        u = _field(space, lambda x: np.stack([x[:, 0], 0 * x[:, 0]], axis=-1))
        val = h1_norm(u, [Region.D, Region.ANNULUS])
        assert val == pytest.approx(math.sqrt(math.pi / 4 + math.pi), rel=1e-3)
        assert l2_norm(u, [Region.D, Region.ANNULUS]) == pytest.approx(math.sqrt(math.pi / 4), rel=1e-3)

    def test_unknown_region(self, space01):
        with pytest.raises(ValueError):
            h1_norm(_field(space01, lambda x: np.zeros((len(x), 2))), [7])

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.complex_numbers(max_magnitude=10))
    def test_homogeneity_and_triangle(self, space01, seed, alpha):
        rng = np.random.default_rng(seed)
        n = space01.n_nodes
        u = DisplacementField(space01, rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2)))
        v = DisplacementField(space01, rng.standard_normal((n, 2)))
        nu = h1_norm(u)
        assert h1_norm(alpha * u) == pytest.approx(abs(alpha) * nu, rel=1e-12, abs=1e-12)
        assert h1_norm(u + v) <= nu + h1_norm(v) + 1e-12

    def test_order_independent(self, space01):
        rng = np.random.default_rng(3)
        u = DisplacementField(space01, rng.standard_normal((space01.n_nodes, 2)))
        assert h1_norm(u) == h1_norm(DisplacementField(space01, u.values.copy()))


class TestModal:
    def test_constant_trace(self, space01):
        c = boundary_modal_coeffs(_field(space01, lambda x: np.tile([1.0, 0.0], (len(x), 1))), Boundary.MEDIUM, 5)
        expected = np.zeros_like(c)
        expected[5, 0] = 1
        assert np.abs(c - expected).max() < 1e-10

    def test_single_mode(self, space01):
        def fn(x):
            return np.stack([np.exp(1j * np.arctan2(x[:, 1], x[:, 0])), 0 * x[:, 0]], axis=-1)

        c = boundary_modal_coeffs(_field(space01, fn), Boundary.TRUNCATION, 6)
        expected = np.zeros_like(c)
        expected[7, 0] = 1
        assert np.abs(c - expected).max() < 1e-10

    def test_parseval(self, space01):
        rng = np.random.default_rng(0)
        th, _, nodes = boundary_trace(_field(space01, lambda x: np.zeros((len(x), 2))), Boundary.MEDIUM)
        N = len(nodes) // 2 - 1
        c = np.zeros((2 * N + 1, 2), dtype=complex)
        c[N - 4:N + 5] = rng.standard_normal((9, 2)) + 1j * rng.standard_normal((9, 2))
        k = np.arange(-N, N + 1)
        vals = np.zeros((space01.n_nodes, 2), dtype=complex)
        p = space01.points
        ang = np.arctan2(p[:, 1], p[:, 0])
        vals[:] = np.exp(1j * np.outer(ang, k)) @ c
        u = DisplacementField(space01, vals)
        coeffs = boundary_modal_coeffs(u, Boundary.MEDIUM, N)
        assert np.abs(coeffs - c).max() < 1e-10
        direct = boundary_l2_norm(vals, space01, Boundary.MEDIUM, rule=8)
        assert sobolev_boundary_norm(coeffs, 0.0, 1.0) == pytest.approx(direct, rel=2e-3)

    def test_polygon_rejected(self):
        space = FunctionSpace(build_scene_mesh(SceneGeometry(polygon=POLY), 0.1), 1)
        with pytest.raises(ValueError):
            boundary_modal_coeffs(_field(space, lambda x: np.zeros((len(x), 2))), Boundary.OBSTACLE, 4)


class TestSobolev:
    def test_zero(self):
        assert sobolev_boundary_norm(np.zeros((9, 2)), -0.5, 1.0) == 0.0

    def test_single_mode(self):
        c = np.zeros((9, 2))
        c[4, 0] = 1
        assert sobolev_boundary_norm(c, -0.5, 1.0) == pytest.approx(math.sqrt(2 * math.pi))

    @given(st.lists(st.complex_numbers(max_magnitude=10), min_size=22, max_size=22))
    def test_monotone(self, vals):
        c = np.reshape(vals, (11, 2))
        a, b, d = (sobolev_boundary_norm(c, s, 1.3) for s in (-0.5, 0.0, 0.5))
        assert a <= b * (1 + 1e-12) and b <= d * (1 + 1e-12)

    def test_unsupported(self):
        with pytest.raises(ValueError):
            sobolev_boundary_norm(np.zeros((3, 2)), 1.0, 1.0)

    def test_l2_matches_trapezoid(self):
        th = 2 * np.pi * np.arange(64) / 64
        vals = np.stack([np.cos(3 * th), np.sin(th) + 2], axis=-1)
        c = fourier_coefficients(th, vals, 10)
        direct = math.sqrt(np.sum(np.abs(vals) ** 2) * 2 * np.pi * 1.5 / 64)
        assert sobolev_boundary_norm(c, 0.0, 1.5) == pytest.approx(direct, rel=1e-12)
