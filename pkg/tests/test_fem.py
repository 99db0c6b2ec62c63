import dataclasses
import math
import warnings

import numpy as np
import pytest

from elastoscat.dtn import build_dtn
from elastoscat.fem import (ScatteringProblem, Solution, assemble, element_matrices, energy_balance,
                            read_solution_values, scattered_flux, solve, solve_effective, solve_obstacle,
                            solve_problem, traction_norm, traction_on_boundary, write_region_norms,
                            write_solution)
from elastoscat.materials import ExteriorConstants, MaterialScene, isotropic_tensor
from elastoscat.mesh import Mesh, SceneGeometry, build_scene_mesh
from elastoscat.norms import h1_norm
from elastoscat.space import DisplacementField, FunctionSpace
from elastoscat.tags import Boundary, Condition, Region
from elastoscat.waves import BumpSource, eval_incident, plane_p, plane_s, point_source

SHELL_SOURCE = BumpSource((1.25, 0.1), 0.2, (0.3, 1.0))


@pytest.fixture(scope="module")
def lossy_scene(ext):
    return MaterialScene(ext, (isotropic_tensor(2.0, 1.0), 1 + 0.2j))


@pytest.fixture(scope="module")
def coarse(geom):
    mesh = build_scene_mesh(geom, 0.2)
    return mesh, FunctionSpace(mesh, 2)


def rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


class TestElement:
    def test_single_triangle_p1_stiffness(self):
        mesh = Mesh(points=[[0, 0], [1, 0], [0, 1]], triangles=[[0, 1, 2]], regions=[int(Region.SHELL)],
                    edges=np.zeros((0, 2)), edge_tags=[], h=1.0)
        space = FunctionSpace(mesh, 1)
        Ae = element_matrices(space, np.array([0]), isotropic_tensor(1.0, 1.0).table, 1.0, 0.0)[0]
        v = np.zeros(6)
        v[0::2] = mesh.points[:, 0]  # u = (x1, 0)
        assert v @ Ae.real @ v == pytest.approx(3 * 0.5, rel=1e-14)
        assert np.allclose(Ae, Ae.T, atol=1e-15)
        # rigid translations have zero energy
        t = np.tile([1.0, 0.0], 3)
        assert np.abs(Ae @ t).max() < 1e-14

    def test_mass_sign(self):
        mesh = Mesh(points=[[0, 0], [1, 0], [0, 1]], triangles=[[0, 1, 2]], regions=[int(Region.SHELL)],
                    edges=np.zeros((0, 2)), edge_tags=[], h=1.0)
        space = FunctionSpace(mesh, 2)
        t = np.tile([1.0, 0.0], 6)
        Ae = element_matrices(space, np.array([0]), isotropic_tensor(1.0, 1.0).table, 2.0, 3.0)[0]
        # K t = 0 so t.A.t = -omega^2 rho |T| = -9 * 2 * 0.5
        assert t @ Ae.real @ t == pytest.approx(-9.0, rel=1e-13)


class TestAssembly:
    def test_zero_data_zero_rhs_zero_field(self, ext, geom, coarse, dtn40):
        mesh, space = coarse
        prob = ScatteringProblem(mesh=mesh, materials=MaterialScene.homogeneous(ext), condition=Condition.RIGID,
                                 dtn=dtn40, space=space)
        sys_ = assemble(prob)
        assert not np.any(sys_.rhs)
        sol = solve(sys_)
        assert not np.any(sol.field.values)

    def test_matrix_dimension_is_free_dof_count(self, rigid01):
        s = rigid01.system
        assert s.shape[0] == s.n_fem + s.projection.shape[0]
        assert s.n_fem == s.free_dofs.size
        assert not np.any(np.isin(2 * rigid01.space.boundary_nodes(Boundary.OBSTACLE), s.free_dofs))

    def test_bulk_symmetry(self, rigid01, free01):
        assert rigid01.system.bulk_symmetry_defect() <= 1e-12
        assert free01.system.bulk_symmetry_defect() <= 1e-12

    def test_node_permutation_invariance(self, ext, geom, dtn40):
        mesh = build_scene_mesh(geom, 0.25)
        perm = np.random.default_rng(3).permutation(mesh.n_nodes)
        inv = np.argsort(perm)
        pm = Mesh(points=mesh.points[perm], triangles=inv[mesh.triangles], regions=mesh.regions,
                  edges=inv[mesh.edges], edge_tags=mesh.edge_tags, h=mesh.h, geometry=mesh.geometry,
                  circle_radii=dict(mesh.circle_radii))
        scene = MaterialScene.homogeneous(ext)
        a = solve_obstacle(scene, geom, Condition.TRACTION_FREE, plane_p(ext), mesh=mesh, dtn=dtn40)
        b = solve_obstacle(scene, geom, Condition.TRACTION_FREE, plane_p(ext), mesh=pm, dtn=dtn40)
        nv = mesh.n_nodes
        assert rel(b.field.values[:nv][inv], a.field.values[:nv]) <= 1e-10

    def test_errors(self, ext, geom, coarse):
        mesh, space = coarse
        scene = MaterialScene.homogeneous(ext)
        with pytest.raises(ValueError, match="radius"):
            ScatteringProblem(mesh=mesh, materials=scene, condition=Condition.RIGID, dtn=build_dtn(ext, 2.5, 10),
                              space=space)
        with pytest.raises(ValueError, match="region D"):
            ScatteringProblem(mesh=mesh, materials=scene, condition=Condition.NONE, dtn=build_dtn(ext, 2.0, 10),
                              space=space)
        with pytest.raises(ValueError, match="outside"):
            ScatteringProblem(mesh=mesh, materials=scene, condition=Condition.RIGID, dtn=build_dtn(ext, 2.0, 10),
                              space=space, incident=point_source(ext, (1.2, 0.0)))
        with pytest.raises(ValueError):
            solve_obstacle(scene, geom, Condition.NONE, plane_p(ext), mesh=mesh)


class TestSolve:
    def test_residual(self, rigid01, free01):
        assert rigid01.residual <= 1e-10
        assert free01.residual <= 1e-10

    def test_shell_decomposition_bit_exact(self, free01):
        sp = free01.space
        shell = sp.nodes_of_cells(free01.mesh.regions == int(Region.SHELL))
        v = free01.field.values[shell]
        assert np.array_equal(v, free01.scattered.values[shell] + free01.incident_values[shell])
        assert np.array_equal(free01.incident_values[shell], eval_incident(free01.problem.incident, sp.points[shell]))

    def test_scaling(self, rigid01):
        s = rigid01.system
        alpha = 2.5 - 1.25j
        scaled = solve(dataclasses.replace(s, rhs=alpha * s.rhs))
        assert rel(scaled.field.values, alpha * rigid01.field.values) <= 1e-12

    def test_joint_linearity(self, ext, geom, coarse, dtn40):
        mesh, space = coarse
        scene = MaterialScene(ext, (isotropic_tensor(3.0, 1.5), 1 + 0.1j))
        a, b = 0.7 + 0.2j, -1.3 + 0.4j

        def run(inc, src):
            return solve_obstacle(scene, geom, Condition.TRACTION_FREE, inc, src, mesh=mesh, space=space,
                                  dtn=dtn40).field.values

        both = run(plane_s(ext, (0.6, 0.8), amplitude=a), dataclasses.replace(SHELL_SOURCE, amplitude=b))
        parts = a * run(plane_s(ext, (0.6, 0.8)), None) + b * run(None, SHELL_SOURCE)
        assert rel(both, parts) <= 1e-12

    def test_zero_incident_zero_source(self, ext, geom, coarse, dtn40):
        mesh, space = coarse
        sol = solve_obstacle(MaterialScene.homogeneous(ext), geom, Condition.RIGID, mesh=mesh, space=space, dtn=dtn40)
        assert not np.any(sol.field.values)


class TestTraction:
    def test_linear_field_traction(self, geom, mesh01, space01):
        ext11 = ExteriorConstants(1.0, 1.0, math.pi)
        prob = ScatteringProblem(mesh=mesh01, materials=MaterialScene.homogeneous(ext11),
                                 condition=Condition.TRACTION_FREE, dtn=build_dtn(ext11, 2.0, 5), space=space01)
        u = DisplacementField(space01, space01.points.astype(complex))
        sol = Solution(problem=prob, field=u, scattered=u, incident_values=0 * u.values, modal=None, residual=0.0,
                       stats={})
        for tag, side in ((Boundary.OBSTACLE, "outer"), (Boundary.MEDIUM, "inner"), (Boundary.MEDIUM, "outer"),
                          (Boundary.TRUNCATION, "inner")):
            bf = traction_on_boundary(sol, tag, side)
            edges = mesh01.tagged_edges(tag)
            d = mesh01.points[edges[:, 1]] - mesh01.points[edges[:, 0]]
            L = np.hypot(*d.T)
            nu = np.stack([d[:, 1], -d[:, 0]], axis=-1) / L[:, None]
            # midpoints carry the edge normal exactly, vertices its length-weighted mean
            mids = np.array([space01.midpoint_of(a, b) for a, b in edges])
            pos = {n: i for i, n in enumerate(bf.nodes)}
            assert np.abs(bf.values[[pos[m] for m in mids]] - 4 * nu).max() <= 1e-12
            acc = np.zeros((mesh01.n_nodes, 2))
            w = np.zeros(mesh01.n_nodes)
            for j in range(2):
                np.add.at(acc, edges[:, j], L[:, None] * nu)
                np.add.at(w, edges[:, j], L)
            verts = np.unique(edges)
            expect = 4 * acc[verts] / w[verts, None]
            assert np.abs(bf.values[[pos[v] for v in verts]] - expect).max() <= 1e-12

    def test_rigid_traction_nonzero_trace_zero(self, rigid01):
        nodes = rigid01.space.boundary_nodes(Boundary.OBSTACLE)
        assert not np.any(rigid01.field.values[nodes])
        bf = traction_on_boundary(rigid01, Boundary.OBSTACLE, "outer")
        assert traction_norm(bf, 0.0) > 0.5

    def test_no_inner_side_for_obstacle_runs(self, rigid01):
        with pytest.raises(ValueError):
            traction_on_boundary(rigid01, Boundary.OBSTACLE, "inner")
        with pytest.raises(ValueError):
            traction_on_boundary(rigid01, Boundary.OBSTACLE, "outer", method="bogus")

    def test_traction_free_consistency_under_refinement(self, ext, geom, free01, dtn40):
        fine = solve_obstacle(MaterialScene.homogeneous(ext), geom, Condition.TRACTION_FREE, plane_p(ext), h=0.05,
                              dtn=dtn40)
        scale = traction_norm(traction_on_boundary(fine, Boundary.MEDIUM, "outer"), 0.0)
        e1 = traction_norm(traction_on_boundary(free01, Boundary.OBSTACLE, "outer"), 0.0)
        e2 = traction_norm(traction_on_boundary(fine, Boundary.OBSTACLE, "outer"), 0.0)
        assert e2 < 0.35 * e1
        assert e2 < 0.02 * scale
        weak = traction_norm(traction_on_boundary(fine, Boundary.OBSTACLE, "outer", "weak"), 0.0)
        assert weak <= 1e-8 * scale


class TestEffective:
    def test_eps_one_matches_continuous_medium(self, geom, mesh01, space01, dtn40, ext):
        ann = (isotropic_tensor(3.0, 1.5), 1.2)
        scene = MaterialScene(ext, ann)
        with pytest.warns(UserWarning, match="lossless"):
            eff = solve_effective(scene, geom, 1, 1.0, (3.0, 1.5, 1.2, 0.0), plane_p(ext), mesh=mesh01,
                                  space=space01, dtn=dtn40)
        prob = ScatteringProblem(mesh=mesh01, materials=scene.with_obstacle(*ann), condition=Condition.NONE,
                                 incident=plane_p(ext), dtn=dtn40, space=space01)
        ref = solve_problem(prob)
        assert rel(eff.field.values, ref.field.values) <= 1e-12
        inner = traction_on_boundary(eff, Boundary.OBSTACLE, "inner")
        outer = traction_on_boundary(eff, Boundary.OBSTACLE, "outer")
        assert rel(inner.values, outer.values) < 0.05

    def test_energy_identity(self, geom, mesh01, space01, dtn40, ext, lossy_scene):
        sol = solve_effective(lossy_scene, geom, 1, 1e-2, (1, 1, 1, 1), plane_p(ext), SHELL_SOURCE, mesh=mesh01,
                              space=space01, dtn=dtn40, keep_system=True)
        flux, volume = energy_balance(sol)
        assert abs(flux - volume) <= 1e-6 * abs(volume)
        assert scattered_flux(sol) > 0

    def test_lossless_obstacle_energy(self, free01):
        flux, volume = energy_balance(free01)
        assert volume == 0.0
        assert abs(flux) <= 1e-9 * scattered_flux(free01)

    def test_modeling_gap_mesh_robust(self, ext, geom, lossy_scene, dtn40):
        gaps = []
        for h in (0.1, 0.05):
            mesh = build_scene_mesh(geom, h)
            space = FunctionSpace(mesh, 2)
            ref = solve_obstacle(lossy_scene, geom, Condition.RIGID, plane_p(ext), mesh=mesh, space=space, dtn=dtn40)
            eff = solve_effective(lossy_scene, geom, 2, 1e-2, (1, 1, 1, 1), plane_p(ext), mesh=mesh, space=space,
                                  dtn=dtn40)
            gaps.append(h1_norm(eff.field - ref.field, [Region.ANNULUS, Region.SHELL]))
        assert abs(gaps[1] - gaps[0]) < 0.1 * gaps[1]


class TestSerialization:
    def test_round_trip(self, free01, tmp_path):
        p = tmp_path / "sol.txt"
        write_solution(free01, p)
        head = p.read_text().splitlines()[:3]
        assert head[0].startswith("# elastoscat solution")
        assert "omega 3.1415926535897931" in head[2] and "TRACTION_FREE" in head[2]
        assert np.array_equal(read_solution_values(p), free01.field.values)

    def test_region_norms(self, free01, tmp_path):
        p = tmp_path / "norms.csv"
        write_region_norms(free01, p)
        lines = p.read_text().splitlines()
        assert lines[0] == "region,l2,h1"
        names = [ln.split(",")[0] for ln in lines[1:]]
        assert names == ["ANNULUS", "SHELL"]
        shell = [float(x) for x in lines[2].split(",")[1:]]
        assert shell[1] == pytest.approx(h1_norm(free01.field, [Region.SHELL]), rel=1e-12)
