import math

import pytest

from elastoscat.dtn import build_dtn
from elastoscat.fem import solve_obstacle
from elastoscat.materials import ExteriorConstants, MaterialScene
from elastoscat.mesh import SceneGeometry, build_scene_mesh
from elastoscat.space import FunctionSpace
from elastoscat.tags import Condition
from elastoscat.waves import plane_p


@pytest.fixture(scope="session")
def ext():
    return ExteriorConstants(2.0, 1.0, math.pi)


@pytest.fixture(scope="session")
def geom():
    return SceneGeometry()


@pytest.fixture(scope="session")
def mesh01(geom):
    return build_scene_mesh(geom, 0.1)


@pytest.fixture(scope="session")
def space01(mesh01):
    return FunctionSpace(mesh01, 2)


@pytest.fixture(scope="session")
def dtn40(ext):
    return build_dtn(ext, 2.0, 40)


def _obstacle(ext, geom, mesh, space, dtn, bc):
    return solve_obstacle(MaterialScene.homogeneous(ext), geom, bc, plane_p(ext), mesh=mesh, space=space, dtn=dtn,
                          keep_system=True)


@pytest.fixture(scope="session")
def rigid01(ext, geom, mesh01, space01, dtn40):
    return _obstacle(ext, geom, mesh01, space01, dtn40, Condition.RIGID)


@pytest.fixture(scope="session")
def free01(ext, geom, mesh01, space01, dtn40):
    return _obstacle(ext, geom, mesh01, space01, dtn40, Condition.TRACTION_FREE)
