"""Integer labels shared by the mesh, the assembler and the MSH reader/writer."""

from enum import IntEnum


class Region(IntEnum):
    """Triangle region labels (also used as MSH physical tags)."""

    D = 1
    ANNULUS = 2
    SHELL = 3


class Boundary(IntEnum):
    """Boundary edge tags: obstacle, medium and truncation circles."""

    OBSTACLE = 11
    MEDIUM = 12
    TRUNCATION = 13


class Condition(IntEnum):
    """Condition imposed on the obstacle boundary."""

    NONE = 0
    TRACTION_FREE = 1
    RIGID = 2
