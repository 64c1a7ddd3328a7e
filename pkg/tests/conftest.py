import numpy as np
import pytest

from ivem.geometry import Polyhedron, box

REG_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3) / 2, 0.0], [0.5, np.sqrt(3) / 6, np.sqrt(2.0 / 3.0)]])
REF_TET = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def tet_poly(pts):
    """Tetrahedron with outward faces."""
    pts = np.asarray(pts, dtype=float)
    c = pts.mean(axis=0)
    faces = []
    for f in ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)):
        a, b, d = pts[list(f)]
        if np.cross(b - a, d - a) @ (a - c) < 0:
            f = (f[0], f[2], f[1])
        faces.append(f)
    return Polyhedron(pts, faces)


def unit_cube():
    return box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance line; echoed in the terminal summary."""
    line = "criterion %s: %s  %s" % (criterion, "PASS" if passed else "FAIL", detail)
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
