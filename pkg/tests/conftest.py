import numpy as np
import pytest

from bilevel_aero import GeometrySpec, Rect, generate_mesh


@pytest.fixture(scope="session")
def geom():
    return GeometrySpec()


@pytest.fixture(scope="session")
def empty_square():
    """[-1,1]² with no scatterers and no source/buffer regions."""
    return GeometrySpec(room=Rect(-1, 1, -1, 1), source_region=None, buffer_region=None, scatterers=())


@pytest.fixture(scope="session")
def coarse_mesh(geom):
    return generate_mesh(geom, 0.531)


@pytest.fixture(scope="session")
def mesh27(geom):
    return generate_mesh(geom, 0.27)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``; returns ``passed``."""

    def record(n, passed, detail):
        _ACCEPTANCE[n] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
