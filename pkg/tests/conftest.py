import numpy as np
import pytest

from xsrc.grid import Gather, Grid2D, Medium, TimeAxis

# criterion number -> (passed, message); filled by test_acceptance, printed at the end
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(str(k).split(".")[0].rstrip("abcdefgh")), str(k))):
        ok, msg = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {msg}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_medium():
    return Medium.homogeneous(Grid2D(60, 40, 20.0, 20.0), 4e9, 1000.0)


@pytest.fixture(scope="session")
def small_homog():
    from xsrc.scenarios import get_scenario

    return get_scenario("small-homog")


@pytest.fixture(scope="session")
def small_lens():
    from xsrc.scenarios import get_scenario

    return get_scenario("small-lens")


@pytest.fixture(scope="session")
def small_sources(small_homog):
    from xsrc.scenarios import make_downgoing_sources

    return make_downgoing_sources(small_homog)


@pytest.fixture(scope="session")
def small_lens_sources(small_lens):
    from xsrc.scenarios import make_downgoing_sources

    return make_downgoing_sources(small_lens)


def random_gather(rng, depth=0.0, ntr=5, nt=7, dx=10.0, dt=0.01, t0=0.0):
    return Gather(depth, dx * np.arange(ntr), TimeAxis(nt, dt, t0), rng.standard_normal((ntr, nt)))


@pytest.fixture(scope="session")
def paper_homog():
    from xsrc.scenarios import get_scenario

    return get_scenario("paper-homog")


@pytest.fixture(scope="session")
def paper_lens():
    from xsrc.scenarios import get_scenario

    return get_scenario("paper-lens")


@pytest.fixture(scope="session")
def paper_sources(paper_homog):
    from xsrc.scenarios import make_downgoing_sources

    return make_downgoing_sources(paper_homog)


@pytest.fixture(scope="session")
def paper_lens_sources(paper_lens):
    from xsrc.scenarios import make_downgoing_sources

    return make_downgoing_sources(paper_lens)
