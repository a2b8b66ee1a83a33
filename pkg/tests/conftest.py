import numpy as np
import pytest

from duoglass import panel as pg
from duoglass.electro import MATERIALS


@pytest.fixture
def hcm():
    return MATERIALS["HCM-009"]


@pytest.fixture
def stage2():
    return pg.preset("stage2")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_panel(cols=2, rows=2, n=1):
    """A small custom panel: fast to simulate, same cell layout as stage 2/3."""
    return pg.PanelSpec(stage="custom", pixel_cols=cols, pixel_rows=rows,
                        subpixels_per_pixel_side=n, panel_width=1.0, panel_height=1.0)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
