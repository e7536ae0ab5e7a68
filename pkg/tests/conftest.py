import time

import pytest

from vlab.cli import bundled_script
from vlab.scene import build_scene
from vlab.script import parse_script, run_script


class CanonicalRun:
    """One full physics run of the shipped brown-ring protocol.

    Expensive (a few seconds), so it is computed once per session and
    shared by every test that inspects the canonical outcome.
    """

    def __init__(self):
        self.max_pipette_fill = 0
        self.world = build_scene(seed=0)
        self.particle_count = len(self.world.ids)
        script = parse_script(bundled_script("brown_ring.lab"))

        def hook(w):
            fill = len(w.pipette_contents())
            if fill > self.max_pipette_fill:
                self.max_pipette_fill = fill

        t0 = time.perf_counter()
        self.report = run_script(script, self.world, snapshot_hook=hook,
                                 snapshot_every=1)
        self.elapsed = time.perf_counter() - t0


@pytest.fixture(scope="session")
def canonical():
    return CanonicalRun()


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance gate verdicts where capture cannot hide them."""
    try:
        from tests.test_acceptance import GATE_LINES
    except ImportError:
        from test_acceptance import GATE_LINES
    if GATE_LINES:
        terminalreporter.section("acceptance gates")
        for line in GATE_LINES:
            terminalreporter.write_line(line)
