from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (title, passed, detail), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{n:2d}] {title}: {detail}")


@pytest.fixture
def tmp_world(tmp_path):
    """Small generated world laid out as a pipeline input directory."""
    from barnscan.synthetic import make_world, write_world

    world = make_world(n_tiles=3, seed=7)
    write_world(world, tmp_path / "in")
    return world, tmp_path
