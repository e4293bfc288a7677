from __future__ import annotations

import shutil
from pathlib import Path

import numpy as np
import pytest

from pentapulse.config import bundled_scenarios, load_bundled, parse_config, run_scenario

SEED = 20240611


@pytest.fixture
def rng(record_property):
    record_property("seed", SEED)
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def bundled_runs(tmp_path_factory):
    """Every bundled scenario run twice into separate directories."""
    root = tmp_path_factory.mktemp("bundled")
    out = {}
    for name in bundled_scenarios():
        cfg = parse_config(load_bundled(name))
        runs = []
        for rep in ("a", "b"):
            d = root / rep / name
            res = run_scenario(cfg, d)
            runs.append((d, res))
        out[name] = runs
    yield out
    shutil.rmtree(root, ignore_errors=True)


def read_tree(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
