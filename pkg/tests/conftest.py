import shutil
from pathlib import Path

import pytest

from singular_functions import Grid, GridFn, bump_solution, derive_datum, power

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def grid():
    return Grid(1.0, 512)


@pytest.fixture
def fine_grid():
    return Grid(1.0, 4096)


@pytest.fixture
def phi_third():
    """|s|^(-1/3)"""
    return power(1.0, 1.0 / 3.0)


@pytest.fixture
def a_one(grid):
    return GridFn.constant(grid, 1.0)


@pytest.fixture
def parabola(grid):
    """x(1-x) with zero ends."""
    return bump_solution(1.0, 1.0, grid)


@pytest.fixture
def parabola_datum(a_one, parabola, phi_third):
    """Datum for which x(1-x) is a weak solution with c = 0."""
    return derive_datum(a_one, parabola, phi_third, 0.0)


@pytest.fixture
def no_out_env(monkeypatch):
    monkeypatch.delenv("SFL_OUT", raising=False)


@pytest.fixture
def scenario_file(tmp_path):
    """Copy a gallery scenario into tmp_path, optionally rewriting lines."""

    def make(name: str, replace: dict = None) -> Path:
        target = tmp_path / f"{name}.toml"
        shutil.copy(SCENARIO_DIR / f"{name}.toml", target)
        if replace:
            text = target.read_text()
            for old, new in replace.items():
                assert old in text, f"{old!r} not in {name}.toml"
                text = text.replace(old, new)
            target.write_text(text)
        return target

    return make
