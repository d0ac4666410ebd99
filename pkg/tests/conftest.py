import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from msdi.ingestion import write_csv
from msdi.synthetic import synthetic_series

settings.register_profile("msdi", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "msdi"))

# acceptance lines collected by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth_492():
    return synthetic_series(492, seed=9)


def write_config(directory: Path, series, **overrides) -> Path:
    """Write series.csv and a YAML config into ``directory``; return the config path."""
    import yaml

    directory.mkdir(parents=True, exist_ok=True)
    write_csv(series, directory / "series.csv")
    doc = {"input": {"csv": "series.csv"}, "seed": 42, "bootstrap_n": 100, "output_dir": "out"}
    doc.update(overrides)
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=True))
    return path
