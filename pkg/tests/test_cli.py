import json
import subprocess
import sys
import time
from pathlib import Path

import pytest
import yaml

from conftest import write_config
from msdi.cli import run
from msdi.index import MSDI_THRESHOLDS, SPI_THRESHOLDS
from msdi.synthetic import synthetic_series


def _cli(*args):
    return run([str(a) for a in args])


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    cfg = write_config(d, synthetic_series(60, seed=3))
    assert _cli("fit", "--config", cfg) == 0
    assert _cli("index", "--config", cfg) == 0
    return cfg, d / "out"


def test_fit_36_months_under_a_minute(tmp_path):
    cfg = write_config(tmp_path, synthetic_series(36, seed=11), bootstrap_n=1000)
    t0 = time.perf_counter()
    assert _cli("fit", "--config", cfg) == 0
    elapsed = time.perf_counter() - t0
    assert elapsed < 60, f"fit took {elapsed:.1f}s"
    doc = json.loads((tmp_path / "out" / "model.json").read_text())
    assert all(c["fit"]["bootstrap_n"] == 1000 for c in doc["copula"]["candidates"])


def test_fit_report_lists_every_candidate(fitted):
    _, out = fitted
    report = (out / "fit_report.txt").read_text()
    for name in ("Beta", "Gamma", "HalfGaussian", "GaussianMixture", "FGM", "Frank"):
        assert name in report
    doc = json.loads((out / "model.json").read_text())
    assert len(doc["rainfall"]["candidates"]) == 3
    assert {c["family"] for c in doc["copula"]["candidates"]} == {"FGM", "Frank"}
    selected = doc["rainfall"]["candidates"][doc["rainfall"]["selected"]]
    assert selected["aic_data"] == min(c["aic_data"] for c in doc["rainfall"]["candidates"])


def test_single_candidate_independence(tmp_path):
    cfg = write_config(
        tmp_path,
        synthetic_series(48, seed=4),
        rainfall_candidates=["Gamma"],
        temperature_candidates=["GaussianMixture"],
        copula_candidates=["Independence"],
        allow_rejected=True,
    )
    assert _cli("fit", "--config", cfg) == 0
    doc = json.loads((tmp_path / "out" / "model.json").read_text())
    assert doc["rainfall"]["selected"] == 0 and doc["copula"]["candidates"][0]["family"] == "Independence"


def test_index_outputs(fitted):
    _, out = fitted
    files = sorted(p.name for p in (out / "index").glob("*.csv"))
    assert files == sorted(f"{k}_{w}.csv" for k in ("msdi", "spi") for w in (3, 6, 9, 12))
    lines = (out / "index" / "msdi_3.csv").read_text().splitlines()
    assert lines[1] == "date,index,label"
    assert [ln.split(",")[2] for ln in lines[2:4]] == ["Undefined", "Undefined"]
    assert lines[4].split(",")[2] != "Undefined"
    assert len(lines) == 2 + 60


def test_every_output_carries_hashes(fitted):
    cfg, out = fitted
    assert _cli("compare", "--config", cfg) == 0
    assert _cli("plotdata", "--config", cfg) == 0
    for p in out.rglob("*"):
        if p.suffix in (".csv", ".txt"):
            first = p.read_text().splitlines()[0]
            assert first.startswith("#") and "config_sha256=" in first and "model_sha256=" in first, p
            assert "\r" not in p.read_text()


def test_plotdata(fitted):
    cfg, out = fitted
    assert _cli("plotdata", "--config", cfg) == 0
    lines = (out / "plot" / "plotdata.csv").read_text().splitlines()
    assert lines[1] == "date,window,kind,value,label,threshold_dry,threshold_xdry"
    rows = [ln.split(",") for ln in lines[2:]]
    assert len(rows) == 4 * 2 * 60
    for date, window, kind, value, label, dry, xdry in rows:
        table = MSDI_THRESHOLDS if kind == "MSDI" else SPI_THRESHOLDS
        assert (float(xdry), float(dry)) == table.cut(int(window))


def test_plotdata_empty_index_dir(tmp_path):
    cfg = write_config(tmp_path, synthetic_series(30, seed=1))
    assert _cli("plotdata", "--config", cfg) == 4


def test_compare_reports(fitted, tmp_path):
    cfg, out = fitted
    events = tmp_path / "events.csv"
    events.write_text("name,start,end\n")
    assert _cli("compare", "--config", cfg, "--events", events) == 0
    assert (out / "compare" / "report.csv").read_text().splitlines()[1:] == [
        "event,start,end,window,status,msdi_dry,msdi_extreme,spi_dry,spi_extreme"
    ]
    events.write_text("name,start,end\nold,1950,1951\nin,1982,1983\n")
    assert _cli("compare", "--config", cfg, "--events", events) == 0
    rows = (out / "compare" / "report.csv").read_text().splitlines()[2:]
    assert len(rows) == 2 * 4
    assert all(",no data," in r for r in rows if r.startswith("old,"))
    assert all(",ok," in r for r in rows if r.startswith("in,"))
    events.write_text("name,start,end\nbad,1985,1982\n")
    assert _cli("compare", "--config", cfg, "--events", events) == 2


def test_reruns_are_byte_identical(tmp_path):
    trees = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        cfg = write_config(d, synthetic_series(48, seed=8))
        for cmd in ("fit", "index", "compare", "plotdata"):
            assert _cli(cmd, "--config", cfg) == 0
        trees.append(_tree(d / "out"))
    assert trees[0] == trees[1]


def test_exit_codes(tmp_path):
    assert _cli("fit", "--config", tmp_path / "missing.yaml") == 4
    bad = write_config(tmp_path / "a", synthetic_series(30, seed=1), bootstrap_n=10)
    assert _cli("fit", "--config", bad) == 2
    noseed = tmp_path / "b" / "config.yaml"
    noseed.parent.mkdir()
    noseed.write_text(yaml.safe_dump({"input": {"csv": "series.csv"}}))
    assert _cli("fit", "--config", noseed) == 2
    (tmp_path / "c").mkdir()
    (tmp_path / "c" / "config.yaml").write_text("seed: [1,\n")
    assert _cli("fit", "--config", tmp_path / "c" / "config.yaml") == 2
    missing_csv = write_config(tmp_path / "d", synthetic_series(30, seed=1))
    (tmp_path / "d" / "series.csv").unlink()
    assert _cli("fit", "--config", missing_csv) == 4
    no_model = write_config(tmp_path / "e", synthetic_series(30, seed=1))
    assert _cli("index", "--config", no_model) == 4


def test_hash_mismatch(tmp_path):
    cfg = write_config(tmp_path, synthetic_series(36, seed=2))
    assert _cli("fit", "--config", cfg) == 0
    write_config(tmp_path, synthetic_series(36, seed=5))
    assert _cli("index", "--config", cfg) == 5


def test_seed_and_output_overrides(tmp_path):
    cfg = write_config(tmp_path, synthetic_series(36, seed=2))
    assert _cli("fit", "--config", cfg, "--seed", 7, "--output-dir", tmp_path / "alt") == 0
    doc = json.loads((tmp_path / "alt" / "model.json").read_text())
    assert doc["seed"] == 7
    assert not (tmp_path / "out").exists()
    # output location does not enter the config hash, the seed does
    assert _cli("fit", "--config", cfg, "--output-dir", tmp_path / "alt2") == 0
    doc2 = json.loads((tmp_path / "alt2" / "model.json").read_text())
    assert doc2["config_sha256"] != doc["config_sha256"]
    assert _cli("fit", "--config", cfg, "--seed", 7, "--output-dir", tmp_path / "alt3") == 0
    assert (tmp_path / "alt3" / "model.json").read_bytes() == (tmp_path / "alt" / "model.json").read_bytes()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "msdi.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "fit" in res.stdout and "plotdata" in res.stdout
    res = subprocess.run([sys.executable, "-m", "msdi.cli", "index", "--config", str(tmp_path / "nope.yaml")], capture_output=True, text=True)
    assert res.returncode == 4 and res.stderr.startswith("error[io]")


@pytest.mark.parametrize("name", ["nc_station.yaml", "synthetic.yaml"])
def test_shipped_configs_parse(name):
    from msdi.config import load_config

    cfg = load_config(Path(__file__).parent.parent / "configs" / name).validate()
    assert cfg.seed and cfg.windows == [3, 6, 9, 12] and cfg.bootstrap_n == 1000
