"""End-to-end steps behind the CLI subcommands.

Output layout under ``config.output_dir``::

    series.csv                  (fetch)
    model.json, fit_report.txt  (fit)
    gof/gof_<family>.csv        (fit; bootstrap replicates)
    index/<kind>_<n>.csv        (index)
    compare/...                 (compare)
    plot/plotdata.csv           (plotdata)

Every CSV and text output starts with a ``# config_sha256=... model_sha256=...``
line. Nothing time-dependent is written, so reruns are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import zlib
from pathlib import Path

import numpy as np

from . import copulas as cop
from . import distributions as dist
from . import index as idx
from .config import PipelineConfig
from .dependence import kendall_tau, pit, pseudo_observations
from .errors import DataIOError, FitError, ModelMismatchError, ValidationError
from .ingestion import ClimateSeries, favorable_fraction, fetch_remote, load_csv, write_csv

__all__ = ["load_series", "cmd_fetch", "cmd_fit", "cmd_index", "cmd_compare", "cmd_plotdata", "MODEL_FILE"]

logger = logging.getLogger(__name__)

MODEL_FILE = "model.json"
MODEL_SCHEMA = "msdi.model"
MODEL_VERSION = 1
DEFAULT_EVENTS = Path(__file__).parent / "data" / "nc_drought_events.csv"


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _header(config: PipelineConfig, model_hash: str = "-") -> str:
    return f"config_sha256={config.sha256} model_sha256={model_hash}"


def load_series(config: PipelineConfig) -> ClimateSeries:
    if config.input_csv is not None:
        return load_csv(config.input_csv)
    r = config.remote
    return fetch_remote(
        float(r["latitude"]),
        float(r["longitude"]),
        str(r["start"]),
        str(r["end"]),
        r.get("endpoint", "nasa-power"),
        cache=config.cache_dir,
        station_id=r.get("station_id"),
    )


def cmd_fetch(config: PipelineConfig) -> Path:
    series = load_series(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    return write_csv(series, config.output_dir / "series.csv")


# ---------------------------------------------------------------- fit


def _fit_candidates(families, data, config, label):
    fits = []
    for fam in families:
        if fam is dist.Family.GAUSSIAN_MIXTURE:
            fits.append(dist.fit_gmm(data, config.gmm_components, config.seed))
        else:
            fits.append(dist.fit_mle(fam, data))
        logger.info("%s: %s AIC=%.3f", label, fam.value, fits[-1].aic_data)
    return fits, dist.select_by_aic(fits)


def _family_seed(seed: int, family) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, zlib.crc32(family.value.encode())])


def fit_models(config: PipelineConfig, series: ClimateSeries) -> tuple[dict, list]:
    """Fit marginals and copulas; return the model document (not yet written) and the copula fits."""
    series.require_fit_length()
    rain, temp = series.rainfall, series.temperature
    rain_fits, rain_best = _fit_candidates(config.rainfall_candidates, rain, config, "rainfall")
    temp_fits, temp_best = _fit_candidates(config.temperature_candidates, temp, config, "temperature")

    po = pseudo_observations(rain, temp)
    tau_ranks = kendall_tau(po)
    tau_pit = kendall_tau(pit(rain_best, rain), pit(temp_best, temp))

    copula_fits, refused = [], {}
    for fam in config.copula_candidates:
        try:
            model = cop.gof_pvalue(fam, po, config.bootstrap_n, _family_seed(config.seed, fam))
        except ValidationError as exc:
            refused[fam.value] = str(exc)
            logger.warning("copula %s refused: %s", fam.value, exc)
            continue
        copula_fits.append(model)
    if not copula_fits:
        raise FitError(f"no admissible copula candidate: {refused}")
    best = cop.select_copula(copula_fits, allow_rejected=config.allow_rejected)

    def _sel(fits, chosen):
        return {"selected": fits.index(chosen), "candidates": [f.to_dict() for f in fits]}

    return {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "config_sha256": config.sha256,
        "series_sha256": series.sha256,
        "station": {"id": series.station.id, "latitude": series.station.latitude, "longitude": series.station.longitude},
        "months": {"start": str(series.start), "end": str(series.end), "n": len(series)},
        "seed": config.seed,
        "rainfall": _sel(rain_fits, rain_best),
        "temperature": _sel(temp_fits, temp_best),
        "dependence": {"kendall_tau_ranks": tau_ranks, "kendall_tau_pit": tau_pit},
        "copula": {
            "selected": copula_fits.index(best),
            "candidates": [c.to_dict() for c in copula_fits],
            "refused": refused,
        },
    }, copula_fits


def load_model(path) -> tuple[dict, dist.FittedMarginal, dist.FittedMarginal, cop.CopulaModel]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read model document {path}: {exc}") from exc
    except ValueError as exc:
        raise ValidationError(f"model document {path} is not JSON") from exc
    if doc.get("schema") != MODEL_SCHEMA or doc.get("version") != MODEL_VERSION:
        raise ValidationError(f"{path} is not a version-{MODEL_VERSION} model document")

    def pick(block, loader):
        return loader(block["candidates"][block["selected"]])

    return (
        doc,
        pick(doc["rainfall"], dist.FittedMarginal.from_dict),
        pick(doc["temperature"], dist.FittedMarginal.from_dict),
        pick(doc["copula"], cop.CopulaModel.from_dict),
    )


def _fmt(x, spec=".6g"):
    if x is None:
        return "-"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(x, spec)


def _marginal_table(title, block):
    lines = [title, f"  {'family':<16}{'parameters':<58}{'AIC (data)':>14}{'AIC (fit scale)':>18}"]
    for i, m in enumerate(block["candidates"]):
        fm = dist.FittedMarginal.from_dict(m)
        params = ", ".join(_fmt(p) for p in fm.params)
        if fm.scale is not None:
            params += f" [scale /{_fmt(fm.scale[1])}]"
        mark = " *" if i == block["selected"] else ""
        lines.append(f"  {fm.family.value:<16}{params:<58}{fm.aic_data:>14.3f}{fm.aic:>18.3f}{mark}")
    return lines


def fit_report(doc: dict, config: PipelineConfig, series: ClimateSeries, model_hash: str) -> str:
    out = [f"# {_header(config, model_hash)}"]
    out.append(f"station {doc['station']['id']}  {doc['months']['start']}..{doc['months']['end']}  n={doc['months']['n']}")
    out.append("")
    out += _marginal_table("Rainfall marginals (* = selected by AIC)", doc["rainfall"])
    out.append("")
    out += _marginal_table("Temperature marginals (* = selected by AIC)", doc["temperature"])
    out.append("")

    rain_m = dist.FittedMarginal.from_dict(doc["rainfall"]["candidates"][doc["rainfall"]["selected"]])
    fb = config.favorable
    fr, ft = favorable_fraction(series, fb)
    out.append(f"Favorable rainfall ({fb.rainfall_low}, {fb.rainfall_high}) mm/day:")
    out.append(f"  model probability   {dist.interval_probability(rain_m, fb.rainfall_low, fb.rainfall_high):.4f}")
    out.append(f"  empirical fraction  {fr:.4f}")
    out.append(f"  fitted mean ({rain_m.family.value}, fit scale)  {dist.mean(rain_m):.4f}")
    out.append(f"Favorable temperature ({fb.temperature_low}, {fb.temperature_high}) degC empirical fraction {ft:.4f}")
    out.append("")
    dep = doc["dependence"]
    out.append(f"Kendall tau: ranks {dep['kendall_tau_ranks']:.5f}, parametric PIT {dep['kendall_tau_pit']:.5f}")
    out.append("")
    out.append("Copulas (* = selected by highest p-value)")
    out.append(f"  {'family':<14}{'theta (PMLE)':>14}{'theta (tau inv.)':>18}{'S_n':>12}{'p-value':>10}{'N':>7}")
    for i, c in enumerate(doc["copula"]["candidates"]):
        f = c["fit"]
        mark = " *" if i == doc["copula"]["selected"] else ""
        out.append(
            f"  {c['family']:<14}{c['theta']:>14.5f}{f['theta_tau_inversion']:>18.5f}"
            f"{f['s_n']:>12.5f}{f['p_value']:>10.4f}{f['bootstrap_n']:>7d}{mark}"
        )
    for fam, reason in doc["copula"]["refused"].items():
        out.append(f"  {fam:<14}refused: {reason}")
    return "\n".join(out) + "\n"


def cmd_fit(config: PipelineConfig) -> Path:
    series = load_series(config)
    doc, copula_fits = fit_models(config, series)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    model_path = _write_text(out / MODEL_FILE, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    model_hash = _sha256_file(model_path)
    _write_text(out / "fit_report.txt", fit_report(doc, config, series, model_hash))
    for c in copula_fits:
        rows = [f"# {_header(config, model_hash)} family={c.family.value}", "replicate,s_n_star"]
        rows += [f"{i},{s!r}" for i, s in enumerate(c.fit.replicates)]
        _write_text(out / "gof" / f"gof_{c.family.value}.csv", "\n".join(rows) + "\n")
    return model_path


# ---------------------------------------------------------------- index


def _model_for(config: PipelineConfig, series: ClimateSeries):
    path = config.output_dir / MODEL_FILE
    if not path.exists():
        raise DataIOError(f"model document {path} not found; run 'fit' first")
    doc, rain_m, temp_m, copula = load_model(path)
    if doc["series_sha256"] != series.sha256:
        raise ModelMismatchError("model document was fitted on a different series (hash mismatch)")
    return _sha256_file(path), rain_m, temp_m, copula


def index_paths(config: PipelineConfig, kind: idx.IndexKind, window: int) -> Path:
    return config.output_dir / "index" / f"{kind.value.lower()}_{window}.csv"


def cmd_index(config: PipelineConfig) -> list[Path]:
    series = load_series(config)
    model_hash, rain_m, temp_m, copula = _model_for(config, series)
    header = _header(config, model_hash)
    msdi_table = idx.MSDI_THRESHOLDS.with_overrides(config.thresholds)
    spi_table = idx.SPI_THRESHOLDS.with_overrides(config.spi_thresholds)
    one = idx.msdi_series(series, rain_m, temp_m, copula, clamp=config.clamp)
    (config.output_dir / "index").mkdir(parents=True, exist_ok=True)
    written = []
    for w in config.windows:
        msdi = idx.classify(idx.aggregate(one, w), msdi_table)
        spi = idx.classify(idx.spi_series(series, w, per_month=config.spi_per_month, clamp=config.clamp), spi_table)
        for s in (msdi, spi):
            path = index_paths(config, s.kind, w)
            written.append(_write_text(path, idx.index_csv_text(s, header)))
    return written


# ---------------------------------------------------------------- compare / plotdata


def _read_pair(config: PipelineConfig, window: int):
    return (
        idx.read_index_csv(index_paths(config, idx.IndexKind.MSDI, window)),
        idx.read_index_csv(index_paths(config, idx.IndexKind.SPI, window)),
    )


def _model_hash(config: PipelineConfig) -> str:
    path = config.output_dir / MODEL_FILE
    return _sha256_file(path) if path.exists() else "-"


def cmd_compare(config: PipelineConfig, events_path=None) -> tuple[Path, list]:
    events_path = Path(events_path or config.events or DEFAULT_EVENTS)
    events = idx.load_events(events_path)
    header = f"# {_header(config, _model_hash(config))}"
    out = config.output_dir / "compare"
    report_rows = [header, "event,start,end,window,status,msdi_dry,msdi_extreme,spi_dry,spi_extreme"]
    summary = [header, "window,events_with_data,msdi_detections,spi_detections,msdi_extreme,spi_extreme,flag"]
    reports = []
    for w in config.windows:
        msdi, spi = _read_pair(config, w)
        rep = idx.compare(msdi, spi, events)
        reports.append(rep)
        for r in rep.results:
            ev = r.event
            if r.has_data:
                cells = ["ok"] + [str(int(b)) for b in (r.msdi_dry, r.msdi_extreme, r.spi_dry, r.spi_extreme)]
            else:
                cells = ["no data", "", "", "", ""]
            report_rows.append(",".join([ev.name, str(ev.start), str(ev.end), str(w)] + cells))
        with_data = sum(r.has_data for r in rep.results)
        flag = "" if rep.msdi_detections >= rep.spi_detections else "msdi_below_spi"
        summary.append(
            f"{w},{with_data},{rep.msdi_detections},{rep.spi_detections},"
            f"{rep.msdi_extreme_detections},{rep.spi_extreme_detections},{flag}"
        )
        combined = [header, "date,msdi,spi,msdi_label,spi_label"]
        for i, ym in enumerate(msdi.months):
            combined.append(
                f"{ym},{idx._fmt(msdi.values[i])},{idx._fmt(spi.values[i])},{msdi.labels[i].value},{spi.labels[i].value}"
            )
        _write_text(out / f"combined_{w}.csv", "\n".join(combined) + "\n")
    report = _write_text(out / "report.csv", "\n".join(report_rows) + "\n")
    _write_text(out / "summary.csv", "\n".join(summary) + "\n")
    return report, reports


def cmd_plotdata(config: PipelineConfig) -> Path:
    index_dir = config.output_dir / "index"
    files = sorted(index_dir.glob("*.csv")) if index_dir.is_dir() else []
    if not files:
        raise DataIOError(f"no index CSVs under {index_dir}; run 'index' first")
    tables = {
        idx.IndexKind.MSDI: idx.MSDI_THRESHOLDS.with_overrides(config.thresholds),
        idx.IndexKind.SPI: idx.SPI_THRESHOLDS.with_overrides(config.spi_thresholds),
    }
    series = sorted((idx.read_index_csv(f) for f in files), key=lambda s: (s.kind.value, s.window))
    rows = [f"# {_header(config, _model_hash(config))}", "date,window,kind,value,label,threshold_dry,threshold_xdry"]
    for s in series:
        xdry, dry = tables[s.kind].cut(s.window)
        for ym, v, lab in zip(s.months, s.values, s.labels):
            rows.append(f"{ym},{s.window},{s.kind.value},{idx._fmt(v)},{lab.value},{dry!r},{xdry!r}")
    return _write_text(config.output_dir / "plot" / "plotdata.csv", "\n".join(rows) + "\n")
