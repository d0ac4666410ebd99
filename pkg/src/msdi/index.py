"""MSDI and SPI index series, n-month aggregation, severity classes, event comparison."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .copulas import CopulaModel, copula_cdf
from .dependence import clamp_size, clamp_unit
from .distributions import Family, FittedMarginal, cdf, fit_mle
from .errors import DataIOError, ValidationError
from .ingestion import ClimateSeries, YearMonth

__all__ = [
    "IndexKind",
    "Severity",
    "IndexSeries",
    "ThresholdTable",
    "MSDI_THRESHOLDS",
    "SPI_THRESHOLDS",
    "Event",
    "EventResult",
    "ComparisonReport",
    "NC_DROUGHT_EVENTS",
    "joint_probability",
    "msdi_1month",
    "msdi_series",
    "aggregate",
    "classify",
    "spi_series",
    "compare",
    "write_index_csv",
    "read_index_csv",
    "load_events",
]

CLAMP = 5.0


class IndexKind(str, Enum):
    MSDI = "MSDI"
    SPI = "SPI"


class Severity(str, Enum):
    EXTREMELY_DRY = "ExtremelyDry"
    DRY = "Dry"
    NORMAL = "Normal"
    UNDEFINED = "Undefined"


@dataclass(frozen=True)
class IndexSeries:
    """Per-month index values; NaN marks the undefined warm-up months."""

    kind: IndexKind
    window: int
    months: tuple[YearMonth, ...]
    values: np.ndarray
    labels: tuple[Severity, ...] | None = None
    clamp: float = CLAMP

    def __post_init__(self):
        object.__setattr__(self, "kind", IndexKind(self.kind))
        object.__setattr__(self, "months", tuple(self.months))
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.months),):
            raise ValidationError("values and months differ in length")
        if self.window < 1:
            raise ValidationError("window must be >= 1")
        defined = vals[~np.isnan(vals)]
        if np.any(np.abs(defined) > self.clamp) or np.any(np.isinf(defined)):
            raise ValidationError(f"index values must lie in [-{self.clamp}, {self.clamp}]")
        if self.labels is not None:
            labels = tuple(Severity(x) for x in self.labels)
            if len(labels) != vals.size:
                raise ValidationError("labels and values differ in length")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.values.size

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True)
class ThresholdTable:
    """Per-window ``(extremely_dry_upper, dry_upper)`` cut points."""

    cuts: Mapping[int, tuple[float, float]]

    def __post_init__(self):
        cuts = {int(k): (float(v[0]), float(v[1])) for k, v in dict(self.cuts).items()}
        for w, (xdry, dry) in cuts.items():
            if not xdry < dry:
                raise ValidationError(f"window {w}: extremely-dry cut {xdry} must be below dry cut {dry}")
        object.__setattr__(self, "cuts", dict(sorted(cuts.items())))

    def cut(self, window: int) -> tuple[float, float]:
        try:
            return self.cuts[int(window)]
        except KeyError:
            raise ValidationError(f"no thresholds for a {window}-month window") from None

    def with_overrides(self, overrides: Mapping | None) -> "ThresholdTable":
        if not overrides:
            return self
        return ThresholdTable({**self.cuts, **{int(k): tuple(v) for k, v in overrides.items()}})

    def to_dict(self) -> dict:
        return {str(k): list(v) for k, v in self.cuts.items()}


MSDI_THRESHOLDS = ThresholdTable({3: (-3.2, -1.3), 6: (-2.5, -0.8), 9: (-2.1, -0.4), 12: (-1.7, -0.3)})
# McKee et al. SPI classes: extremely dry <= -2, dry (moderate/severe) <= -1
SPI_THRESHOLDS = ThresholdTable({w: (-2.0, -1.0) for w in (1, 3, 6, 9, 12)})


# ---------------------------------------------------------------- MSDI


def joint_probability(rain_m: FittedMarginal, temp_m: FittedMarginal, c: CopulaModel, x, y):
    """P(X <= x, Y <= y) through the copula, with PIT clamping on each margin."""
    u = clamp_unit(np.asarray(cdf(rain_m, x), dtype=float), clamp_size(rain_m))
    v = clamp_unit(np.asarray(cdf(temp_m, y), dtype=float), clamp_size(temp_m))
    p = copula_cdf(c, u, v)
    return float(p) if np.ndim(x) == 0 and np.ndim(y) == 0 else np.asarray(p)


def msdi_1month(p, clamp: float = CLAMP):
    """Standard normal quantile of ``p``, clamped to ``[-clamp, clamp]``."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ValidationError("joint probability must lie strictly inside (0, 1)")
    out = np.clip(special.ndtri(arr), -clamp, clamp)
    return float(out) if np.ndim(p) == 0 else out


def msdi_series(
    series: ClimateSeries, rain_m: FittedMarginal, temp_m: FittedMarginal, c: CopulaModel, clamp: float = CLAMP
) -> IndexSeries:
    p = joint_probability(rain_m, temp_m, c, series.rainfall, series.temperature)
    return IndexSeries(IndexKind.MSDI, 1, tuple(series.months), msdi_1month(p, clamp), clamp=clamp)


def aggregate(s: IndexSeries, n: int) -> IndexSeries:
    """Trailing n-month mean of a 1-month series; the first n-1 months are undefined."""
    if n < 1:
        raise ValidationError("window must be >= 1")
    if s.window != 1:
        raise ValidationError("aggregate expects a 1-month series")
    if len(s) < n:
        raise ValidationError(f"series of {len(s)} months is shorter than the {n}-month window")
    out = np.full(len(s), np.nan)
    out[n - 1 :] = np.lib.stride_tricks.sliding_window_view(s.values, n).mean(axis=1)
    return IndexSeries(s.kind, n, s.months, out, clamp=s.clamp)


def classify(s: IndexSeries, table: ThresholdTable) -> IndexSeries:
    """Label each month; boundaries are half-open, ``[xdry, dry)`` is Dry."""
    xdry, dry = table.cut(s.window)
    labels = []
    for value in s.values:
        if math.isnan(value):
            labels.append(Severity.UNDEFINED)
        elif value < xdry:
            labels.append(Severity.EXTREMELY_DRY)
        elif value < dry:
            labels.append(Severity.DRY)
        else:
            labels.append(Severity.NORMAL)
    return replace(s, labels=tuple(labels))


# ---------------------------------------------------------------- SPI


def _spi_transform(acc: np.ndarray) -> np.ndarray:
    q = float(np.mean(acc == 0))
    positive = acc[acc > 0]
    if positive.size == 0:
        raise ValidationError("precipitation is zero everywhere; SPI undefined")
    g = fit_mle(Family.GAMMA, positive)
    h = q + (1 - q) * np.asarray(cdf(g, acc), dtype=float)
    return special.ndtri(h)


def spi_series(series: ClimateSeries, n: int, *, per_month: bool = False, clamp: float = CLAMP) -> IndexSeries:
    """Standardized precipitation index on n-month accumulated rainfall.

    One gamma is fitted to the whole accumulated record; ``per_month`` fits
    one per calendar month instead. Zeros enter through the mixed
    distribution ``q + (1 - q) G(x)``.
    """
    if n < 1:
        raise ValidationError("window must be >= 1")
    rain = np.asarray(series.rainfall, dtype=float)
    if rain.size < n:
        raise ValidationError("series shorter than the window")
    acc = np.full(rain.size, np.nan)
    acc[n - 1 :] = np.lib.stride_tricks.sliding_window_view(rain, n).sum(axis=1)
    out = np.full(rain.size, np.nan)
    if per_month:
        cal = np.array([ym.month for ym in series.months])
        for month in range(1, 13):
            idx = np.flatnonzero((cal == month) & ~np.isnan(acc))
            if idx.size:
                out[idx] = _spi_transform(acc[idx])
    else:
        idx = np.flatnonzero(~np.isnan(acc))
        out[idx] = _spi_transform(acc[idx])
    out = np.where(np.isnan(out), np.nan, np.clip(out, -clamp, clamp))
    return IndexSeries(IndexKind.SPI, n, tuple(series.months), out, clamp=clamp)


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class Event:
    name: str
    start: YearMonth
    end: YearMonth

    def __post_init__(self):
        if self.end < self.start:
            raise ValidationError(f"event {self.name}: end before start")

    @classmethod
    def years(cls, first: int, last: int | None = None, name: str | None = None) -> "Event":
        last = first if last is None else last
        label = name or (str(first) if first == last else f"{first}-{last}")
        return cls(label, YearMonth(first, 1), YearMonth(last, 12))


NC_DROUGHT_EVENTS = (
    Event.years(1935, 1937),
    Event.years(1947, 1949),
    Event.years(1953, 1956),
    Event.years(1965),
    Event.years(1974, 1977),
    Event.years(1982, 1983),
    Event.years(1986, 1987),
    Event.years(1992),
    Event.years(1995, 1996),
    Event.years(2001),
    Event.years(2004),
    Event.years(2013, 2014),
    Event.years(2016, 2017),
)


@dataclass(frozen=True)
class EventResult:
    event: Event
    has_data: bool
    msdi_dry: bool = False
    msdi_extreme: bool = False
    spi_dry: bool = False
    spi_extreme: bool = False


@dataclass(frozen=True)
class ComparisonReport:
    window: int
    results: tuple[EventResult, ...] = field(default_factory=tuple)

    @property
    def msdi_detections(self) -> int:
        return sum(r.msdi_dry for r in self.results)

    @property
    def spi_detections(self) -> int:
        return sum(r.spi_dry for r in self.results)

    @property
    def msdi_extreme_detections(self) -> int:
        return sum(r.msdi_extreme for r in self.results)

    @property
    def spi_extreme_detections(self) -> int:
        return sum(r.spi_extreme for r in self.results)


_DRY = (Severity.DRY, Severity.EXTREMELY_DRY)


def compare(msdi: IndexSeries, spi: IndexSeries, events: Sequence[Event]) -> ComparisonReport:
    """For each event, did each index reach Dry / ExtremelyDry inside the range?"""
    if msdi.months != spi.months or msdi.window != spi.window:
        raise ValidationError("MSDI and SPI series are not aligned (months or window differ)")
    if msdi.labels is None or spi.labels is None:
        raise ValidationError("both series must be classified before comparison")
    ords = np.array([m.ordinal for m in msdi.months])
    defined = msdi.defined & spi.defined
    results = []
    for ev in events:
        sel = np.flatnonzero((ords >= ev.start.ordinal) & (ords <= ev.end.ordinal) & defined)
        if sel.size == 0:
            results.append(EventResult(ev, False))
            continue
        ml = [msdi.labels[i] for i in sel]
        sl = [spi.labels[i] for i in sel]
        results.append(
            EventResult(
                ev,
                True,
                any(x in _DRY for x in ml),
                Severity.EXTREMELY_DRY in ml,
                any(x in _DRY for x in sl),
                Severity.EXTREMELY_DRY in sl,
            )
        )
    return ComparisonReport(msdi.window, tuple(results))


def _parse_bound(text: str, is_end: bool) -> YearMonth:
    text = text.strip()
    if "-" in text:
        return YearMonth.parse(text)
    try:
        year = int(text)
    except ValueError:
        raise ValidationError(f"bad event bound {text!r}") from None
    return YearMonth(year, 12 if is_end else 1)


def load_events(path) -> list[Event]:
    """Read ``name,start,end`` rows; bounds are ``YYYY-MM`` or a bare year."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read events file {path}: {exc}") from exc
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        return []
    reader = csv.DictReader(rows)
    if reader.fieldnames is None or not {"name", "start", "end"} <= set(reader.fieldnames):
        raise ValidationError("events file needs a header with name,start,end")
    events = []
    for row in reader:
        if row["start"] is None or row["end"] is None:
            raise ValidationError(f"malformed events row: {row}")
        events.append(Event(row["name"], _parse_bound(row["start"], False), _parse_bound(row["end"], True)))
    return events


# ---------------------------------------------------------------- CSV


def _fmt(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


def index_csv_text(s: IndexSeries, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(f"# kind={s.kind.value} window={s.window}{(' ' + header) if header else ''}\n")
    buf.write("date,index,label\n")
    labels = s.labels or tuple(Severity.UNDEFINED for _ in s.months)
    for ym, value, label in zip(s.months, s.values, labels):
        buf.write(f"{ym},{_fmt(value)},{label.value}\n")
    return buf.getvalue()


def write_index_csv(s: IndexSeries, path, header: str = "") -> Path:
    path = Path(path)
    path.write_text(index_csv_text(s, header), encoding="utf-8", newline="\n")
    return path


def read_index_csv(path) -> IndexSeries:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    meta = {}
    for ln in lines:
        if ln.startswith("#"):
            meta.update(tok.split("=", 1) for tok in ln[1:].split() if "=" in tok)
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    reader = csv.DictReader(body)
    months, values, labels = [], [], []
    for row in reader:
        months.append(YearMonth.parse(row["date"]))
        values.append(float(row["index"]) if row["index"] else math.nan)
        labels.append(Severity(row["label"]))
    try:
        kind, window = IndexKind(meta["kind"]), int(meta["window"])
    except (KeyError, ValueError):
        raise ValidationError(f"{path}: missing kind/window header") from None
    return IndexSeries(kind, window, tuple(months), np.array(values), tuple(labels))
