"""Monthly station climate series: validation, CSV interchange, remote retrieval."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataIOError, NetworkError, ValidationError

__all__ = [
    "YearMonth",
    "Station",
    "ClimateRecord",
    "ClimateSeries",
    "FavorableBounds",
    "DEFAULT_SCHEMA",
    "MIN_FIT_LENGTH",
    "load_csv",
    "write_csv",
    "fetch_remote",
    "favorable_fraction",
    "NasaPowerAdapter",
    "ADAPTERS",
]

logger = logging.getLogger(__name__)

MIN_FIT_LENGTH = 24
TEMPERATURE_WINDOW = (-50.0, 60.0)
DEFAULT_SCHEMA = {"date": "date", "rainfall": "rainfall_mm_day", "temperature": "temperature_c"}
CACHE_ENV = "MSDI_CACHE_DIR"


@dataclass(frozen=True, order=True)
class YearMonth:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValidationError(f"month out of range: {self.month}")

    @classmethod
    def parse(cls, text: str) -> "YearMonth":
        text = str(text).strip()
        try:
            year, month = text.split("-")[:2]
            return cls(int(year), int(month))
        except (ValueError, TypeError):
            raise ValidationError(f"unparsable month {text!r}, expected YYYY-MM") from None

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "YearMonth":
        return cls(ordinal // 12, ordinal % 12 + 1)

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    def shift(self, months: int) -> "YearMonth":
        return YearMonth.from_ordinal(self.ordinal + months)

    def __str__(self):
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True)
class Station:
    id: str
    latitude: float = math.nan
    longitude: float = math.nan


@dataclass(frozen=True)
class ClimateRecord:
    year_month: YearMonth
    rainfall: float
    temperature: float

    def __post_init__(self):
        r, t = self.rainfall, self.temperature
        if not math.isfinite(r) or r < 0:
            raise ValidationError(f"{self.year_month}: rainfall must be finite and >= 0, got {r}")
        lo, hi = TEMPERATURE_WINDOW
        if not math.isfinite(t) or not lo <= t <= hi:
            raise ValidationError(f"{self.year_month}: temperature {t} outside [{lo}, {hi}] degC")


@dataclass(frozen=True)
class ClimateSeries:
    """Gap-free, strictly increasing monthly (rainfall, temperature) observations."""

    station: Station
    records: tuple[ClimateRecord, ...]
    _arrays: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        for prev, cur in zip(self.records, self.records[1:]):
            step = cur.year_month.ordinal - prev.year_month.ordinal
            if step == 0:
                raise ValidationError(f"duplicate month {cur.year_month}")
            if step < 0:
                raise ValidationError(f"months out of order at {cur.year_month}")
            if step > 1:
                raise ValidationError(f"gap in months between {prev.year_month} and {cur.year_month}")

    @classmethod
    def from_arrays(cls, station: Station, start: YearMonth, rainfall, temperature) -> "ClimateSeries":
        rainfall = np.asarray(rainfall, dtype=float)
        temperature = np.asarray(temperature, dtype=float)
        if rainfall.shape != temperature.shape:
            raise ValidationError("rainfall and temperature lengths differ")
        recs = [
            ClimateRecord(start.shift(i), float(r), float(t))
            for i, (r, t) in enumerate(zip(rainfall, temperature))
        ]
        return cls(station, tuple(recs))

    def __len__(self):
        return len(self.records)

    def _array(self, name):
        if name not in self._arrays:
            arr = np.array([getattr(r, name) for r in self.records], dtype=float)
            arr.setflags(write=False)
            self._arrays[name] = arr
        return self._arrays[name]

    @property
    def rainfall(self) -> np.ndarray:
        return self._array("rainfall")

    @property
    def temperature(self) -> np.ndarray:
        return self._array("temperature")

    @property
    def months(self) -> list[YearMonth]:
        return [r.year_month for r in self.records]

    @property
    def start(self) -> YearMonth:
        return self.records[0].year_month

    @property
    def end(self) -> YearMonth:
        return self.records[-1].year_month

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        _write(self, buf)
        return buf.getvalue()

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_csv_text().encode("utf-8")).hexdigest()

    def require_fit_length(self):
        if len(self) < MIN_FIT_LENGTH:
            raise ValidationError(f"series has {len(self)} months; fitting needs at least {MIN_FIT_LENGTH}")


@dataclass(frozen=True)
class FavorableBounds:
    rainfall_low: float = 2.74
    rainfall_high: float = 4.11
    temperature_low: float = 21.0
    temperature_high: float = 27.0

    def __post_init__(self):
        if not self.rainfall_low < self.rainfall_high:
            raise ValidationError("rainfall_low must be < rainfall_high")
        if not self.temperature_low < self.temperature_high:
            raise ValidationError("temperature_low must be < temperature_high")


# ---------------------------------------------------------------- CSV


def _station_header(station: Station) -> str:
    return f"# station={station.id} latitude={station.latitude!r} longitude={station.longitude!r}\n"


def _write(series: ClimateSeries, fh):
    fh.write(_station_header(series.station))
    fh.write(f"{DEFAULT_SCHEMA['date']},{DEFAULT_SCHEMA['rainfall']},{DEFAULT_SCHEMA['temperature']}\n")
    for r in series.records:
        fh.write(f"{r.year_month},{r.rainfall!r},{r.temperature!r}\n")


def write_csv(series: ClimateSeries, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _write(series, fh)
    return path


def _parse_station(lines: Sequence[str], fallback: str) -> Station:
    meta = {}
    for line in lines:
        for token in line.lstrip("#").split():
            if "=" in token:
                key, value = token.split("=", 1)
                meta[key] = value
    try:
        return Station(
            meta.get("station", fallback),
            float(meta.get("latitude", "nan")),
            float(meta.get("longitude", "nan")),
        )
    except ValueError:
        raise ValidationError(f"bad station metadata: {meta}") from None


def parse_csv_text(text: str, schema: Mapping[str, str] | None = None, station_id: str = "station") -> ClimateSeries:
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    lines = text.splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not body:
        raise ValidationError("CSV has no header row")
    reader = csv.DictReader(body)
    missing = [schema[k] for k in ("date", "rainfall", "temperature") if schema[k] not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"missing column(s): {', '.join(missing)}")
    records = []
    for row in reader:
        ym = YearMonth.parse(row[schema["date"]])
        try:
            rain = float(row[schema["rainfall"]])
            temp = float(row[schema["temperature"]])
        except (TypeError, ValueError):
            raise ValidationError(f"{ym}: non-numeric value") from None
        records.append(ClimateRecord(ym, rain, temp))
    records.sort(key=lambda r: r.year_month)
    return ClimateSeries(_parse_station(comments, station_id), tuple(records))


def load_csv(path, schema: Mapping[str, str] | None = None) -> ClimateSeries:
    """Read a monthly CSV (default header ``date,rainfall_mm_day,temperature_c``).

    Rows are sorted by month before the gap check. A leading ``# station=...``
    comment line, as written by :func:`write_csv`, supplies station metadata.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc
    return parse_csv_text(text, schema, station_id=path.stem)


# ---------------------------------------------------------------- remote


@dataclass(frozen=True)
class NasaPowerAdapter:
    """Monthly point endpoint of NASA POWER.

    ``TS`` (earth skin temperature) stands in for ground temperature and
    ``PRECTOTCORR`` for rainfall in mm/day.
    """

    base_url: str = "https://power.larc.nasa.gov/api/temporal/monthly/point"
    rainfall_parameter: str = "PRECTOTCORR"
    temperature_parameter: str = "TS"
    community: str = "AG"
    name: str = "nasa-power"

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "base_url": self.base_url,
            "variables": [self.rainfall_parameter, self.temperature_parameter],
            "community": self.community,
        }

    def query(self, latitude, longitude, start: YearMonth, end: YearMonth) -> dict:
        return {
            "parameters": f"{self.rainfall_parameter},{self.temperature_parameter}",
            "community": self.community,
            "latitude": latitude,
            "longitude": longitude,
            "start": start.year,
            "end": end.year,
            "format": "JSON",
        }

    def parse(self, payload: dict, start: YearMonth, end: YearMonth):
        try:
            params = payload["properties"]["parameter"]
            rain = params[self.rainfall_parameter]
            temp = params[self.temperature_parameter]
        except (KeyError, TypeError):
            detail = payload.get("messages") or payload.get("errors") or payload if isinstance(payload, dict) else payload
            raise DataIOError(f"service error payload: {detail}") from None
        rows = []
        for ordinal in range(start.ordinal, end.ordinal + 1):
            ym = YearMonth.from_ordinal(ordinal)
            key = f"{ym.year:04d}{ym.month:02d}"
            if key not in rain or key not in temp:
                raise ValidationError(f"gap in months: service returned no value for {ym}")
            rows.append((ym, float(rain[key]), float(temp[key])))
        return rows


ADAPTERS = {"nasa-power": NasaPowerAdapter()}


def cache_dir(override=None) -> Path:
    if override is not None:
        return Path(override)
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "msdi"


def _cache_key(latitude, longitude, start, end, adapter) -> str:
    ident = {
        "station": [float(latitude), float(longitude)],
        "range": [str(start), str(end)],
        "endpoint": adapter.descriptor(),
    }
    return hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()


def _download(adapter, params, retries, timeout, backoff, session) -> bytes:
    import requests

    session = session or requests.Session()
    last = None
    for attempt in range(1, retries + 1):
        try:
            resp = session.get(adapter.base_url, params=params, timeout=timeout)
        except requests.RequestException as exc:
            last = exc
            logger.warning("fetch attempt %d/%d failed: %s", attempt, retries, exc)
            if attempt < retries:
                time.sleep(backoff * attempt)
            continue
        if resp.status_code >= 400:
            try:
                detail = resp.json()
            except ValueError:
                detail = resp.text[:200]
            raise DataIOError(f"service error payload (HTTP {resp.status_code}): {detail}")
        return resp.content
    raise NetworkError(f"endpoint {adapter.base_url} unreachable after {retries} attempts: {last}")


def fetch_remote(
    latitude: float,
    longitude: float,
    start,
    end,
    endpoint="nasa-power",
    *,
    cache=None,
    station_id: str | None = None,
    retries: int = 3,
    timeout: float = 60.0,
    backoff: float = 1.0,
    session=None,
) -> ClimateSeries:
    """Retrieve a monthly series for one point, caching the raw response.

    The cache file is keyed by (station, range, endpoint descriptor); a warm
    cache never touches the network.
    """
    start = start if isinstance(start, YearMonth) else YearMonth.parse(start)
    end = end if isinstance(end, YearMonth) else YearMonth.parse(end)
    if end < start:
        raise ValidationError(f"empty month range {start}..{end}")
    adapter = ADAPTERS[endpoint] if isinstance(endpoint, str) else endpoint

    path = cache_dir(cache) / f"{_cache_key(latitude, longitude, start, end, adapter)}.json"
    warm = path.exists()
    if warm:
        raw = path.read_bytes()
    else:
        raw = _download(adapter, adapter.query(latitude, longitude, start, end), retries, timeout, backoff, session)
    try:
        payload = json.loads(raw)
    except ValueError:
        raise DataIOError("service returned non-JSON payload") from None
    # parse before caching so an error payload is never replayed from disk
    rows = adapter.parse(payload, start, end)
    if not warm:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(raw)
            tmp.replace(path)
        except OSError as exc:
            raise DataIOError(f"cannot write cache {path}: {exc}") from exc

    station = Station(station_id or f"{latitude:.4f}_{longitude:.4f}", float(latitude), float(longitude))
    return ClimateSeries(station, tuple(ClimateRecord(*row) for row in rows))


def favorable_fraction(series: ClimateSeries, bounds: FavorableBounds = FavorableBounds()) -> tuple[float, float]:
    """Share of months with rainfall and with temperature inside ``bounds`` (inclusive)."""
    if len(series) == 0:
        raise ValidationError("empty series")
    r, t = series.rainfall, series.temperature
    fr = np.mean((r >= bounds.rainfall_low) & (r <= bounds.rainfall_high))
    ft = np.mean((t >= bounds.temperature_low) & (t <= bounds.temperature_high))
    return float(fr), float(ft)


def series_from_records(station: Station, records: Iterable[ClimateRecord]) -> ClimateSeries:
    return ClimateSeries(station, tuple(sorted(records, key=lambda r: r.year_month)))
