import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msdi.errors import DataIOError, NetworkError, ValidationError
from msdi.ingestion import (
    ClimateSeries,
    FavorableBounds,
    NasaPowerAdapter,
    Station,
    YearMonth,
    favorable_fraction,
    fetch_remote,
    load_csv,
    parse_csv_text,
    write_csv,
)

HEADER = "date,rainfall_mm_day,temperature_c\n"


def _rows(start, n, rain=3.0, temp=25.0):
    ym = YearMonth.parse(start)
    return "".join(f"{ym.shift(i)},{rain},{temp}\n" for i in range(n))


def test_load_full_span(tmp_path):
    p = tmp_path / "nc.csv"
    p.write_text(HEADER + _rows("1981-01", 492))
    s = load_csv(p)
    assert len(s) == 492
    assert str(s.start) == "1981-01" and str(s.end) == "2021-12"


def test_rows_are_sorted_before_gap_check(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text(HEADER + "1981-02,1,20\n1981-01,2,21\n1981-03,3,22\n")
    s = load_csv(p)
    assert [str(m) for m in s.months] == ["1981-01", "1981-02", "1981-03"]
    np.testing.assert_array_equal(s.rainfall, [2, 1, 3])


@pytest.mark.parametrize(
    "body, message",
    [
        ("1981-01,1,20\n1981-03,1,20\n", "gap"),
        ("1981-01,-1.0,20\n", "rainfall"),
        ("1981-01,1,75\n", "temperature"),
        ("1981-13,1,20\n", "month"),
        ("Jan 1981,1,20\n", "month"),
        ("1981-01,1,20\n1981-01,1,20\n", "duplicate"),
        ("1981-01,abc,20\n", "non-numeric"),
        ("1981-01,nan,20\n", "rainfall"),
    ],
)
def test_invalid_rows(tmp_path, body, message):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + body)
    with pytest.raises(ValidationError, match=message):
        load_csv(p)


def test_missing_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("date,rainfall_mm_day\n1981-01,1\n")
    with pytest.raises(ValidationError, match="temperature_c"):
        load_csv(p)


def test_custom_schema():
    s = parse_csv_text("month,pr,ts\n2000-01,1.5,22\n", {"date": "month", "rainfall": "pr", "temperature": "ts"})
    assert s.rainfall[0] == 1.5 and s.temperature[0] == 22


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(DataIOError):
        load_csv(tmp_path / "nope.csv")


def test_fit_length_requirement():
    s = parse_csv_text(HEADER + _rows("2000-01", 23))
    with pytest.raises(ValidationError, match="24"):
        s.require_fit_length()
    parse_csv_text(HEADER + _rows("2000-01", 24)).require_fit_length()


finite_rain = st.floats(0, 500, allow_nan=False, allow_subnormal=False)
finite_temp = st.floats(-50, 60, allow_nan=False, allow_subnormal=False)


@given(
    st.lists(st.tuples(finite_rain, finite_temp), min_size=1, max_size=40),
    st.integers(1900 * 12, 2100 * 12),
)
def test_csv_round_trip(tmp_path_factory, rows, start):
    rain, temp = zip(*rows)
    s = ClimateSeries.from_arrays(Station("st-1", 8.1996, 80.6327), YearMonth.from_ordinal(start), rain, temp)
    p = tmp_path_factory.mktemp("rt") / "s.csv"
    write_csv(s, p)
    back = load_csv(p)
    assert back == s
    assert back.to_csv_text() == s.to_csv_text()


# ---------------------------------------------------------------- favorable fraction


def test_favorable_fraction_all_inside():
    s = parse_csv_text(HEADER + _rows("2000-01", 30, rain=3.0, temp=25.0))
    assert favorable_fraction(s, FavorableBounds(2.74, 4.11, 21, 27)) == (1.0, 1.0)


def test_favorable_fraction_none_inside():
    s = parse_csv_text(HEADER + _rows("2000-01", 30, rain=9.0, temp=35.0))
    assert favorable_fraction(s) == (0.0, 0.0)


def test_favorable_fraction_empty():
    with pytest.raises(ValidationError):
        favorable_fraction(ClimateSeries(Station("e", 0.0, 0.0), ()))


def test_favorable_bounds_order():
    with pytest.raises(ValidationError):
        FavorableBounds(4.11, 2.74)


@given(st.randoms(use_true_random=False))
def test_favorable_fraction_permutation_invariant(random):
    base = np.random.default_rng(3)
    rain = base.gamma(0.8, 4.0, size=60)
    temp = base.normal(26, 2, size=60)
    lines = [f"{YearMonth(2000, 1).shift(i)},{float(r)!r},{float(t)!r}\n" for i, (r, t) in enumerate(zip(rain, temp))]
    shuffled = list(lines)
    random.shuffle(shuffled)
    a = favorable_fraction(parse_csv_text(HEADER + "".join(lines)))
    b = favorable_fraction(parse_csv_text(HEADER + "".join(shuffled)))
    assert a == b


# ---------------------------------------------------------------- remote


def _power_payload(start, n, rng):
    ym0 = YearMonth.parse(start)
    rain, temp = {}, {}
    for i in range(n):
        ym = ym0.shift(i)
        key = f"{ym.year:04d}{ym.month:02d}"
        rain[key] = round(float(rng.gamma(0.8, 4.0)), 2)
        temp[key] = round(float(rng.normal(27, 1.5)), 2)
        if ym.month == 12:  # annual aggregates share the payload, as in the real service
            rain[f"{ym.year:04d}13"] = 1.0
            temp[f"{ym.year:04d}13"] = 27.0
    return {"properties": {"parameter": {"PRECTOTCORR": rain, "TS": temp}}}


class _Server:
    def __init__(self, payload, status=200):
        self.hits = 0
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):
                outer.hits += 1
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.httpd = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_port}/monthly"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def test_fetch_remote_and_warm_cache(tmp_path):
    payload = _power_payload("1981-01", 492, np.random.default_rng(0))
    with _Server(payload) as srv:
        adapter = NasaPowerAdapter(base_url=srv.url)
        first = fetch_remote(8.1996, 80.6327, "1981-01", "2021-12", adapter, cache=tmp_path, station_id="NC")
        assert srv.hits == 1
        second = fetch_remote(8.1996, 80.6327, "1981-01", "2021-12", adapter, cache=tmp_path, station_id="NC")
        assert srv.hits == 1  # served from cache
    assert len(first) == 492
    assert first.to_csv_text().encode() == second.to_csv_text().encode()
    assert len(list(tmp_path.glob("*.json"))) == 1
    # a different range is a different cache entry
    with _Server(payload) as srv:
        adapter = NasaPowerAdapter(base_url=srv.url)
        sub = fetch_remote(8.1996, 80.6327, "1990-01", "1990-12", adapter, cache=tmp_path)
        assert srv.hits == 1
    assert len(sub) == 12 and sub.rainfall[0] == first.rainfall[108]


def test_fetch_remote_cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MSDI_CACHE_DIR", str(tmp_path / "envcache"))
    with _Server(_power_payload("2000-01", 12, np.random.default_rng(1))) as srv:
        fetch_remote(0.0, 0.0, "2000-01", "2000-12", NasaPowerAdapter(base_url=srv.url))
    assert len(list((tmp_path / "envcache").glob("*.json"))) == 1


def test_fetch_remote_empty_range(tmp_path):
    with pytest.raises(ValidationError, match="empty"):
        fetch_remote(8.0, 80.0, "2000-05", "2000-04", cache=tmp_path)


def test_fetch_remote_unreachable(tmp_path):
    adapter = NasaPowerAdapter(base_url="http://127.0.0.1:9/none")
    with pytest.raises(NetworkError, match="after 3 attempts"):
        fetch_remote(8.0, 80.0, "2000-01", "2000-12", adapter, cache=tmp_path, retries=3, backoff=0.0, timeout=2)
    assert not list(tmp_path.glob("*"))


def test_fetch_remote_error_payload_not_cached(tmp_path):
    with _Server({"messages": ["bad parameter"]}, status=422) as srv:
        with pytest.raises(DataIOError, match="service error payload"):
            fetch_remote(8.0, 80.0, "2000-01", "2000-12", NasaPowerAdapter(base_url=srv.url), cache=tmp_path)
    with _Server({"messages": ["no data"]}) as srv:
        with pytest.raises(DataIOError, match="service error payload"):
            fetch_remote(8.0, 80.0, "2000-01", "2000-12", NasaPowerAdapter(base_url=srv.url), cache=tmp_path)
    assert not list(tmp_path.glob("*.json"))


def test_fetch_remote_missing_month(tmp_path):
    payload = _power_payload("2000-01", 12, np.random.default_rng(2))
    del payload["properties"]["parameter"]["TS"]["200006"]
    with _Server(payload) as srv:
        with pytest.raises(ValidationError, match="2000-06"):
            fetch_remote(8.0, 80.0, "2000-01", "2000-12", NasaPowerAdapter(base_url=srv.url), cache=tmp_path)
