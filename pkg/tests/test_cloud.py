import json
import random
import urllib.error
import urllib.request
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_aggregate, count_crossings, post_concurrently, random_feed

from wsncloud.cloud import (
    AlertRule,
    AuthError,
    BackgroundServer,
    BadRequest,
    CloudUnavailable,
    FeedService,
    HttpCloud,
    LatencyModel,
    NotFound,
    parse_series,
)

KEY = "k1"


@pytest.fixture
def svc():
    s = FeedService({KEY: "tester"}, feeds=["temp", "volts"], latency="constant:11")
    return s


def test_post_assigns_monotone_ids(svc):
    ids = [svc.post_event(KEY, "temp", "21.5", now=t).entry_id for t in range(5)]
    assert ids == [1, 2, 3, 4, 5]
    assert svc.entry_count() == 5


def test_received_at_never_goes_backwards(svc):
    a = svc.post_event(KEY, "temp", "1", now=10.0)
    b = svc.post_event(KEY, "temp", "2", now=5.0)
    assert b.received_at == a.received_at


@pytest.mark.parametrize("key", [None, "", "wrong"])
def test_unauthorized_post_changes_nothing(svc, key):
    svc.post_event(KEY, "temp", "1", now=0)
    before = svc.digest()
    with pytest.raises(AuthError):
        svc.post_event(key, "temp", "2", now=1)
    with pytest.raises(AuthError):
        svc.create_feed(key, "new")
    with pytest.raises(AuthError):
        svc.add_rule(key, "temp")
    assert svc.digest() == before


def test_unknown_feed(svc):
    with pytest.raises(NotFound):
        svc.post_event(KEY, "nope", "1")
    with pytest.raises(NotFound):
        svc.entries("nope")


@pytest.mark.parametrize("value", ["abc", "nan", "inf", ""])
def test_non_numeric_values_rejected(svc, value):
    with pytest.raises(BadRequest):
        svc.post_event(KEY, "temp", value)
    assert svc.entry_count() == 0


def test_range_query_is_inclusive(svc):
    for t in range(10):
        svc.post_event(KEY, "temp", str(t), now=float(t))
    assert [e.value for e in svc.entries("temp", 3, 5)] == ["3", "4", "5"]
    with pytest.raises(BadRequest):
        svc.entries("temp", 5, 3)


def test_json_and_csv_agree(svc):
    rng = random.Random(3)
    for i in range(50):
        svc.post_event(KEY, "temp", f"{rng.uniform(-10, 40):.4f}", now=i * 0.1234567)
    assert parse_series(svc.get_feed("temp", fmt="json"), "json") == parse_series(svc.get_feed("temp", fmt="csv"), "csv")
    header = svc.get_feed("temp", fmt="csv").splitlines()[0]
    assert header == "entry_id,feed_id,value,received_at"
    with pytest.raises(BadRequest):
        svc.get_feed("temp", fmt="xml")


def test_aggregation_examples(svc):
    for t, v in [(0, "1"), (1, "2"), (2, "3"), (3, "10"), (10, "5"), (11, "7")]:
        svc.post_event(KEY, "temp", v, now=t)
    assert svc.aggregate("temp", 10, "median") == [(0, 2.5), (10, 6.0)]
    assert svc.aggregate("temp", 10, "mean") == [(0, 4.0), (10, 6.0)]
    assert svc.aggregate("temp", 10, "sum") == [(0, 16.0), (10, 12.0)]
    assert svc.aggregate("temp", 10, "timescale") == [(0, 10.0), (10, 7.0)]
    assert svc.aggregate("volts", 10, "mean") == []
    for bad in ((10, "max"), (0, "mean"), (-1, "mean")):
        with pytest.raises(BadRequest):
            svc.aggregate("temp", *bad)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("fn", ["mean", "median", "sum", "timescale"])
def test_aggregation_matches_brute_force(seed, fn):
    rng = random.Random(seed)
    s = FeedService({KEY: "x"})
    stored = random_feed(rng, s, KEY, "f")
    window = rng.choice([1, 7.5, 60, 300])
    assert s.aggregate("f", window, fn) == brute_force_aggregate(stored, window, fn)


# rules


def test_rule_fires_once_per_crossing(svc):
    svc.add_rule(KEY, "volts", "<=", 2.1)
    values = ["3.0", "2.1", "2.05", "2.5", "2.0", "2.0", "3.3"]
    for i, v in enumerate(values):
        svc.post_event(KEY, "volts", v, now=i)
    notes = svc.notifications()
    assert [n.entry_id for n in notes] == [2, 5]
    assert all(n.latency == 11 and n.channel == "email_sim" for n in notes)


@settings(max_examples=200)
@given(st.lists(st.integers(150, 350), max_size=60), st.sampled_from(["<=", ">=", "=="]))
def test_notification_count_equals_crossing_count(raw, comparison):
    values = [f"{v / 100:.2f}" for v in raw]
    s = FeedService({KEY: "x"}, feeds=["v"], latency="constant:1")
    s.add_rule(KEY, "v", comparison, 2.1)
    for i, v in enumerate(values):
        s.post_event(KEY, "v", v, now=i)
    rule = AlertRule(0, "v", comparison, 2.1)
    assert len(s.notifications()) == count_crossings(values, lambda v: rule.holds(Decimal(v)))


def test_rules_only_watch_their_feed(svc):
    svc.add_rule(KEY, "volts", "<=", 2.1)
    svc.post_event(KEY, "temp", "1.0")
    assert svc.notifications() == []


def test_bad_rule_definitions(svc):
    with pytest.raises(BadRequest):
        svc.add_rule(KEY, "volts", "<", 2.1)
    with pytest.raises(BadRequest):
        svc.add_rule(KEY, "volts", "<=", 2.1, "pager")
    with pytest.raises(NotFound):
        svc.add_rule(KEY, "nope")


def test_latency_model_bounds():
    m = LatencyModel.parse("uniform:8:13", random.Random(1))
    draws = [m.draw() for _ in range(1000)]
    assert all(8 <= d <= 13 for d in draws)
    assert LatencyModel.parse("constant:11").draw() == 11
    assert str(m) == "uniform:8:13"
    for bad in ("uniform:13:8", "gauss:1", "constant", "uniform:a:b"):
        with pytest.raises(ValueError):
            LatencyModel.parse(bad)


def test_concurrent_posts_keep_ids_monotone():
    s = FeedService({KEY: "x"}, feeds=["f"])
    ids = post_concurrently(lambda c, i: s.post_event(KEY, "f", str(i)).entry_id, 8, 100)
    flat = sorted(i for lst in ids for i in lst)
    assert flat == list(range(1, 801))
    for lst in ids:
        assert lst == sorted(lst) and len(set(lst)) == len(lst)
    stored = [e.entry_id for e in s.entries("f")]
    assert stored == list(range(1, 801))


def test_snapshot_file(tmp_path, svc):
    svc.post_event(KEY, "temp", "1.5", now=2)
    path = tmp_path / "snap.json"
    svc.save_snapshot(path)
    data = json.loads(path.read_text())
    assert data["next_entry_id"] == 2
    assert data["feeds"]["temp"][0]["value"] == "1.5"


# HTTP front end


def http(method, url, body=None, key=KEY):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    if key:
        req.add_header("X-Sense-Key", key)
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, resp.read().decode()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read().decode()


@pytest.fixture
def server(svc):
    with BackgroundServer(svc) as srv:
        yield srv


def test_http_post_and_get(server, svc):
    status, body = http("POST", server.url + "/events", {"feed_id": "temp", "value": "20.25"})
    assert status == 201
    assert json.loads(body)["entry_id"] == 1
    status, body = http("GET", server.url + "/feeds/temp/events?format=csv")
    assert status == 200 and body.splitlines()[1].startswith("1,temp,20.25,")
    status, body = http("GET", server.url + "/feeds")
    assert json.loads(body) == ["temp", "volts"]


def test_http_error_bodies(server, svc):
    before = svc.digest()
    status, body = http("POST", server.url + "/events", {"feed_id": "temp", "value": "1"}, key="bad")
    assert status == 401 and json.loads(body)["error"] == "unauthorized"
    assert svc.digest() == before
    status, body = http("GET", server.url + "/feeds/nope/events")
    assert status == 404 and json.loads(body)["error"] == "not-found"
    status, body = http("GET", server.url + "/feeds/temp/events?from=5&to=1")
    assert status == 400 and json.loads(body)["error"] == "bad-request"
    status, body = http("GET", server.url + "/feeds/temp/aggregate")
    assert status == 400
    status, _ = http("GET", server.url + "/elsewhere")
    assert status == 404


def test_http_rule_and_notification(server, svc):
    status, _ = http("POST", server.url + "/rules", {"feed_id": "volts", "comparison": "<=", "threshold": 2.1})
    assert status == 201
    _, body = http("POST", server.url + "/events", {"feed_id": "volts", "value": "2.05"})
    assert len(json.loads(body)["notifications"]) == 1
    _, body = http("GET", server.url + "/notifications")
    assert json.loads(body)[0]["channel"] == "email_sim"


def test_http_aggregate(server, svc):
    for t, v in [(0, "1"), (1, "3")]:
        svc.post_event(KEY, "temp", v, now=t)
    _, body = http("GET", server.url + "/feeds/temp/aggregate?window=10&fn=mean")
    assert json.loads(body) == [{"window_start": 0, "value": 2.0}]


def test_http_client(server, svc):
    client = HttpCloud(server.url, KEY)
    client.ensure_feed("humidity")
    assert client.post("humidity", "40.5", now=0) == 1
    assert parse_series(client.get_feed("humidity", "csv"), "csv") == parse_series(client.get_feed("humidity"), "json")
    assert client.entry_count() == 1
    with pytest.raises(CloudUnavailable):
        HttpCloud(server.url, "bad").post("humidity", "1", now=0)


def test_http_client_unreachable():
    with pytest.raises(CloudUnavailable):
        HttpCloud("http://127.0.0.1:9", KEY, timeout=1).post("x", "1", now=0)


def test_http_concurrent_posts(server, svc):
    clients = [HttpCloud(server.url, KEY) for _ in range(8)]
    ids = post_concurrently(lambda c, i: clients[c].post("temp", str(i), now=0), 8, 25)
    for lst in ids:
        assert all(a < b for a, b in zip(lst, lst[1:]))
    assert sorted(i for lst in ids for i in lst) == list(range(1, 201))
