import json
import threading
import urllib.error
import urllib.request

import pytest

from candlecast import harness
from candlecast.errors import ConfigError
from candlecast.harness import Cell
from candlecast.server import Predictor, make_server
from test_harness import config, data_dir  # noqa: F401  (fixture)


@pytest.fixture
def predictor(data_dir, tmp_path):  # noqa: F811
    cfg = config(data_dir, tmp_path / "out", [Cell("KNN", 5, 20, False), Cell("KNN", 10, 20, True)])
    harness.run_experiment(cfg)
    return Predictor.from_config(cfg, "KNN")


@pytest.fixture
def base_url(predictor):
    server = make_server(predictor, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def get(url):
    try:
        with urllib.request.urlopen(url) as r:
            return r.status, r.read()
    except urllib.error.HTTPError as e:
        return e.code, e.read()


def test_health(base_url):
    assert get(base_url + "/health") == (200, b'{"status":"ok"}')


def test_predict_schema(base_url):
    status, body = get(base_url + "/predict?ticker=MOMO&date=2000-05-01&period=5&dim=20&vol=0")
    assert status == 200
    doc = json.loads(body)
    assert set(doc) == {"label", "prob", "window_end"}
    assert doc["label"] in ("up", "down") and 0 <= doc["prob"] <= 1
    assert doc["prob"] == round(doc["prob"], 2)
    assert doc["window_end"] == "2000-04-28"


def test_same_query_byte_identical(base_url):
    url = base_url + "/predict?ticker=MOMO&date=2000-05-10&period=10&dim=20&vol=1"
    assert get(url) == get(url)


def test_concurrent_requests(base_url):
    url = base_url + "/predict?ticker=MOMO&date=2000-05-10&period=5&dim=20&vol=0"
    results = []
    threads = [threading.Thread(target=lambda: results.append(get(url))) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results) == 8 and len(set(results)) == 1 and results[0][0] == 200


@pytest.mark.parametrize(
    "query, status",
    [
        ("ticker=NOPE&date=2000-05-01&period=5&dim=20&vol=0", 404),
        ("ticker=MOMO&date=2000-05-01&period=20&dim=20&vol=0", 404),
        ("ticker=MOMO&date=2000-01-04&period=5&dim=20&vol=0", 404),
        ("ticker=MOMO&date=2000-13-01&period=5&dim=20&vol=0", 400),
        ("ticker=MOMO&period=5&dim=20&vol=0", 400),
        ("ticker=MOMO&date=2000-05-01&period=five&dim=20&vol=0", 400),
        ("ticker=MOMO&date=2000-05-01&period=5&dim=20&vol=2", 400),
    ],
)
def test_errors(base_url, query, status):
    code, body = get(base_url + "/predict?" + query)
    assert code == status and "error" in json.loads(body)


def test_unknown_route(base_url):
    assert get(base_url + "/nope")[0] == 404


def test_no_checkpoints(data_dir, tmp_path):  # noqa: F811
    with pytest.raises(ConfigError):
        Predictor.from_config(config(data_dir, tmp_path / "empty"), "KNN")
