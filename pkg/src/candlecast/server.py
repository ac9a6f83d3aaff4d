"""Read-only JSON prediction endpoint.

    GET /health
        {"status":"ok"}
    GET /predict?ticker=T&date=YYYY-MM-DD&period=P&dim=D&vol=0|1
        {"label":"up|down","prob":0.xx,"window_end":"YYYY-MM-DD"}

``prob`` is the probability of the returned label, rounded to two decimals.
Unknown tickers or cells give 404, malformed queries 400; both with a JSON
``{"error": ...}`` body. Models and series are loaded once at start-up and
never mutated, so requests are served concurrently.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .errors import ConfigError, DataError
from .harness import Cell, ExperimentConfig, load_any, load_series, predict_window
from .market_data import Series

log = logging.getLogger(__name__)


class Predictor:
    def __init__(self, series: dict[str, Series], models: dict[tuple[int, int, bool], tuple[Cell, object]]):
        self.series = series
        self.models = models

    @classmethod
    def from_config(cls, config: ExperimentConfig, classifier: str = "CNN") -> "Predictor":
        series = {s.ticker: s for s in load_series(config)}
        models = {}
        for cell in config.cells:
            if cell.classifier != classifier:
                continue
            path = config.out_dir / "checkpoints" / cell.checkpoint_name
            if path.is_file():
                models[(cell.period, cell.dimension, cell.volume)] = (cell, load_any(path, cell))
        if not models:
            raise ConfigError(f"no {classifier} checkpoints under {config.out_dir / 'checkpoints'}")
        return cls(series, models)

    def answer(self, query: dict[str, list[str]]) -> tuple[int, dict]:
        try:
            ticker = query["ticker"][0]
            date = dt.date.fromisoformat(query["date"][0])
            period, dim = int(query["period"][0]), int(query["dim"][0])
            vol = query["vol"][0]
            if vol not in ("0", "1"):
                raise ValueError("vol must be 0 or 1")
        except (KeyError, IndexError, ValueError) as exc:
            return HTTPStatus.BAD_REQUEST, {"error": f"malformed query: {exc}"}
        if ticker not in self.series:
            return HTTPStatus.NOT_FOUND, {"error": f"unknown ticker {ticker}"}
        key = (period, dim, vol == "1")
        if key not in self.models:
            return HTTPStatus.NOT_FOUND, {"error": f"no model for period={period} dim={dim} vol={vol}"}
        cell, model = self.models[key]
        try:
            pred = predict_window(model, self.series[ticker], date, cell)
        except DataError as exc:
            return HTTPStatus.NOT_FOUND, {"error": str(exc)}
        return HTTPStatus.OK, {"label": str(pred.label), "prob": round(pred.prob, 2), "window_end": pred.window_end.isoformat()}


def _handler(predictor: Predictor):
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body, separators=(",", ":")).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/health":
                self._send(HTTPStatus.OK, {"status": "ok"})
            elif url.path == "/predict":
                self._send(*predictor.answer(parse_qs(url.query)))
            else:
                self._send(HTTPStatus.NOT_FOUND, {"error": f"no route {url.path}"})

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

    return Handler


def make_server(predictor: Predictor, port: int = 8000, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), _handler(predictor))


def serve(config: ExperimentConfig, port: int = 8000, classifier: str = "CNN", host: str = "127.0.0.1") -> None:
    server = make_server(Predictor.from_config(config, classifier), port, host)
    log.info("serving on http://%s:%d", host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
