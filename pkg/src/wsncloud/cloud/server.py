"""HTTP/1.1 front end for :class:`FeedService`.

Routes::

    POST /feeds                         {"feed_id": ...}            (key)
    POST /events                        {"feed_id": ..., "value": ...} (key)
    GET  /feeds                         list feed ids
    GET  /feeds/{id}/events?from=&to=&format=json|csv
    GET  /feeds/{id}/aggregate?window=&fn=
    POST /rules                         {"feed_id", "comparison", "threshold", "target"} (key)
    GET  /rules
    GET  /notifications

The key travels in the ``X-Sense-Key`` header.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from .store import BadRequest, CloudError, FeedService, NotFound

logger = logging.getLogger(__name__)

KEY_HEADER = "X-Sense-Key"


def _float_param(params: dict, name: str) -> float | None:
    raw = params.get(name, [""])[0]
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise BadRequest(f"{name}={raw!r} is not a number") from None


class FeedRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "wsncloud/0.1"
    service: FeedService  # injected by make_server

    def log_message(self, format, *args):
        logger.debug("%s - %s", self.address_string(), format % args)

    def _send(self, status: int, body: str, content_type: str = "application/json") -> None:
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", f"{content_type}; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj))

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            body = json.loads(raw or b"{}")
        except json.JSONDecodeError:
            raise BadRequest("body is not valid JSON") from None
        if not isinstance(body, dict):
            raise BadRequest("body must be a JSON object")
        return body

    def _dispatch(self, method: str) -> None:
        url = urlsplit(self.path)
        parts = [unquote(p) for p in url.path.strip("/").split("/") if p]
        params = parse_qs(url.query)
        key = self.headers.get(KEY_HEADER)
        svc = self.service
        try:
            if method == "POST":
                # drain the body before any auth decision so keep-alive stays in sync
                body = self._body()
            if method == "POST" and parts == ["events"]:
                entry = svc.post_event(key, str(body.get("feed_id", "")), body.get("value", ""))
                fired = [n.to_dict() for n in svc.notifications() if n.entry_id == entry.entry_id]
                self._json(201, {**entry.to_dict(), "notifications": fired})
            elif method == "POST" and parts == ["feeds"]:
                svc.create_feed(key, str(body.get("feed_id", "")))
                self._json(201, {"feed_id": body.get("feed_id")})
            elif method == "POST" and parts == ["rules"]:
                if "feed_id" not in body:
                    raise BadRequest("feed_id is required")
                rule = svc.add_rule(
                    key,
                    str(body["feed_id"]),
                    body.get("comparison", "<="),
                    body.get("threshold", 2.1),
                    body.get("target", "email_sim"),
                )
                self._json(201, rule.to_dict())
            elif method == "GET" and parts == ["feeds"]:
                self._json(200, svc.feeds())
            elif method == "GET" and len(parts) == 3 and parts[0] == "feeds" and parts[2] == "events":
                fmt = params.get("format", ["json"])[0]
                text = svc.get_feed(parts[1], _float_param(params, "from"), _float_param(params, "to"), fmt)
                self._send(200, text, "text/csv" if fmt == "csv" else "application/json")
            elif method == "GET" and len(parts) == 3 and parts[0] == "feeds" and parts[2] == "aggregate":
                window = _float_param(params, "window")
                if window is None:
                    raise BadRequest("window is required")
                series = svc.aggregate(parts[1], window, params.get("fn", ["mean"])[0])
                self._json(200, [{"window_start": s, "value": v} for s, v in series])
            elif method == "GET" and parts == ["rules"]:
                self._json(200, [r.to_dict() for r in svc.rules()])
            elif method == "GET" and parts == ["notifications"]:
                self._json(200, [n.to_dict() for n in svc.notifications()])
            else:
                raise NotFound(f"no route for {method} {url.path}")
        except CloudError as exc:
            self._json(exc.status, exc.to_dict())

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


def make_server(service: FeedService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundFeedRequestHandler", (FeedRequestHandler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class BackgroundServer:
    """Context manager running the HTTP front end on a daemon thread."""

    def __init__(self, service: FeedService, host: str = "127.0.0.1", port: int = 0):
        self.service = service
        self.server = make_server(service, host, port)
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "BackgroundServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()
        self._thread.join(timeout=5)
