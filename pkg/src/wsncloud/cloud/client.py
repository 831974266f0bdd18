"""Coordinator-side uplinks to the feed service: in-process or over HTTP."""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from urllib.parse import quote, urlencode

from .rules import Notification
from .server import KEY_HEADER
from .store import CloudError, FeedService


class CloudUnavailable(Exception):
    """The uplink failed (connection refused, timeout, 5xx or a rejected post)."""


class LocalCloud:
    """Calls a :class:`FeedService` directly, stamping entries with virtual time."""

    def __init__(self, service: FeedService, key: str):
        self.service = service
        self.key = key

    def ensure_feed(self, feed_id: str) -> None:
        self.service.create_feed(self.key, feed_id)

    def add_rule(self, feed_id: str, comparison: str = "<=", threshold: float = 2.1,
                 target: str = "email_sim") -> None:
        self.service.add_rule(self.key, feed_id, comparison, threshold, target)

    def post(self, feed_id: str, value: str, now: float) -> int:
        try:
            return self.service.post_event(self.key, feed_id, value, now).entry_id
        except CloudError as exc:
            raise CloudUnavailable(f"{exc.code}: {exc.detail}") from exc

    def notifications(self) -> list[Notification]:
        return self.service.notifications()

    def entry_count(self) -> int:
        return self.service.entry_count()


class HttpCloud:
    """Talks to a remote ``wsncloud serve`` instance. Entries get the server's clock."""

    def __init__(self, base_url: str, key: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.key = key
        self.timeout = timeout

    def _request(self, method: str, path: str, body: dict | None = None):
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method)
        req.add_header(KEY_HEADER, self.key)
        if data is not None:
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read() or b"null")
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            raise CloudUnavailable(f"HTTP {exc.code}: {detail}") from None
        except (urllib.error.URLError, OSError) as exc:
            raise CloudUnavailable(str(exc)) from None

    def ensure_feed(self, feed_id: str) -> None:
        self._request("POST", "/feeds", {"feed_id": feed_id})

    def add_rule(self, feed_id: str, comparison: str = "<=", threshold: float = 2.1,
                 target: str = "email_sim") -> None:
        self._request("POST", "/rules", {"feed_id": feed_id, "comparison": comparison,
                                         "threshold": threshold, "target": target})

    def post(self, feed_id: str, value: str, now: float) -> int:
        return int(self._request("POST", "/events", {"feed_id": feed_id, "value": value})["entry_id"])

    def get_feed(self, feed_id: str, fmt: str = "json", start: float | None = None,
                 end: float | None = None) -> str:
        query = {"format": fmt}
        if start is not None:
            query["from"] = start
        if end is not None:
            query["to"] = end
        req = urllib.request.Request(f"{self.base_url}/feeds/{quote(feed_id)}/events?{urlencode(query)}")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read().decode("utf-8")

    def notifications(self) -> list[Notification]:
        return [Notification(**n) for n in self._request("GET", "/notifications")]

    def entry_count(self) -> int:
        return sum(len(json.loads(self.get_feed(f))) for f in self._request("GET", "/feeds"))
