"""Mock supervision layer: feed store, alert rules, HTTP front end, clients."""

from .client import CloudUnavailable, HttpCloud, LocalCloud
from .rules import AlertRule, LatencyModel, Notification
from .server import BackgroundServer, make_server
from .store import AuthError, BadRequest, CloudError, FeedEntry, FeedService, NotFound, parse_series

__all__ = [
    "AlertRule", "AuthError", "BackgroundServer", "BadRequest", "CloudError", "CloudUnavailable", "FeedEntry",
    "FeedService", "HttpCloud", "LatencyModel", "LocalCloud", "NotFound", "Notification", "make_server",
    "parse_series",
]
