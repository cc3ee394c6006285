"""Real-time collaboration hub: WebSocket relay, group routing, file store,
and reference physics services that stream world state to subscribers."""

__version__ = "0.1.0"

from .protocol import PROTOCOL_VERSION  # noqa: F401
from .sdk import ServiceAdapter, Session  # noqa: F401
