"""HTTP serving over the storefront cache.

Endpoints:
    GET /storefront/{user_id}  storefront record, cache-first
    GET /health                status, artifact digests, config version

Known users are built on miss through the single-flight cache; unknown
users get the fallback page unless fallback is disabled, in which case the
response is 404. A response-byte cache sits in front of serialization so a
warm hit is a dict lookup plus a socket write.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Mapping

from .cache import StorefrontCache
from .config import AppConfig
from .model import Provenance, Storefront, UserContext
from .pipeline import PipelineDeps, get_or_build
from .serde import dumps_record, storefront_to_record

logger = logging.getLogger(__name__)


@dataclass
class StorefrontService:
    config: AppConfig
    deps: PipelineDeps
    cache: StorefrontCache
    contexts: Mapping[str, UserContext]
    artifact_digest: Mapping[str, Any] = field(default_factory=dict)
    fallback_enabled: bool = True
    _hot: dict[str, bytes] = field(default_factory=dict)
    _hot_lock: threading.Lock = field(default_factory=threading.Lock)

    def _context_for(self, user_id: str) -> UserContext | None:
        ctx = self.contexts.get(user_id)
        if ctx is not None:
            return ctx
        if not self.fallback_enabled:
            return None
        # No context record: serve the static plan under an empty context.
        return UserContext(user_id=user_id)

    def get_storefront(self, user_id: str) -> tuple[int, bytes]:
        with self._hot_lock:
            hot = self._hot.get(user_id)
        if hot is not None:
            return 200, hot
        ctx = self._context_for(user_id)
        if ctx is None:
            return 404, json.dumps({"error": f"unknown user {user_id}"}).encode("utf-8")
        storefront = get_or_build(
            user_id,
            ctx,
            self.config.policy_constraints(),
            self.config.pipeline_config(),
            self.cache,
            self.deps,
        )
        body = dumps_record(storefront_to_record(storefront)).encode("utf-8")
        if storefront.provenance is Provenance.CACHED:
            # Only the steady-state (cached) representation is pinned so the
            # first response still reports its true build provenance.
            with self._hot_lock:
                self._hot.setdefault(user_id, body)
        return 200, body

    def seed_response_cache(self, storefront: Storefront) -> None:
        """Pre-pin the serialized cached form of a storefront (warmup)."""
        from dataclasses import replace

        body = dumps_record(
            storefront_to_record(replace(storefront, provenance=Provenance.CACHED))
        ).encode("utf-8")
        with self._hot_lock:
            self._hot[storefront.user_id] = body

    def health(self) -> tuple[int, bytes]:
        body = {
            "status": "ok",
            "config_version": self.config.config_version,
            "artifacts": dict(self.artifact_digest),
            "users_loaded": len(self.contexts),
            "fallback_enabled": self.fallback_enabled,
        }
        return 200, json.dumps(body, sort_keys=True).encode("utf-8")

    def invalidate_user(self, user_id: str) -> int:
        with self._hot_lock:
            self._hot.pop(user_id, None)
        return self.cache.invalidate(lambda key: key[0] == user_id)


def make_handler(service: StorefrontService) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args: Any) -> None:
            logger.debug("http: " + fmt, *args)

        def _send(self, status: int, body: bytes) -> None:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:  # noqa: N802 (http.server API)
            try:
                if self.path == "/health":
                    status, body = service.health()
                elif self.path.startswith("/storefront/"):
                    user_id = self.path[len("/storefront/") :]
                    if not user_id or "/" in user_id:
                        status, body = 404, b'{"error":"bad path"}'
                    else:
                        status, body = service.get_storefront(user_id)
                else:
                    status, body = 404, b'{"error":"not found"}'
            except Exception:
                logger.exception("request failed: %s", self.path)
                status, body = 500, b'{"error":"internal"}'
            self._send(status, body)

    return Handler


def create_server(service: StorefrontService, port: int = 0, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Bind a threading HTTP server; port 0 picks an ephemeral port."""
    server = ThreadingHTTPServer((host, port), make_handler(service))
    server.daemon_threads = True
    return server


def serve_forever(service: StorefrontService, port: int, host: str = "127.0.0.1") -> None:
    server = create_server(service, port=port, host=host)
    bound_port = server.server_address[1]
    logger.info("serving on http://%s:%d", host, bound_port)
    print(f"serving on http://{host}:{bound_port} (config {service.config.config_version})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
