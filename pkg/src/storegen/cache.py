"""Storefront cache with TTL, pluggable backends, and single-flight builds.

The cache keys on (user_id, context_hash, config_version) so a context or
config change always misses. Builds for the same cold key are coalesced:
concurrent callers block on one in-flight build and share its result, which
is what keeps serving latency flat once generation sits in the path.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, TypeVar, runtime_checkable

from .model import Storefront
from .serde import storefront_from_record, storefront_to_record

CacheKey = tuple[str, str, str]  # (user_id, context_hash, config_version)

T = TypeVar("T")


@dataclass(frozen=True)
class CacheEntry:
    key: CacheKey
    storefront: Storefront
    created_at: float
    ttl: float

    def expired(self, now: float) -> bool:
        return (now - self.created_at) > self.ttl


@runtime_checkable
class CacheBackend(Protocol):
    def get(self, key: CacheKey) -> CacheEntry | None: ...

    def put(self, entry: CacheEntry) -> None: ...

    def delete(self, key: CacheKey) -> None: ...

    def keys(self) -> list[CacheKey]: ...


class MemoryBackend:
    """In-process dict backend; safe for concurrent readers and writers."""

    def __init__(self) -> None:
        self._entries: dict[CacheKey, CacheEntry] = {}
        self._lock = threading.RLock()

    def get(self, key: CacheKey) -> CacheEntry | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, entry: CacheEntry) -> None:
        with self._lock:
            self._entries[entry.key] = entry

    def delete(self, key: CacheKey) -> None:
        with self._lock:
            self._entries.pop(key, None)

    def keys(self) -> list[CacheKey]:
        with self._lock:
            return list(self._entries)


class FileBackend:
    """One JSON file per entry under a directory; key digest as filename.

    Lets a separate process (the `invalidate` CLI verb) inspect and evict
    entries written by a running service.
    """

    def __init__(self, directory: str | Path) -> None:
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

    def _path(self, key: CacheKey) -> Path:
        digest = hashlib.sha256("\x1f".join(key).encode("utf-8")).hexdigest()
        return self._dir / f"{digest}.json"

    def get(self, key: CacheKey) -> CacheEntry | None:
        path = self._path(key)
        with self._lock:
            if not path.exists():
                return None
            try:
                record = json.loads(path.read_text(encoding="utf-8"))
                return CacheEntry(
                    key=tuple(record["key"]),  # type: ignore[arg-type]
                    storefront=storefront_from_record(record["storefront"]),
                    created_at=float(record["created_at"]),
                    ttl=float(record["ttl"]),
                )
            except (json.JSONDecodeError, KeyError, ValueError, OSError):
                path.unlink(missing_ok=True)
                return None

    def put(self, entry: CacheEntry) -> None:
        record = {
            "key": list(entry.key),
            "storefront": storefront_to_record(entry.storefront),
            "created_at": entry.created_at,
            "ttl": entry.ttl,
        }
        path = self._path(entry.key)
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(record, sort_keys=True), encoding="utf-8")
            tmp.replace(path)

    def delete(self, key: CacheKey) -> None:
        with self._lock:
            self._path(key).unlink(missing_ok=True)

    def keys(self) -> list[CacheKey]:
        out: list[CacheKey] = []
        with self._lock:
            for path in sorted(self._dir.glob("*.json")):
                try:
                    record = json.loads(path.read_text(encoding="utf-8"))
                    key = record["key"]
                    out.append((str(key[0]), str(key[1]), str(key[2])))
                except (json.JSONDecodeError, KeyError, IndexError, OSError):
                    continue
        return out


class _Call:
    __slots__ = ("event", "result", "error")

    def __init__(self) -> None:
        self.event = threading.Event()
        self.result: object = None
        self.error: BaseException | None = None


class SingleFlight:
    """Coalesce concurrent calls per key into one execution.

    The first caller for a key runs the function; everyone else arriving
    before it finishes blocks and shares the result (or the exception).
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._calls: dict[object, _Call] = {}

    def do(self, key: object, fn: Callable[[], T]) -> tuple[T, bool]:
        """Run fn under the key; returns (result, shared_with_leader)."""
        with self._lock:
            call = self._calls.get(key)
            if call is None:
                call = _Call()
                self._calls[key] = call
                leader = True
            else:
                leader = False
        if not leader:
            call.event.wait()
            if call.error is not None:
                raise call.error
            return call.result, True  # type: ignore[return-value]
        try:
            call.result = fn()
        except BaseException as exc:
            call.error = exc
            raise
        finally:
            with self._lock:
                self._calls.pop(key, None)
            call.event.set()
        return call.result, False  # type: ignore[return-value]


class StorefrontCache:
    """TTL cache over a backend, with single-flight build coalescing."""

    def __init__(
        self,
        backend: CacheBackend | None = None,
        ttl: float = 3600.0,
        clock: Callable[[], float] = time.time,
    ) -> None:
        self.backend = backend if backend is not None else MemoryBackend()
        self.ttl = float(ttl)
        self._clock = clock
        self.flights = SingleFlight()

    def get(self, key: CacheKey) -> Storefront | None:
        entry = self.backend.get(key)
        if entry is None:
            return None
        if entry.expired(self._clock()):
            self.backend.delete(key)
            return None
        return entry.storefront

    def put(self, key: CacheKey, storefront: Storefront) -> None:
        self.backend.put(
            CacheEntry(key=key, storefront=storefront, created_at=self._clock(), ttl=self.ttl)
        )

    def invalidate(self, predicate: Callable[[CacheKey], bool]) -> int:
        """Evict entries whose key matches the predicate; returns the count."""
        evicted = 0
        for key in self.backend.keys():
            if predicate(key):
                self.backend.delete(key)
                evicted += 1
        return evicted

    def keys(self) -> Iterable[CacheKey]:
        return self.backend.keys()
