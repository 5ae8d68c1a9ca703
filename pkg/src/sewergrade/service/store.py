"""Append-only JSON-lines event log; the service's single source of truth."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from ..errors import ServiceError

__all__ = ["Event", "EventLog"]


@dataclass(frozen=True)
class Event:
    seq: int
    ts: float
    kind: str
    payload: dict


class EventLog:
    """Serialized appends to one JSONL file; replay streams it back."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._next_seq = self._count_existing() + 1

    def _count_existing(self) -> int:
        if not self.path.exists():
            return 0
        with self.path.open("rb") as fh:
            return sum(1 for line in fh if line.strip())

    def append(self, kind: str, payload: dict, ts: float) -> Event:
        with self._lock:
            event = Event(seq=self._next_seq, ts=ts, kind=kind, payload=payload)
            line = json.dumps(
                {"seq": event.seq, "ts": ts, "kind": kind, "payload": payload},
                separators=(",", ":"),
            )
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._next_seq += 1
            return event

    def replay(self) -> Iterator[Event]:
        if not self.path.exists():
            return
        with self.path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    yield Event(
                        seq=raw["seq"],
                        ts=raw["ts"],
                        kind=raw["kind"],
                        payload=raw["payload"],
                    )
                except (json.JSONDecodeError, KeyError) as err:
                    raise ServiceError(
                        f"{self.path}:{lineno}: unreadable event ({err})"
                    ) from err
