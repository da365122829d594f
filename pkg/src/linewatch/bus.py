"""Rate-limited publish/subscribe message transport with latency and loss.

Topics accept publishes at most at their configured rate (excess is
dropped and counted as a rate violation, mirroring real-time transport
semantics), survivors of the seeded random drop are delivered exactly at
publish time + latency, and per-topic FIFO order is preserved. The whole
bus is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


class BusError(KeyError):
    """Publish or poll on a topic that was never configured."""


@dataclass(frozen=True)
class TopicConfig:
    rate: float  # max accepted publishes per second
    latency: float = 0.0
    drop_probability: float = 0.0
    stream: int = 0

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError("rate must be > 0")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop probability must be in [0, 1]")


@dataclass
class _Topic:
    config: TopicConfig
    rng: np.random.Generator
    deliveries: list = field(default_factory=list)  # (deliver_time, seq, message)
    last_accepted: Optional[float] = None
    published: int = 0
    accepted: int = 0
    rate_dropped: int = 0
    random_dropped: int = 0
    scheduled: int = 0


class MessageBus:
    def __init__(self, seed: int):
        self._seed = seed
        self._topics: dict[str, _Topic] = {}
        self._cursors: dict[tuple[str, str], int] = {}
        self._seq = 0

    def configure(self, name: str, config: TopicConfig) -> None:
        self._topics[name] = _Topic(
            config=config,
            rng=np.random.default_rng([self._seed, 0xB05, config.stream]),
        )

    def _topic(self, name: str) -> _Topic:
        topic = self._topics.get(name)
        if topic is None:
            raise BusError(f"topic {name!r} is not configured")
        return topic

    def publish(self, name: str, message: Any, now: float) -> bool:
        """True iff the message was accepted and scheduled for delivery."""
        topic = self._topic(name)
        topic.published += 1
        min_interval = 1.0 / topic.config.rate
        if topic.last_accepted is not None and now - topic.last_accepted < min_interval - 1e-12:
            topic.rate_dropped += 1
            return False
        topic.last_accepted = now
        topic.accepted += 1
        if topic.config.drop_probability > 0.0:
            if topic.rng.random() < topic.config.drop_probability:
                topic.random_dropped += 1
                return False
        self._seq += 1
        topic.deliveries.append((now + topic.config.latency, self._seq, message))
        topic.scheduled += 1
        return True

    def poll(self, subscriber: str, name: str, now: float) -> list[Any]:
        """Messages due for this subscriber, in per-topic FIFO order."""
        topic = self._topic(name)
        key = (subscriber, name)
        cursor = self._cursors.get(key, 0)
        out = []
        while cursor < len(topic.deliveries):
            deliver_time, _, message = topic.deliveries[cursor]
            if deliver_time > now + 1e-12:
                break
            out.append(message)
            cursor += 1
        self._cursors[key] = cursor
        return out

    def stats(self) -> dict:
        return {
            name: {
                "published": topic.published,
                "accepted": topic.accepted,
                "rate_dropped": topic.rate_dropped,
                "random_dropped": topic.random_dropped,
                "delivered_scheduled": topic.scheduled,
            }
            for name, topic in sorted(self._topics.items())
        }
