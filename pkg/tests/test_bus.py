import pytest

from linewatch.bus import BusError, MessageBus, TopicConfig


def make_bus(**config):
    bus = MessageBus(seed=123)
    bus.configure("topic", TopicConfig(**{"rate": 100.0, **config}))
    return bus


class TestDelivery:
    def test_delivered_exactly_at_latency(self):
        bus = make_bus(latency=0.005)
        bus.publish("topic", "m", now=1.0)
        assert bus.poll("sub", "topic", now=1.004) == []
        assert bus.poll("sub", "topic", now=1.005) == ["m"]

    def test_nothing_before_publish_plus_latency(self):
        bus = make_bus(latency=0.5)
        for k in range(100):
            bus.publish("topic", k, now=k * 0.01)
        early = bus.poll("sub", "topic", now=0.49)
        assert early == []

    def test_full_drop(self):
        bus = make_bus(drop_probability=1.0)
        assert not bus.publish("topic", "m", now=0.0)
        assert bus.poll("sub", "topic", now=10.0) == []
        stats = bus.stats()["topic"]
        assert stats["published"] == 1
        assert stats["accepted"] == 1
        assert stats["random_dropped"] == 1

    def test_fifo_order(self):
        bus = make_bus(latency=0.01)
        for k in range(50):
            bus.publish("topic", k, now=k * 0.01)
        received = bus.poll("sub", "topic", now=10.0)
        assert received == sorted(received)

    def test_cursor_does_not_replay(self):
        bus = make_bus()
        bus.publish("topic", 1, now=0.0)
        assert bus.poll("sub", "topic", now=0.0) == [1]
        assert bus.poll("sub", "topic", now=1.0) == []

    def test_independent_subscribers(self):
        bus = make_bus()
        bus.publish("topic", 1, now=0.0)
        assert bus.poll("a", "topic", now=0.0) == [1]
        assert bus.poll("b", "topic", now=0.0) == [1]


class TestRateLimit:
    def test_excess_publishes_dropped_and_counted(self):
        bus = make_bus(rate=10.0)
        assert bus.publish("topic", 1, now=0.0)
        assert not bus.publish("topic", 2, now=0.05)  # < 0.1 s spacing
        assert bus.publish("topic", 3, now=0.1)
        stats = bus.stats()["topic"]
        assert stats["rate_dropped"] == 1
        assert stats["accepted"] == 2


class TestRandomDrop:
    def test_binomial_interval(self):
        bus = make_bus(rate=1e6, drop_probability=0.1)
        delivered = 0
        for k in range(10000):
            if bus.publish("topic", k, now=k * 1e-5):
                delivered += 1
        assert 8800 <= delivered <= 9200
        stats = bus.stats()["topic"]
        assert stats["delivered_scheduled"] == delivered
        assert stats["random_dropped"] == 10000 - delivered

    def test_same_seed_same_outcome(self):
        outcomes = []
        for _ in range(2):
            bus = make_bus(rate=1e6, drop_probability=0.3)
            outcomes.append(
                [bus.publish("topic", k, now=k * 1e-5) for k in range(500)]
            )
        assert outcomes[0] == outcomes[1]


def test_unknown_topic_raises():
    bus = MessageBus(seed=1)
    with pytest.raises(BusError):
        bus.publish("nope", "m", now=0.0)
    with pytest.raises(BusError):
        bus.poll("sub", "nope", now=0.0)


def test_invalid_configs_rejected():
    with pytest.raises(ValueError):
        TopicConfig(rate=0.0)
    with pytest.raises(ValueError):
        TopicConfig(rate=1.0, latency=-0.1)
    with pytest.raises(ValueError):
        TopicConfig(rate=1.0, drop_probability=1.5)
