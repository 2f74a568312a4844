from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from drybeam.actions import EpisodeConfig
from drybeam.cache import RolloutEngine
from drybeam.envs.toy import ToyEnv, ToyEnvSpec
from drybeam.kvstore import InMemoryStore, KVServer, NetworkedStore


@pytest.fixture
def server():
    srv = KVServer().start()
    yield srv
    srv.stop()


def client(server):
    host, port = server.address
    return NetworkedStore(host, port)


class TestProtocol:
    def test_miss_then_hit(self, server):
        store = client(server)
        assert store.get(b"missing") is None
        store.set(b"key", b"\x00\x01binary\nvalue")
        assert store.get(b"key") == b"\x00\x01binary\nvalue"
        store.close()

    def test_empty_value(self, server):
        store = client(server)
        store.set(b"empty", b"")
        assert store.get(b"empty") == b""
        store.close()

    def test_overwrite_last_writer_wins(self, server):
        store = client(server)
        store.set(b"k", b"one")
        store.set(b"k", b"two")
        assert store.get(b"k") == b"two"
        store.close()

    def test_many_clients(self, server):
        def worker(i):
            store = client(server)
            key = f"k{i}".encode()
            store.set(key, bytes([i]) * 100)
            value = store.get(key)
            store.close()
            return value == bytes([i]) * 100

        with ThreadPoolExecutor(max_workers=8) as pool:
            assert all(pool.map(worker, range(16)))


def test_networked_rollouts_match_in_memory(server):
    spec = ToyEnvSpec(n_actions=4, horizon=8, seed=5)
    cfg = EpisodeConfig()
    local = RolloutEngine(lambda: ToyEnv(spec), InMemoryStore())
    remote = RolloutEngine(lambda: ToyEnv(spec), client(server))
    rng = np.random.default_rng(4)
    for _ in range(50):
        actions = rng.integers(0, 4, rng.integers(1, 8)).tolist()
        a = local.rollout(cfg, actions)
        b = remote.rollout(cfg, actions)
        assert a.state == b.state and a.reward == b.reward


def test_in_memory_lru():
    store = InMemoryStore(max_entries=2)
    store.set(b"a", b"1")
    store.set(b"b", b"2")
    store.get(b"a")  # refresh a
    store.set(b"c", b"3")  # evicts b
    assert store.get(b"b") is None
    assert store.get(b"a") == b"1"
    assert store.get(b"c") == b"3"
