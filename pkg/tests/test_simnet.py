import random

import pytest

from geodec.config import ScenarioConfig
from geodec.consensus import quorum_size
from geodec.errors import ConfigError, RoutingError
from geodec.geodata import LatencyMatrix
from geodec.simnet import EventQueue, Network, jitter, run_epochs

M = LatencyMatrix(("a", "b"), {("a", "b"): 110.0, ("b", "a"): 110.0})
SGP_SCENARIO = {"san jose": 8, "helsinki": 7, "singapore": 1}


def net(cities, **kw):
    q = EventQueue()
    return q, Network(cities, M, q, **kw)


def test_send_colocated():
    q, n = net({0: "a", 1: "a"})
    assert n.send(0, 1, "x", now=100.0).deliver_at == 101.0


def test_send_across_cities():
    q, n = net({0: "a", 1: "b"})
    assert n.send(0, 1, "x", now=100.0).deliver_at == 156.0


def test_broadcast_sixteen():
    q, n = net({i: "a" if i % 2 else "b" for i in range(16)})
    events = n.broadcast(3, "p", 0.0, range(16))
    assert len(events) == 15 and len(q) == 15
    assert 3 not in {e.recipient for e in events}


def test_unknown_validator():
    q, n = net({0: "a", 1: "b"})
    with pytest.raises(RoutingError):
        n.send(0, 7, "x", 0.0)


def test_jitter():
    rng = random.Random(1)
    assert jitter(rng, 0) == 0.0
    draws = [jitter(rng, 5) for _ in range(1000)]
    assert all(-5 <= d <= 5 for d in draws)
    a = [jitter(random.Random(9), 5) for _ in range(3)]
    b = [jitter(random.Random(9), 5) for _ in range(3)]
    assert a == b
    with pytest.raises(ValueError):
        jitter(rng, -1)


def test_jittered_delivery_never_precedes_send():
    q, n = net({0: "a", 1: "a"}, processing_delay_ms=0.0, jitter_ms=5.0,
               jitter_rng=random.Random(3))
    for t in range(200):
        assert n.send(0, 1, "x", float(t)).deliver_at >= t


def test_queue_order_and_past_events():
    q = EventQueue()
    q.push(5.0, 0, "late")
    q.push(1.0, 0, "b", tiebreak=2)
    q.push(1.0, 0, "a", tiebreak=1)
    q.push(1.0, 0, "c", tiebreak=2)
    assert [q.pop().payload for _ in range(4)] == ["a", "b", "c", "late"]
    with pytest.raises(ValueError):
        q.push(4.0, 0, "past")


@pytest.fixture(scope="module")
def sgp_run(dataset):
    cfg = ScenarioConfig(distribution=SGP_SCENARIO, delta_ms=30_000, seed=11, pi=0)
    return run_epochs(cfg, *dataset, keep_commits=True)


def test_five_epochs_all_commit(sgp_run):
    assert len(sgp_run.epochs) == 5
    assert all(log.blocks_committed > 0 for log in sgp_run.epochs)
    assert sgp_run.safety_ok


def test_every_commit_carries_a_full_quorum(sgp_run):
    heights = []
    for log in sgp_run.epochs:
        for height, _, _, _, at, voters in log.commits:
            assert len(voters) == len(set(voters)) == quorum_size(16)
            assert log.start_ms <= at < log.end_ms
            heights.append(height)
        # signed counts add up to |Q| per committed block
        assert sum(log.signed.values()) == quorum_size(16) * log.blocks_committed
    assert heights == list(range(1, len(heights) + 1))


def test_same_seed_same_trace(dataset, sgp_run):
    cfg = ScenarioConfig(distribution=SGP_SCENARIO, delta_ms=30_000, seed=11, pi=0)
    again = run_epochs(cfg, *dataset)
    assert again.trace_hash == sgp_run.trace_hash
    assert [l.commit_digest for l in again.epochs] == [l.commit_digest for l in sgp_run.epochs]


def test_random_race_mode_is_seeded(dataset):
    cfg = ScenarioConfig(distribution={"paris": 6}, delta_ms=500, seed=4, vote_race="random",
                         epoch_count=2)
    a, b = run_epochs(cfg, *dataset), run_epochs(cfg, *dataset)
    assert a.trace_hash == b.trace_hash
    c = run_epochs(cfg.replace(seed=5), *dataset)
    assert c.trace_hash != a.trace_hash


def test_single_epoch(dataset):
    cfg = ScenarioConfig(distribution={"paris": 4}, delta_ms=1000, epoch_count=1)
    assert len(run_epochs(cfg, *dataset).epochs) == 1


def test_too_few_validators():
    with pytest.raises(ConfigError):
        ScenarioConfig(distribution={"paris": 3})


def test_unknown_city(dataset):
    with pytest.raises(ConfigError, match="atlantis"):
        run_epochs(ScenarioConfig(distribution={"atlantis": 4}), *dataset)


def test_jailed_validator_leaves_next_set(dataset):
    cfg = ScenarioConfig(distribution=SGP_SCENARIO, delta_ms=20_000, seed=2, pi=20, epoch_count=3)
    res = run_epochs(cfg, *dataset)
    first = res.epochs[0].report
    assert 15 in first.jailed
    assert 15 not in res.epochs[1].active
    # jail_duration 1: back for the epoch after
    assert 15 in res.epochs[2].active
    assert res.safety_ok


def test_longer_jail_keeps_validator_out(dataset):
    cfg = ScenarioConfig(distribution=SGP_SCENARIO, delta_ms=20_000, seed=2, pi=20,
                         epoch_count=4, jail_duration=2)
    res = run_epochs(cfg, *dataset)
    assert 15 in res.epochs[0].report.jailed
    assert [15 in log.active for log in res.epochs] == [True, False, False, True]
