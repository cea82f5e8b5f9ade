"""Deterministic discrete-event engine driving the HotStuff replicas.

Time is real-valued milliseconds. Events are ordered by
``(deliver_at, tiebreak, seq)``: ``tiebreak`` is the sender id, or a
seeded random draw in ``vote_race="random"`` mode, so identical-instant
races resolve deterministically either way.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Optional

from .config import ScenarioConfig, build_validators
from .consensus import (GENESIS_QC, Block, NewView, Proposal, QuorumCertificate, SafetyViolation,
                        ViewState, Vote, leader_of, new_block_store, quorum_size)
from .errors import ConfigError, ContractError, RoutingError
from .geodata import CityRegistry, LatencyMatrix, load_default_dataset, one_way_delay
from .governance import (ContractState, EpochReport, JailState, end_of_epoch, nominate, vouch)
from .metrics import LivelinessRecord, ValidatorProfile, detect_minorities

log = logging.getLogger(__name__)

# delivery instants are rounded so that equal-by-construction paths tie exactly
TIME_DECIMALS = 6
GC_EVERY = 2000
GC_MARGIN = 16


class SimEvent(NamedTuple):
    deliver_at: float
    tiebreak: float
    seq: int
    recipient: int
    payload: Any


class Timer(NamedTuple):
    vid: int


@dataclass(frozen=True)
class Tx:
    tx_id: str
    kind: str
    sender: int
    nominee: int
    epoch: int


@dataclass(frozen=True)
class TxMessage:
    tx: Tx


_KIND_CODE = {}


def jitter(rng: random.Random, j: float) -> float:
    if j < 0:
        raise ValueError("jitter bound must be non-negative")
    if j == 0:
        return 0.0
    return rng.uniform(-j, j)


class EventQueue:
    """Min-heap of :class:`SimEvent` with a monotone pop clock."""

    def __init__(self):
        self.heap: list[SimEvent] = []
        self.seq = 0
        self.now = 0.0

    def __len__(self):
        return len(self.heap)

    def push(self, deliver_at: float, recipient: int, payload, tiebreak: float = 0.0) -> SimEvent:
        if deliver_at < self.now:
            raise ValueError(f"event at {deliver_at} scheduled before now={self.now}")
        ev = SimEvent(deliver_at, tiebreak, self.seq, recipient, payload)
        self.seq += 1
        heapq.heappush(self.heap, ev)
        return ev

    def peek_time(self) -> float:
        return self.heap[0][0] if self.heap else float("inf")

    def pop(self) -> SimEvent:
        ev = heapq.heappop(self.heap)
        self.now = ev.deliver_at
        return ev


class Network:
    """Point-to-point links with latency-matrix delays."""

    def __init__(self, cities: Mapping[int, str], matrix: LatencyMatrix, queue: EventQueue,
                 processing_delay_ms: float = 1.0, jitter_ms: float = 0.0,
                 jitter_rng: Optional[random.Random] = None,
                 race_rng: Optional[random.Random] = None):
        self.queue = queue
        self.processing = processing_delay_ms
        self.jitter_ms = jitter_ms
        self.jitter_rng = jitter_rng or random.Random(0)
        self.race_rng = race_rng
        self.delay = {}
        for a, ca in cities.items():
            for b, cb in cities.items():
                self.delay[(a, b)] = one_way_delay(matrix, ca, cb)
        self.sent = 0

    def send(self, src: int, dst: int, payload, now: float) -> SimEvent:
        try:
            d = self.delay[(src, dst)]
        except KeyError:
            raise RoutingError(f"no route from validator {src} to {dst}") from None
        d += self.processing
        if self.jitter_ms:
            d += jitter(self.jitter_rng, self.jitter_ms)
        at = round(now + max(d, 0.0), TIME_DECIMALS)
        tb = self.race_rng.random() if self.race_rng is not None else src
        self.sent += 1
        return self.queue.push(at, dst, payload, tb)

    def broadcast(self, src: int, payload, now: float, recipients) -> list[SimEvent]:
        return [self.send(src, dst, payload, now) for dst in recipients if dst != src]


@dataclass
class EpochLog:
    epoch: int
    start_ms: float
    end_ms: float
    active: tuple[int, ...]
    first_view: int
    blocks_committed: int
    signed: dict
    commit_digest: str
    timeouts: int
    dropped_messages: int
    report: Optional[EpochReport] = None
    commits: list = field(default_factory=list)

    def liveliness_records(self) -> list[LivelinessRecord]:
        return [LivelinessRecord(v, self.signed.get(v, 0), self.blocks_committed) for v in self.active]


@dataclass
class RunResult:
    config: ScenarioConfig
    validators: list[ValidatorProfile]
    epochs: list[EpochLog]
    trace_hash: str
    safety_ok: bool
    events: int


class Simulation:
    def __init__(self, config: ScenarioConfig, registry: Optional[CityRegistry] = None,
                 matrix: Optional[LatencyMatrix] = None, keep_commits: bool = False):
        if registry is None or matrix is None:
            registry, matrix = load_default_dataset(config.cities_path, config.pings_path)
        self.config = config
        self.cfg = config.epoch_config()
        self.validators = build_validators(config.distribution, registry, matrix)
        if len(self.validators) < 4:
            raise ConfigError("a scenario needs at least 4 validators")
        self.profiles = {v.validator_id: v for v in self.validators}
        self.keep_commits = keep_commits
        seed = config.seed
        self.leader_rng = random.Random(f"{seed}/leaders")
        self.queue = EventQueue()
        self.net = Network(
            {v.validator_id: v.city for v in self.validators}, matrix, self.queue,
            config.processing_delay_ms, config.jitter_ms,
            jitter_rng=random.Random(f"{seed}/jitter"),
            race_rng=random.Random(f"{seed}/race") if config.vote_race == "random" else None,
        )
        self.store = new_block_store()
        self.replicas = {
            vid: ViewState(vid, self.store, self.leader, self.quorum_for, config.timeout_ms)
            for vid in self.profiles
        }
        self.mempool = {vid: {} for vid in self.profiles}
        self.active: frozenset = frozenset(self.profiles)
        self.active_order: tuple[int, ...] = ()
        self.epoch = 0
        self.schedules: list[tuple[int, tuple[int, ...]]] = []
        self.epoch_sizes: list[int] = []
        self.timer_at: dict[int, float] = {}
        self.contract = ContractState()
        self.jail = JailState()
        self.minority_cities: frozenset = frozenset()

        self.ledger: dict[int, str] = {}
        self.head_height = 0
        self.qc_of: dict[str, QuorumCertificate] = {}
        self.applied_txs: set[str] = set()
        self.trace = hashlib.blake2b(digest_size=16)
        self.events = 0
        self.safety_ok = True
        self._since_gc = 0
        self._rejoined: frozenset = frozenset()
        self._trace_buf: list = []
        self._reset_epoch_counters()

    # -- schedule ------------------------------------------------------

    def leader(self, view: int) -> int:
        for first, order in reversed(self.schedules):
            if view >= first:
                return leader_of(view - first + 1, order)
        first, order = self.schedules[0]
        return leader_of(view, order)

    def quorum_for(self, block: Block) -> int:
        return quorum_size(self.epoch_sizes[block.epoch])

    # -- bookkeeping ---------------------------------------------------

    def _reset_epoch_counters(self):
        self.b_total = 0
        self.b_signed: Counter = Counter()
        self.epoch_commits: list = []
        self.commit_hash = hashlib.blake2b(digest_size=16)
        self.timeouts = 0
        self.dropped = 0

    def _flush_trace(self):
        if self._trace_buf:
            self.trace.update(repr(self._trace_buf).encode())
            self._trace_buf = []

    def _global_commit(self, block: Block, now: float):
        known = self.ledger.get(block.height)
        if known is not None and known != block.block_id:
            self.safety_ok = False
            raise SafetyViolation(f"height {block.height}: {known} vs {block.block_id}")
        if block.height <= self.head_height:
            return
        self.ledger[block.height] = block.block_id
        self.head_height = block.height
        qc = self.qc_of.get(block.block_id)
        voters = qc.voters if qc is not None else ()
        self.b_total += 1
        self.b_signed.update(voters)
        self.commit_hash.update(f"{block.height}|{block.block_id}|{now!r}\n".encode())
        if self.keep_commits:
            self.epoch_commits.append((block.height, block.block_id, block.view, block.proposer,
                                       now, tuple(voters)))
        for tx in block.txs:
            self._apply_tx(tx)
        self._since_gc += 1

    def _apply_tx(self, tx: Tx):
        if tx.tx_id in self.applied_txs:
            return
        self.applied_txs.add(tx.tx_id)
        if tx.epoch != self.epoch:
            return
        try:
            if tx.kind == "nominate":
                self.contract = nominate(self.contract, tx.sender, self.active)
            else:
                self.contract = vouch(self.contract, tx.sender, tx.nominee, self.active)
        except ContractError as exc:
            log.debug("contract call rejected: %s", exc)

    def _handle_commits(self, r: ViewState, now: float):
        blocks = r.take_commits()
        if not blocks:
            return
        pool = self.mempool[r.vid]
        for b in blocks:
            self._global_commit(b, now)
            for tx in b.txs:
                pool.pop(tx.tx_id, None)
                if (tx.kind == "nominate" and tx.epoch == self.epoch and tx.sender != r.vid
                        and r.vid in self.active
                        and self.profiles[tx.sender].city in self.minority_cities):
                    self._submit(Tx(f"v{self.epoch}:{r.vid}>{tx.sender}", "vouch", r.vid,
                                    tx.sender, self.epoch), now)
        if self._since_gc >= GC_EVERY:
            self._collect_garbage()

    def _collect_garbage(self):
        self._since_gc = 0
        floor = min(self.replicas[v].committed_height for v in self.active) - GC_MARGIN
        if floor <= 0:
            return
        dead = [bid for bid, b in self.store.items() if b.height < floor and b.height > 0]
        for bid in dead:
            del self.store[bid]
            self.qc_of.pop(bid, None)
        for h in [h for h in self.ledger if h < floor]:
            del self.ledger[h]
        for r in self.replicas.values():
            for d in (r.sealed, r.pending_votes):
                for bid in [k for k in d if k not in self.store]:
                    del d[bid]

    def _submit(self, tx: Tx, now: float):
        for dst in self.active_order:
            self.net.send(tx.sender, dst, TxMessage(tx), now)

    def _pending_txs(self, r: ViewState):
        pool = self.mempool[r.vid]
        if not pool:
            return lambda qc: ()

        def pick(qc: QuorumCertificate) -> tuple:
            included = set()
            b = self.store.get(qc.block)
            while b is not None and b.height > r.committed_height:
                included.update(tx.tx_id for tx in b.txs)
                b = self.store.get(b.parent)
            return tuple(tx for tid, tx in pool.items() if tid not in included)
        return pick

    def _propose(self, r: ViewState, block: Block, own_vote: Vote, now: float):
        self.net.broadcast(r.vid, Proposal(block), now, self.active_order)
        self.net.send(r.vid, own_vote.to, own_vote, now)

    def _arm_timer(self, vid: int):
        at = round(self.replicas[vid].timeout_deadline, TIME_DECIMALS)
        if self.timer_at.get(vid) != at:
            self.timer_at[vid] = at
            self.queue.push(at, vid, Timer(vid), float(vid))

    # -- event dispatch ------------------------------------------------

    def _dispatch(self, ev: SimEvent):
        now, _, _, vid, msg = ev
        self.events += 1
        if vid not in self.active:
            if type(msg) is not Timer:
                self.dropped += 1
            return
        r = self.replicas[vid]
        kind = type(msg)
        buf = self._trace_buf
        buf.append((now, vid, _KIND_CODE[kind]))
        if len(buf) >= 65536:
            self._flush_trace()
        if kind is Proposal:
            vote = r.on_proposal(msg.block, now)
            if vote is not None:
                self.net.send(vid, vote.to, vote, now)
        elif kind is Vote:
            res = r.on_vote(msg, now, self.epoch, self._pending_txs(r))
            if res is not None:
                qc, block, own = res
                self.qc_of.setdefault(qc.block, qc)
                if block is not None:
                    self._propose(r, block, own, now)
        elif kind is NewView:
            res = r.on_new_view(msg, now, quorum_size(len(self.active)), self.epoch,
                                self._pending_txs(r))
            if res is not None:
                self._propose(r, res[0], res[1], now)
        elif kind is TxMessage:
            tx = msg.tx
            if tx.tx_id not in self.applied_txs:
                self.mempool[vid].setdefault(tx.tx_id, tx)
        else:
            if self.timer_at.get(vid) != now:
                return
            del self.timer_at[vid]
            if now >= r.timeout_deadline:
                self.timeouts += 1
                nv = r.on_timeout(now)
                self.net.send(vid, nv.to, nv, now)
            self._arm_timer(vid)
            return
        if r.commit_queue:
            self._handle_commits(r, now)

    # -- epochs --------------------------------------------------------

    def _start_epoch(self, e: int, now: float):
        self.epoch = e
        self.active_order = tuple(sorted(self.active))
        order = list(self.active_order)
        self.leader_rng.shuffle(order)
        if e == 0:
            first = 1
        else:
            first = max(max(r.current_view, r.proposed_view) for r in self.replicas.values()) + 1
        self.schedules.append((first, tuple(order)))
        self.epoch_sizes.append(len(order))
        self.contract = ContractState()
        self.first_view = first
        actives = [self.profiles[v] for v in self.active_order]
        self.minority_cities = frozenset(detect_minorities(actives))

        if e == 0:
            for vid in self.active_order:
                self.replicas[vid].reset_timer(now)
                self._arm_timer(vid)
            leader = self.replicas[self.leader(1)]
            block, own = leader.make_block(1, GENESIS_QC, now, 0)
            self._propose(leader, block, own, now)
        else:
            self._sync_rejoined()
            for vid in self.active_order:
                r = self.replicas[vid]
                nv = r.enter_view(first, now)
                self.net.send(vid, nv.to, nv, now)
                self._arm_timer(vid)

        if self.cfg.solution_enabled:
            for v in actives:
                if v.city in self.minority_cities:
                    self._submit(Tx(f"n{e}:{v.validator_id}", "nominate", v.validator_id,
                                    v.validator_id, e), now)

    def _sync_rejoined(self):
        donor = max((self.replicas[v] for v in self.active_order),
                    key=lambda r: (r.committed_height, r.highest_qc.view, -r.vid))
        for vid in self.active_order:
            r = self.replicas[vid]
            if r.committed_height < donor.committed_height - GC_MARGIN // 2 or vid in self._rejoined:
                r.committed_height = donor.committed_height
                r.last_committed = donor.last_committed
                r.highest_qc = donor.highest_qc
                r.locked_qc = donor.locked_qc
                r.commit_queue.clear()
                self.mempool[vid].clear()

    def run_epoch(self, e: int) -> EpochLog:
        start = e * self.cfg.delta_ms
        end = start + self.cfg.delta_ms
        self._reset_epoch_counters()
        self._start_epoch(e, start)
        q = self.queue
        while q.heap and q.heap[0][0] < end:
            self._dispatch(q.pop())
        log_ = EpochLog(
            epoch=e, start_ms=start, end_ms=end, active=self.active_order,
            first_view=self.first_view, blocks_committed=self.b_total,
            signed={v: self.b_signed.get(v, 0) for v in self.active_order},
            commit_digest=self.commit_hash.hexdigest(), timeouts=self.timeouts,
            dropped_messages=self.dropped, commits=self.epoch_commits,
        )
        prev = self.active
        next_active, report = end_of_epoch(e, log_.liveliness_records(), self.contract,
                                           self.jail, self.cfg, self.profiles)
        log_.report = report
        self.active = frozenset(next_active)
        self._rejoined = self.active - prev
        return log_

    def run(self) -> RunResult:
        logs = [self.run_epoch(e) for e in range(self.cfg.epoch_count)]
        self._flush_trace()
        return RunResult(self.config, self.validators, logs, self.trace.hexdigest(),
                         self.safety_ok, self.events)


_KIND_CODE.update({Proposal: 0, Vote: 1, NewView: 2, TxMessage: 3, Timer: 4})


def run_epochs(config: ScenarioConfig, registry: Optional[CityRegistry] = None,
               matrix: Optional[LatencyMatrix] = None, keep_commits: bool = False) -> RunResult:
    return Simulation(config, registry, matrix, keep_commits).run()
