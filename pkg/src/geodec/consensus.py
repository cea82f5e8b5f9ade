"""Chained HotStuff replica logic.

Handlers never touch the network: each returns the message(s) the
replica wants sent and the caller routes them. Blocks live in a shared
store (block bodies are immutable and sync is not modelled); everything
else is per-replica.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, MutableMapping, Optional, Sequence

from .errors import DomainError
from .metrics import quorum_cardinality

log = logging.getLogger(__name__)

GENESIS_ID = "genesis"


class SafetyViolation(RuntimeError):
    """Two different blocks were committed at the same height."""


def quorum_size(n: int) -> int:
    if n < 4:
        raise DomainError(f"a validator set needs at least 4 members, got {n}")
    return quorum_cardinality(n)


def leader_of(view: int, epoch_order: Sequence[int]) -> int:
    return epoch_order[(view - 1) % len(epoch_order)]


@dataclass(frozen=True)
class QuorumCertificate:
    block: str
    view: int
    voters: tuple[int, ...]

    @property
    def voter_set(self) -> frozenset:
        return frozenset(self.voters)


GENESIS_QC = QuorumCertificate(GENESIS_ID, 0, ())


@dataclass(frozen=True)
class Block:
    block_id: str
    view: int
    proposer: int
    parent: str
    justify: QuorumCertificate
    height: int
    epoch: int = 0
    txs: tuple = ()

    def well_formed(self) -> bool:
        return self.view > self.justify.view and self.parent == self.justify.block


GENESIS = Block(GENESIS_ID, 0, -1, "", GENESIS_QC, 0)


def block_token(view: int, proposer: int, parent: str) -> str:
    digest = hashlib.blake2b(f"{view}|{proposer}|{parent}".encode(), digest_size=6).hexdigest()
    return f"{view}-{digest}"


@dataclass(frozen=True)
class Proposal:
    block: Block


@dataclass(frozen=True)
class Vote:
    block: str
    view: int
    voter: int
    to: int


@dataclass(frozen=True)
class NewView:
    view: int
    qc: QuorumCertificate
    sender: int
    to: int


def new_block_store() -> dict[str, Block]:
    return {GENESIS_ID: GENESIS}


@dataclass
class ViewState:
    """One validator's replica of the protocol.

    ``leader`` maps a view to its leader, ``quorum_for`` maps a block to
    the quorum size of the validator set that must certify it.
    """

    vid: int
    store: MutableMapping[str, Block]
    leader: Callable[[int], int]
    quorum_for: Callable[[Block], int]
    timeout_ms: float = 50_000.0

    current_view: int = 1
    highest_qc: QuorumCertificate = GENESIS_QC
    locked_qc: QuorumCertificate = GENESIS_QC
    last_voted_view: int = 0
    proposed_view: int = 0
    committed_height: int = 0
    last_committed: str = GENESIS_ID
    timeout_deadline: float = 0.0
    pending_votes: dict = field(default_factory=dict)
    sealed: dict = field(default_factory=dict)
    new_views: dict = field(default_factory=dict)
    commit_queue: list = field(default_factory=list)
    protocol_violations: int = 0

    def reset_timer(self, now: float):
        self.timeout_deadline = now + self.timeout_ms

    # -- certificates and commits -------------------------------------

    def observe_qc(self, qc: QuorumCertificate) -> list[Block]:
        if qc.view > self.highest_qc.view:
            self.highest_qc = qc
        committed = self.three_chain_commit(qc)
        self.commit_queue.extend(committed)
        return committed

    def three_chain_commit(self, new_qc: QuorumCertificate) -> list[Block]:
        """Commit the head of a consecutive-view three-chain ending at ``new_qc``.

        Also moves the lock to the middle block's certificate.
        """
        b2 = self.store.get(new_qc.block)
        if b2 is None or b2.block_id == GENESIS_ID:
            return []
        qc1 = b2.justify
        if qc1.view > self.locked_qc.view:
            self.locked_qc = qc1
        b1 = self.store[qc1.block]
        if b1.block_id == GENESIS_ID:
            return []
        b0 = self.store[b1.justify.block]
        if b0.block_id == GENESIS_ID:
            return []
        if not (b2.parent == b1.block_id and b1.parent == b0.block_id
                and b2.view == b1.view + 1 and b1.view == b0.view + 1):
            return []
        if b0.height <= self.committed_height:
            return []
        chain = []
        b = b0
        while b.height > self.committed_height:
            chain.append(b)
            b = self.store[b.parent]
        if b.block_id != self.last_committed:
            raise SafetyViolation(
                f"replica {self.vid}: {b0.block_id} does not extend committed {self.last_committed}")
        chain.reverse()
        self.committed_height = b0.height
        self.last_committed = b0.block_id
        return chain

    def take_commits(self) -> list[Block]:
        out, self.commit_queue = self.commit_queue, []
        return out

    # -- proposals ----------------------------------------------------

    def make_block(self, view: int, justify: QuorumCertificate, now: float,
                   epoch: int = 0, txs: tuple = ()) -> tuple[Block, Vote]:
        parent = self.store[justify.block]
        block = Block(block_token(view, self.vid, parent.block_id), view, self.vid,
                      parent.block_id, justify, parent.height + 1, epoch, txs)
        self.store[block.block_id] = block
        self.proposed_view = view
        self.current_view = max(self.current_view, view)
        self.last_voted_view = view
        self.reset_timer(now)
        # the proposer's vote goes out with the proposal
        return block, Vote(block.block_id, view, self.vid, self.leader(view + 1))

    def on_proposal(self, block: Block, now: float) -> Optional[Vote]:
        if not block.well_formed() or block.justify.block not in self.store:
            self.protocol_violations += 1
            log.debug("replica %d: malformed block %s dropped", self.vid, block.block_id)
            return None
        self.store.setdefault(block.block_id, block)
        self.observe_qc(block.justify)
        if block.view < self.current_view or block.view <= self.last_voted_view:
            return None
        if block.justify.view < self.locked_qc.view:
            return None
        self.last_voted_view = block.view
        self.current_view = block.view
        self.reset_timer(now)
        return Vote(block.block_id, block.view, self.vid, self.leader(block.view + 1))

    # -- votes --------------------------------------------------------

    def on_vote(self, vote: Vote, now: float, epoch: int = 0,
                txs: Callable[[QuorumCertificate], tuple] | None = None
                ) -> Optional[tuple[QuorumCertificate, Optional[Block], Optional[Vote]]]:
        """Collect a vote; on the quorum-th distinct voter seal the QC.

        Returns ``(qc, next_block, own_vote)`` when a certificate is
        sealed. ``next_block`` is set when this replica leads the
        following view and may still propose in it.
        """
        if vote.block in self.sealed:
            return None
        block = self.store.get(vote.block)
        if block is None:
            return None
        voters = self.pending_votes.setdefault(vote.block, [])
        if vote.voter in voters:
            return None
        voters.append(vote.voter)
        if len(voters) < self.quorum_for(block):
            return None
        qc = QuorumCertificate(block.block_id, block.view, tuple(voters))
        self.sealed[block.block_id] = qc
        del self.pending_votes[vote.block]
        self.observe_qc(qc)
        nxt = block.view + 1
        if self.leader(nxt) == self.vid and nxt > self.proposed_view and nxt >= self.current_view:
            payload = txs(qc) if txs else ()
            new_block, own = self.make_block(nxt, qc, now, epoch, payload)
            return qc, new_block, own
        return qc, None, None

    # -- view change --------------------------------------------------

    def on_timeout(self, now: float) -> NewView:
        self.current_view += 1
        self.reset_timer(now)
        return NewView(self.current_view, self.highest_qc, self.vid, self.leader(self.current_view))

    def enter_view(self, view: int, now: float) -> NewView:
        """Jump to ``view`` (used at reconfiguration) and report to its leader."""
        self.current_view = max(self.current_view, view)
        self.reset_timer(now)
        return NewView(self.current_view, self.highest_qc, self.vid, self.leader(self.current_view))

    def on_new_view(self, msg: NewView, now: float, quorum: int, epoch: int = 0,
                    txs: Callable[[QuorumCertificate], tuple] | None = None
                    ) -> Optional[tuple[Block, Vote]]:
        self.observe_qc(msg.qc)
        if self.leader(msg.view) != self.vid:
            return None
        senders = self.new_views.setdefault(msg.view, set())
        senders.add(msg.sender)
        if len(senders) < quorum or msg.view <= self.proposed_view or msg.view < self.current_view:
            return None
        self.new_views = {v: s for v, s in self.new_views.items() if v > msg.view}
        payload = txs(self.highest_qc) if txs else ()
        return self.make_block(msg.view, self.highest_qc, now, epoch, payload)


def committed_chain_consistent(chains: Mapping[int, Sequence[str]]) -> bool:
    """True when no two replicas committed different blocks at one height."""
    by_height: dict[int, str] = {}
    for chain in chains.values():
        for h, bid in enumerate(chain, start=1):
            if by_height.setdefault(h, bid) != bid:
                return False
    return True
