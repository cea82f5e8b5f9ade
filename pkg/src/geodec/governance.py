"""Epoch-end liveliness evaluation, jailing, and the exemption contract.

The contract is plain replicated state: ``nominate``/``vouch`` return a
new :class:`ContractState` and raise :class:`ContractError` on rejected
calls. It is emptied at the start of every epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .consensus import quorum_size
from .errors import ConfigError, ContractError, DomainError
from .metrics import LivelinessRecord, ValidatorProfile, detect_minorities, gdi_report

log = logging.getLogger(__name__)

MIN_ACTIVE = 4


@dataclass(frozen=True)
class EpochConfig:
    delta_ms: float = 300_000.0
    pi: float = 5.0
    epoch_count: int = 5
    jail_duration: int = 1
    solution_enabled: bool = False

    def __post_init__(self):
        if self.delta_ms <= 0:
            raise ConfigError("epoch duration must be positive")
        if not 0 <= self.pi <= 100:
            raise ConfigError(f"liveliness threshold {self.pi} outside [0, 100]")
        if self.epoch_count < 1:
            raise ConfigError("epoch_count must be at least 1")
        if self.jail_duration < 1:
            raise ConfigError("jail_duration must be at least 1")


@dataclass(frozen=True)
class ContractState:
    nominations: frozenset = frozenset()
    vouches: Mapping[int, frozenset] = field(default_factory=dict)


def nominate(contract: ContractState, caller: int, active: Sequence[int] | frozenset) -> ContractState:
    if caller not in active:
        raise ContractError(f"validator {caller} is not in the active set")
    if caller in contract.nominations:
        return contract
    return ContractState(contract.nominations | {caller}, contract.vouches)


def vouch(contract: ContractState, voucher: int, nominee: int,
          active: Sequence[int] | frozenset) -> ContractState:
    if nominee not in contract.nominations:
        raise ContractError(f"validator {nominee} has not nominated itself")
    if voucher == nominee:
        raise ContractError("a nominee cannot vouch for itself")
    if voucher not in active:
        raise ContractError(f"validator {voucher} is not in the active set")
    current = contract.vouches.get(nominee, frozenset())
    if voucher in current:
        return contract
    vouches = dict(contract.vouches)
    vouches[nominee] = current | {voucher}
    return ContractState(contract.nominations, vouches)


def get_minorities(contract: ContractState, n: int) -> set[int]:
    if not contract.nominations:
        return set()
    need = quorum_size(n)
    return {v for v in contract.nominations
            if len(contract.vouches.get(v, frozenset()) - {v}) >= need}


def geodec_lite_verify(nominee: int, V: Sequence[ValidatorProfile]) -> bool:
    """Is ``nominee`` located in one of the minority cities of ``V``?"""
    target = next((v for v in V if v.validator_id == nominee), None)
    if target is None:
        raise DomainError(f"validator {nominee} is not in the set")
    if len(V) < 4:
        return False
    return target.city in detect_minorities(V)


@dataclass
class JailState:
    remaining: dict = field(default_factory=dict)

    @property
    def jailed(self) -> frozenset:
        return frozenset(self.remaining)


@dataclass(frozen=True)
class ValidatorEpochRow:
    validator_id: int
    city: str
    blocks_signed: int
    blocks_committed: int
    liveliness: float
    gdi_full: float
    gdi_quorum: float
    minority: bool
    majority: bool
    nominated: bool
    vouches: int
    exempted: bool
    jailed: bool


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    rows: tuple[ValidatorEpochRow, ...]
    blockchain_gdi: float
    minority_cities: tuple[str, ...]
    majority_city: Optional[str]
    jailed: tuple[int, ...]
    exempted: tuple[int, ...]
    released: tuple[int, ...]
    next_active: tuple[int, ...]
    warnings: tuple[str, ...] = ()


def end_of_epoch(epoch: int, reports: Sequence[LivelinessRecord], contract: ContractState,
                 jail: JailState, cfg: EpochConfig,
                 profiles: Mapping[int, ValidatorProfile]) -> tuple[tuple[int, ...], EpochReport]:
    """Apply the liveliness threshold and produce the next active set.

    ``profiles`` covers every validator in the run; ``reports`` covers
    the validators active during ``epoch``. ``jail`` is updated in place.
    """
    active = [r.validator_id for r in reports]
    active_set = set(active)
    if active_set & jail.jailed:
        raise DomainError("liveliness reported for a jailed validator")
    n = len(active)
    exempt = get_minorities(contract, n) if cfg.solution_enabled else set()
    exempt &= active_set

    failing = [r.validator_id for r in reports
               if r.liveliness < cfg.pi and r.validator_id not in exempt]
    returning = sorted(v for v, left in jail.remaining.items() if left <= 1)
    warnings = []
    if n - len(failing) + len(returning) < MIN_ACTIVE:
        msg = (f"epoch {epoch}: jailing {len(failing)} of {n} validators would leave "
               f"fewer than {MIN_ACTIVE} active; jailing skipped")
        log.warning(msg)
        warnings.append(msg)
        failing = []

    released = []
    for vid in sorted(jail.remaining):
        jail.remaining[vid] -= 1
        if jail.remaining[vid] <= 0:
            del jail.remaining[vid]
            released.append(vid)
    for vid in failing:
        jail.remaining[vid] = cfg.jail_duration

    current = [profiles[v] for v in active]
    gdi = gdi_report(current)
    rows = []
    for r in reports:
        p = profiles[r.validator_id]
        rows.append(ValidatorEpochRow(
            validator_id=r.validator_id,
            city=p.city,
            blocks_signed=r.blocks_signed,
            blocks_committed=r.blocks_committed_total,
            liveliness=r.liveliness,
            gdi_full=gdi.gdi_full[r.validator_id],
            gdi_quorum=gdi.gdi_quorum[r.validator_id],
            minority=p.city in gdi.minority_cities,
            majority=p.city == gdi.majority_city,
            nominated=r.validator_id in contract.nominations,
            vouches=len(contract.vouches.get(r.validator_id, ())),
            exempted=r.validator_id in exempt,
            jailed=r.validator_id in failing,
        ))
    next_active = tuple(sorted(v for v in profiles if v not in jail.remaining))
    report = EpochReport(
        epoch=epoch,
        rows=tuple(rows),
        blockchain_gdi=gdi.blockchain_gdi,
        minority_cities=tuple(sorted(gdi.minority_cities)),
        majority_city=gdi.majority_city,
        jailed=tuple(sorted(failing)),
        exempted=tuple(sorted(exempt)),
        released=tuple(released),
        next_active=next_active,
        warnings=tuple(warnings),
    )
    return next_active, report
