"""The service agent: polls member services and turns observed diffs into detection records."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Protocol

from .changes import (
    ServiceDescriptor,
    ThetaEvent,
    ThetaKind,
    classify,
    fire_theta,
    functional_initial,
    functional_template,
    nonfunctional_initial,
    nonfunctional_template,
    rearm,
    render_value,
    template_transition,
)
from .petri import Marking, NotEnabled, PetriError, incidence_matrix

_NF_TEMPLATE = nonfunctional_template()
_F_TEMPLATE = functional_template()
_NF_MATRIX = incidence_matrix(_NF_TEMPLATE)
_F_MATRIX = incidence_matrix(_F_TEMPLATE)


class ChannelClosed(PetriError):
    pass


class ServiceEnvironment(Protocol):
    """What the agent can ask of the world it monitors."""

    def registry(self) -> Iterable[str]: ...

    def alive(self, service_id: str) -> bool: ...

    def refresh(self, service_id: str) -> ServiceDescriptor: ...


@dataclass(frozen=True)
class PollingConfig:
    interval_ticks: int = 5
    alive_timeout_ticks: int = 5

    def __post_init__(self):
        if self.interval_ticks < 1 or self.alive_timeout_ticks < 1:
            raise ValueError("polling interval and alive timeout must be >= 1")


@dataclass(frozen=True)
class DetectionRecord:
    event: ThetaEvent
    matrix_column: tuple[tuple[str, int], ...]
    template_marking_after: Marking
    tick: int

    def line(self) -> str:
        pre, post = self.event.values()
        return (f"tick={self.tick} DETECT service={self.event.service_id} "
                f"theta={self.event.kind.value} pre={render_value(pre)} post={render_value(post)}")


@dataclass(frozen=True)
class AgentState:
    config: PollingConfig
    snapshots: Mapping[str, ServiceDescriptor]
    templates: Mapping[str, Marking]
    functional: Mapping[str, Marking]
    last_seen: Mapping[str, int]
    members: frozenset[str]
    polled: bool = False
    dead_band: float = 0.0


def new_agent(config: PollingConfig, services: Iterable[ServiceDescriptor],
              dead_band: float = 0.0) -> AgentState:
    """An agent that already knows the statically configured services."""
    services = list(services)
    return AgentState(
        config=config,
        snapshots={s.id: s for s in services},
        templates={s.id: nonfunctional_initial() for s in services},
        functional={s.id: functional_initial() for s in services},
        last_seen={s.id: 0 for s in services},
        members=frozenset(s.id for s in services if s.available),
        dead_band=dead_band,
    )


def membership(agent: AgentState) -> frozenset[str]:
    return agent.members


def _record(event: ThetaEvent, templates: dict, functional: dict, tick: int) -> DetectionRecord:
    if event.kind.functional:
        net, store, matrix = _F_TEMPLATE, functional, _F_MATRIX
    else:
        net, store, matrix = _NF_TEMPLATE, templates, _NF_MATRIX
    marking = store.get(event.service_id)
    if marking is None:
        marking = functional_initial() if event.kind.functional else nonfunctional_initial()
    try:
        after = fire_theta(net, marking, event)
    except NotEnabled:
        # kind already recorded on this service; re-arm and record again
        after = fire_theta(net, rearm(net, marking, event.kind), event)
    store[event.service_id] = after
    column = tuple(matrix.column(template_transition(event.kind)).items())
    return DetectionRecord(event, column, after, tick)


def poll_cycle(agent: AgentState, environment: ServiceEnvironment,
               tick: int) -> tuple[AgentState, list[DetectionRecord]]:
    """One Alive + Refresh round over every registered service.

    Off-cycle ticks are no-ops.  A service that does not answer Alive is
    presumed unavailable once ``alive_timeout_ticks`` have passed since it
    last answered; until then its snapshot is left alone.
    """
    cfg = agent.config
    if tick % cfg.interval_ticks:
        return agent, []
    snapshots = dict(agent.snapshots)
    templates = dict(agent.templates)
    functional = dict(agent.functional)
    last_seen = dict(agent.last_seen)
    members = set(agent.members)
    records: list[DetectionRecord] = []

    for sid in sorted(environment.registry()):
        prev = snapshots.get(sid)
        if not environment.alive(sid):
            if prev is None:
                continue
            if prev.available and tick - last_seen[sid] >= cfg.alive_timeout_ticks:
                observed = replace(prev, available=False)
                events = classify(prev, observed, tick)
                snapshots[sid] = observed
                members.discard(sid)
                records += [_record(e, templates, functional, tick) for e in events]
            continue
        last_seen[sid] = tick
        members.add(sid)
        fresh = environment.refresh(sid)
        if prev is None:
            event = ThetaEvent(ThetaKind.STRUCTURAL_ADD, sid, None, fresh, tick, "")
            snapshots[sid] = fresh
            records.append(_record(event, templates, functional, tick))
            continue
        events = classify(prev, fresh, tick, agent.dead_band)
        observed = fresh
        for attr in ("cost", "responsiveness"):
            if getattr(prev, attr) != getattr(fresh, attr) and not any(e.detail == attr for e in events):
                observed = replace(observed, **{attr: getattr(prev, attr)})
        snapshots[sid] = observed
        records += [_record(e, templates, functional, tick) for e in events]

    state = replace(agent, snapshots=snapshots, templates=templates, functional=functional,
                    last_seen=last_seen, members=frozenset(members), polled=True)
    return state, records


class Channel:
    """Ordered, reliable, unbounded detection-to-reaction queue."""

    def __init__(self):
        self._items: deque[DetectionRecord] = deque()
        self.closed = False

    def __len__(self) -> int:
        return len(self._items)

    def put(self, record: DetectionRecord) -> None:
        if self.closed:
            raise ChannelClosed("reaction side has terminated")
        self._items.append(record)

    def drain(self) -> list[DetectionRecord]:
        out = list(self._items)
        self._items.clear()
        return out

    def close(self) -> None:
        self.closed = True


def forward(records: Iterable[DetectionRecord], channel: Channel) -> None:
    records = list(records)
    if records and channel.closed:
        raise ChannelClosed("reaction side has terminated")
    for r in records:
        channel.put(r)
