"""The centralized agent: turns detection records into reconfigurations of the running orchestration."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Mapping, Protocol

from .analysis import DEFAULT_BOUND, BoundExceeded, check_consistency
from .changes import (
    OrchestrationContext,
    ServiceDescriptor,
    ThetaEvent,
    map_theta_to_omega,
    render_value,
)
from .detection import DetectionRecord
from .petri import Marking, Net, PetriError
from .reconfig import (
    PNAC,
    Fragment,
    OmegaKind,
    RewriteRule,
    RuleError,
    apply_rule,
    applicable,
    make_rule,
)
from .hierarchy import SEP


class ReactionError(PetriError):
    pass


class InvalidStatus(ReactionError):
    pass


class FragmentNotFound(ReactionError):
    pass


class Status(str, Enum):
    RUNNING = "Running"
    PAUSED = "Paused"
    EXITED = "Exited"
    COMPLETED = "Completed"


STRATEGIES = ("first_listed", "lowest_cost")


@dataclass(frozen=True)
class ReactionPolicy:
    heartbeat_limit: int = 3
    substitution_strategy: str = "first_listed"

    def __post_init__(self):
        if self.heartbeat_limit < 1:
            raise ValueError("heartbeat_limit must be >= 1")
        if self.substitution_strategy not in STRATEGIES:
            raise ValueError(f"unknown substitution strategy {self.substitution_strategy!r}")


class Probe(Protocol):
    def alive(self, service_id: str) -> bool: ...

    def refresh(self, service_id: str) -> ServiceDescriptor: ...


@dataclass(frozen=True)
class TraceEntry:
    """One REACT or HEARTBEAT line plus the structured data behind it."""

    tick: int
    kind: str
    fields: tuple[tuple[str, str], ...]
    # label totals before/after a rule application, consistency verdict, ...
    data: tuple[tuple[str, object], ...] = ()

    def line(self) -> str:
        return f"tick={self.tick} {self.kind} " + " ".join(f"{k}={v}" for k, v in self.fields)

    def get(self, key: str, default=None):
        return dict(self.fields).get(key, dict(self.data).get(key, default))


@dataclass(frozen=True)
class OrchestrationState:
    pnac: PNAC
    marking: Marking
    status: Status = Status.RUNNING
    waiting_on: str | None = None
    heartbeats_used: int = 0
    trace: tuple[TraceEntry, ...] = ()
    backups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    # service id -> transition id in the flat process net
    bindings: Mapping[str, str] = field(default_factory=dict)
    # members with no fragment of their own (refined into a subnet)
    composites: frozenset[str] = frozenset()
    invoked: Mapping[str, frozenset[str]] = field(default_factory=dict)
    pending: tuple[DetectionRecord, ...] = ()
    bound: int = DEFAULT_BOUND

    @property
    def net(self) -> Net:
        return self.pnac.net

    @property
    def completed(self) -> bool:
        return self.marking.count(self.net.p_out) > 0

    def service_at(self, transition: str) -> str | None:
        for sid, t in self.bindings.items():
            if t == transition:
                return sid
        return None


def _entry(tick: int, kind: str, *fields: tuple[str, object], data: Mapping | None = None) -> TraceEntry:
    return TraceEntry(tick, kind, tuple((k, render_value(v)) for k, v in fields if v is not None),
                      tuple(sorted((data or {}).items())))


def _cause(record: DetectionRecord) -> str:
    return f"{record.event.kind.value}@{record.tick}"


def service_fragment(net: Net, transition: str) -> Fragment:
    """The transition plus the input places only it consumes from, with every incident arc."""
    if transition not in net.transitions:
        raise FragmentNotFound(transition)
    places = {p for p in net.inputs(transition) if net.consumers(p) == [transition]}
    nodes = places | {transition}
    arcs = [a for a in net.arcs if a[0] in nodes or a[1] in nodes]
    return Fragment.of(places, [transition], arcs)


def _renamer(old: str, new: str):
    def rename(node: str) -> str:
        head, _, last = node.rpartition(SEP)
        prefix = head + SEP if head else ""
        if last.startswith(old):
            return prefix + new + last[len(old):]
        return f"{prefix}{last}@{new}"
    return rename


def synthesize_substitution_rule(net: Net, old_service_fragment: Fragment,
                                 new_descriptor: ServiceDescriptor) -> RewriteRule:
    """Replace a service fragment by an isomorphic copy named after ``new_descriptor``."""
    frag = old_service_fragment
    if not frag.nodes <= net.places | net.transitions:
        raise FragmentNotFound(", ".join(sorted(frag.nodes - net.places - net.transitions)))
    (t,) = sorted(frag.transitions)
    rename = _renamer(t.rpartition(SEP)[2], new_descriptor.id)

    def r(node: str) -> str:
        return rename(node) if node in frag.nodes else node

    replacement = Fragment.of(
        [rename(p) for p in frag.places],
        [rename(x) for x in frag.transitions],
        [(r(s), r(d), w) for s, d, w in frag.arcs],
        frag.ports,
        {rename(x): g for x, g in frag.guards},
    )
    clash = replacement.nodes & (net.places | net.transitions)
    if clash:
        raise RuleError(f"substitute ids already in use: {sorted(clash)}")
    return make_rule(
        f"substitute:{t}->{new_descriptor.id}",
        OmegaKind.ALTER_SERVICE_INSTANCE,
        frag,
        replacement,
        {p: rename(p) for p in frag.places},
        {p: p for p in frag.ports},
    )


def synthesize_removal_rule(net: Net, fragment: Fragment) -> RewriteRule:
    """Delete a service fragment and wire its producers straight to its output place.

    Only single-request, single-output services can be bypassed this way.
    """
    (t,) = sorted(fragment.transitions)
    outs = net.outputs(t)
    if set(net.inputs(t)) != set(fragment.places) or len(fragment.places) != 1 or len(outs) != 1:
        raise RuleError(f"service at {t!r} cannot be bypassed")
    (req,) = fragment.places
    (out,) = outs
    if out == req:
        raise RuleError(f"service at {t!r} loops on itself")
    arcs = [(u, out, w) for u, w in ((s, w) for s, d, w in fragment.arcs if d == req)]
    replacement = Fragment.of((), (), arcs)
    return make_rule(f"remove:{t}", OmegaKind.ALTER_SERVICE_INSTANCE, fragment, replacement,
                     {req: out})


def _consistent(state: OrchestrationState) -> bool | None:
    try:
        return bool(check_consistency(state.net, state.marking, state.bound))
    except BoundExceeded:
        return None


def _apply(state: OrchestrationState, rule: RewriteRule) -> tuple[OrchestrationState, dict]:
    pnac = state.pnac.with_rule(rule)
    before = state.marking.label_totals()
    pnac, marking = apply_rule(pnac, rule, state.marking)
    data = {"tokens_before": dict(sorted(before.items())),
            "tokens_after": dict(sorted(marking.label_totals().items()))}
    return replace(state, pnac=pnac, marking=marking), data


def _with(state: OrchestrationState, entry: TraceEntry, **changes) -> OrchestrationState:
    return replace(state, trace=state.trace + (entry,), **changes)


def _find_substitute(state: OrchestrationState, failing: ServiceDescriptor, policy: ReactionPolicy,
                     catalog: Mapping[str, ServiceDescriptor]) -> ServiceDescriptor | None:
    order = list(failing.substitutes) + list(state.backups.get(failing.role_name, ()))
    seen: list[str] = []
    for c in order:
        if c not in seen:
            seen.append(c)
    cands = []
    for rank, cid in enumerate(seen):
        d = catalog.get(cid)
        if d is None or cid == failing.id or cid in state.bindings or cid in state.composites:
            continue
        if d.healthy and d.role_name == failing.role_name and d.op_names >= failing.op_names:
            cands.append((rank, d))
    if not cands:
        return None
    if policy.substitution_strategy == "lowest_cost":
        return min(cands, key=lambda rd: (rd[1].cost, rd[0]))[1]
    return cands[0][1]


def _pause(state, sid, tick, omega, cause) -> OrchestrationState:
    entry = _entry(tick, "REACT", ("omega", omega), ("action", "pause"), ("service", sid),
                   ("cause", cause))
    return _with(state, entry, status=Status.PAUSED, waiting_on=sid, heartbeats_used=0)


def _remove(state, sid, tick, omega, cause) -> OrchestrationState:
    """Bypass ``sid``; exits when no bypass exists or the result is inconsistent."""
    try:
        rule = synthesize_removal_rule(state.net, service_fragment(state.net, state.bindings[sid]))
    except (RuleError, FragmentNotFound):
        entry = _entry(tick, "REACT", ("omega", omega), ("action", "exit"), ("service", sid),
                       ("reason", "no-bypass"), ("cause", cause))
        return _with(state, entry, status=Status.EXITED)
    new, data = _apply(state, rule)
    bindings = {k: v for k, v in new.bindings.items() if k != sid}
    new = replace(new, bindings=bindings)
    ok = _consistent(new)
    data["consistent"] = ok
    entry = _entry(tick, "REACT", ("omega", omega), ("action", "remove"), ("service", sid),
                   ("rule", rule.id), ("generation", new.pnac.generation),
                   ("consistent", ok), ("cause", cause), data=data)
    new = _with(new, entry)
    if ok is False:
        exit_entry = _entry(tick, "REACT", ("omega", omega), ("action", "exit"), ("service", sid),
                            ("reason", "inconsistent"), ("cause", cause))
        return _with(new, exit_entry, status=Status.EXITED)
    return new


def _escalate(state, sid, critical, tick, omega, cause) -> OrchestrationState:
    if critical or sid not in state.bindings:
        return _pause(state, sid, tick, omega, cause)
    return _remove(state, sid, tick, omega, cause)


def react(state: OrchestrationState, record: DetectionRecord, policy: ReactionPolicy,
          catalog: Mapping[str, ServiceDescriptor], tick: int | None = None) -> OrchestrationState:
    """Handle one detection record.

    While paused, records are buffered and replayed by :func:`resume_pending`.
    """
    tick = record.tick if tick is None else tick
    if state.status not in (Status.RUNNING, Status.PAUSED):
        raise InvalidStatus(f"cannot react while {state.status.value}")
    if state.status is Status.PAUSED:
        return replace(state, pending=state.pending + (record,))

    event: ThetaEvent = record.event
    sid = event.service_id
    members = set(catalog) | set(state.bindings) | set(state.composites)
    context = OrchestrationContext(frozenset(members), state.invoked)
    omega = map_theta_to_omega(event, context, tick)
    kind = omega.kind.value
    cause = _cause(record)
    desc = event.post_snapshot

    if event.whole_service:
        role = desc.role_name
        listed = state.backups.get(role, ())
        backups = dict(state.backups)
        if sid not in listed:
            backups[role] = listed + (sid,)
        entry = _entry(tick, "REACT", ("omega", kind), ("action", "backup"), ("service", sid),
                       ("role", role), ("cause", cause))
        return _with(state, entry, backups=backups)

    is_member = sid in state.bindings or sid in state.composites
    if omega.kind is OmegaKind.ALTER_SERVICE_INSTANCE and event.degrading and is_member:
        failing = event.pre_snapshot
        sub = None if sid in state.composites else _find_substitute(state, failing, policy, catalog)
        if sub is not None:
            frag = service_fragment(state.net, state.bindings[sid])
            rule = synthesize_substitution_rule(state.net, frag, sub)
            new, data = _apply(state, rule)
            (new_t,) = rule.replacement.transitions
            bindings = {k: v for k, v in new.bindings.items() if k != sid}
            bindings[sub.id] = new_t
            invoked = dict(new.invoked)
            invoked[sub.id] = invoked.pop(sid, frozenset())
            new = replace(new, bindings=bindings, invoked=invoked)
            ok = _consistent(new)
            data["consistent"] = ok
            entry = _entry(tick, "REACT", ("omega", kind), ("action", "substitute"),
                           ("service", sid), ("with", sub.id), ("rule", rule.id),
                           ("generation", new.pnac.generation), ("consistent", ok),
                           ("cause", cause), data=data)
            new = _with(new, entry)
            if ok is False:
                return _escalate(new, sub.id, sub.critical, tick, kind, cause)
            return new
        if desc.critical or sid in state.composites:
            return _pause(state, sid, tick, kind, cause)
        return _remove(state, sid, tick, kind, cause)

    if omega.kind in (OmegaKind.ALTER_STATE, OmegaKind.ALTER_ORDER) and is_member:
        for rule in sorted(state.pnac.rules, key=lambda r: r.id):
            if rule.target != sid or rule.omega_kind is not omega.kind:
                continue
            if not applicable(state.pnac, rule, state.marking):
                continue
            new, data = _apply(state, rule)
            ok = _consistent(new)
            data["consistent"] = ok
            entry = _entry(tick, "REACT", ("omega", kind), ("action", "rule"), ("service", sid),
                           ("rule", rule.id), ("generation", new.pnac.generation),
                           ("consistent", ok), ("cause", cause), data=data)
            new = _with(new, entry)
            if ok is False:
                return _escalate(new, sid, desc.critical, tick, kind, cause)
            return new

    entry = _entry(tick, "REACT", ("omega", kind), ("action", "record"), ("service", sid),
                   ("cause", cause))
    return _with(state, entry)


def heartbeat_tick(state: OrchestrationState, environment: Probe, policy: ReactionPolicy,
                   tick: int = 0) -> OrchestrationState:
    """Probe the service a paused orchestration waits on."""
    if state.status is not Status.PAUSED:
        raise InvalidStatus(f"heartbeat while {state.status.value}")
    sid = state.waiting_on
    up = environment.alive(sid) and environment.refresh(sid).reliable
    used = state.heartbeats_used + 1
    beat = _entry(tick, "HEARTBEAT", ("service", sid), ("attempt", f"{used}/{policy.heartbeat_limit}"),
                  ("up", up))
    state = _with(state, beat, heartbeats_used=used)
    if up:
        entry = _entry(tick, "REACT", ("omega", OmegaKind.ALTER_STATE.value), ("action", "resume"),
                       ("service", sid))
        return _with(state, entry, status=Status.RUNNING, waiting_on=None, heartbeats_used=0)
    if used >= policy.heartbeat_limit:
        entry = _entry(tick, "REACT", ("omega", OmegaKind.ALTER_STATE.value), ("action", "exit"),
                       ("service", sid), ("reason", "heartbeat-limit"))
        return _with(state, entry, status=Status.EXITED)
    return state


def resume_pending(state: OrchestrationState, policy: ReactionPolicy,
                   catalog: Mapping[str, ServiceDescriptor], tick: int) -> OrchestrationState:
    """Replay records buffered during a pause, in arrival order."""
    pending, state = state.pending, replace(state, pending=())
    for i, record in enumerate(pending):
        if state.status is not Status.RUNNING:
            return replace(state, pending=state.pending + pending[i:])
        state = react(state, record, policy, catalog, tick)
    return state
