"""Service descriptors, handling changes (theta) and their adaptive images (omega)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping

from .petri import Marking, Net, NotEnabled, PetriError, build_net, fire
from .reconfig import OmegaKind


class ChangeError(PetriError):
    pass


class IdMismatch(ChangeError):
    pass


class UnknownService(ChangeError):
    pass


@dataclass(frozen=True, order=True)
class OperationSignature:
    """One operation of a service.

    ``inputs``/``outputs`` are ``(name, type)`` pairs.  ``behavior`` is an
    opaque protocol tag; changing only it is a behavioral change.
    """

    name: str
    inputs: tuple[tuple[str, str], ...] = ()
    outputs: tuple[tuple[str, str], ...] = ()
    behavior: str = ""

    def render(self) -> str:
        ins = ",".join(f"{n}:{t}" for n, t in self.inputs)
        outs = ",".join(f"{n}:{t}" for n, t in self.outputs)
        tag = f"#{self.behavior}" if self.behavior else ""
        return f"{self.name}({ins})->({outs}){tag}"


@dataclass(frozen=True)
class ServiceDescriptor:
    id: str
    role_name: str
    operations: tuple[OperationSignature, ...] = ()
    available: bool = True
    reliable: bool = True
    cost: float = 0.0
    responsiveness: float = 0.0
    critical: bool = False
    substitutes: tuple[str, ...] = ()

    def __post_init__(self):
        names = [op.name for op in self.operations]
        if len(set(names)) != len(names):
            raise ChangeError(f"service {self.id!r}: duplicate operation names")
        if self.id in self.substitutes:
            raise ChangeError(f"service {self.id!r} lists itself as a substitute")
        if self.cost < 0 or self.responsiveness < 0:
            raise ChangeError(f"service {self.id!r}: cost and responsiveness must be non-negative")
        object.__setattr__(self, "operations", tuple(sorted(self.operations)))

    def op(self, name: str) -> OperationSignature | None:
        for o in self.operations:
            if o.name == name:
                return o
        return None

    @property
    def op_names(self) -> frozenset[str]:
        return frozenset(o.name for o in self.operations)

    @property
    def healthy(self) -> bool:
        return self.available and self.reliable


class ThetaKind(str, Enum):
    ALTER_AVAILABILITY = "AlterAvailability"
    ALTER_RELIABILITY = "AlterReliability"
    ALTER_COST = "AlterCost"
    ALTER_RESPONSIVENESS = "AlterResponsiveness"
    STRUCTURAL_REMOVE = "StructuralRemove"
    STRUCTURAL_ADD = "StructuralAdd"
    BEHAVIORAL = "Behavioral"

    @property
    def functional(self) -> bool:
        return self in (ThetaKind.STRUCTURAL_REMOVE, ThetaKind.STRUCTURAL_ADD, ThetaKind.BEHAVIORAL)


# kind -> (descriptor field, template label)
NONFUNCTIONAL = {
    ThetaKind.ALTER_AVAILABILITY: ("available", "A"),
    ThetaKind.ALTER_RELIABILITY: ("reliable", "R"),
    ThetaKind.ALTER_COST: ("cost", "C"),
    ThetaKind.ALTER_RESPONSIVENESS: ("responsiveness", "Re"),
}
FUNCTIONAL_LABEL = {
    ThetaKind.STRUCTURAL_REMOVE: "Struct",
    ThetaKind.STRUCTURAL_ADD: "Struct",
    ThetaKind.BEHAVIORAL: "Behav",
}


@dataclass(frozen=True)
class ThetaEvent:
    """A handling change observed on one service.

    ``detail`` is the field name for non-functional kinds and the operation
    name for functional ones.  ``pre_snapshot`` is None when a whole service
    appears for the first time.
    """

    kind: ThetaKind
    service_id: str
    pre_snapshot: ServiceDescriptor | None
    post_snapshot: ServiceDescriptor
    tick: int = 0
    detail: str = ""

    @property
    def whole_service(self) -> bool:
        return self.pre_snapshot is None

    def values(self) -> tuple[object, object]:
        """The (pre, post) values of the changed field or operation."""
        if self.pre_snapshot is None:
            return None, self.post_snapshot.id
        if self.kind in NONFUNCTIONAL:
            return getattr(self.pre_snapshot, self.detail), getattr(self.post_snapshot, self.detail)
        return self.pre_snapshot.op(self.detail), self.post_snapshot.op(self.detail)

    @property
    def degrading(self) -> bool:
        """Whether the change can block execution of the service's step."""
        if self.kind in (ThetaKind.ALTER_AVAILABILITY, ThetaKind.ALTER_RELIABILITY):
            return self.values()[1] is False
        return self.kind in (ThetaKind.STRUCTURAL_REMOVE, ThetaKind.BEHAVIORAL)


@dataclass(frozen=True)
class OmegaEvent:
    kind: OmegaKind
    target: str
    cause: ThetaEvent
    tick: int

    def __post_init__(self):
        if self.cause.tick > self.tick:
            raise ChangeError("adaptive change cannot precede its cause")


def _changed(old: float, new: float, dead_band: float) -> bool:
    if old == new:
        return False
    return abs(new - old) > dead_band * abs(old)


def classify(pre: ServiceDescriptor, post: ServiceDescriptor, tick: int = 0,
             dead_band: float = 0.0) -> list[ThetaEvent]:
    """Diff two snapshots of one service into handling changes.

    Non-functional events come first (alphabetical by kind), then functional
    ones by operation name; a changed signature yields a remove followed by
    an add.
    """
    if pre.id != post.id:
        raise IdMismatch(f"{pre.id!r} != {post.id!r}")
    events = []
    for kind, (attr, _) in NONFUNCTIONAL.items():
        old, new = getattr(pre, attr), getattr(post, attr)
        if isinstance(old, bool):
            hit = old != new
        else:
            hit = _changed(old, new, dead_band)
        if hit:
            events.append(ThetaEvent(kind, pre.id, pre, post, tick, attr))
    events.sort(key=lambda e: e.kind.value)

    functional = []
    for name in sorted(pre.op_names | post.op_names):
        a, b = pre.op(name), post.op(name)
        if a == b:
            continue
        if a is not None and b is not None and (a.inputs, a.outputs) == (b.inputs, b.outputs):
            functional.append(ThetaEvent(ThetaKind.BEHAVIORAL, pre.id, pre, post, tick, name))
            continue
        if a is not None:
            functional.append(ThetaEvent(ThetaKind.STRUCTURAL_REMOVE, pre.id, pre, post, tick, name))
        if b is not None:
            functional.append(ThetaEvent(ThetaKind.STRUCTURAL_ADD, pre.id, pre, post, tick, name))
    return events + functional


def apply_event(desc: ServiceDescriptor, event: ThetaEvent) -> ServiceDescriptor:
    """Carry the field or operation named by ``event`` from its post snapshot onto ``desc``."""
    if event.kind in NONFUNCTIONAL:
        return replace(desc, **{event.detail: getattr(event.post_snapshot, event.detail)})
    ops = {o.name: o for o in desc.operations}
    new = event.post_snapshot.op(event.detail)
    if event.kind is ThetaKind.STRUCTURAL_REMOVE:
        ops.pop(event.detail, None)
    elif new is not None:
        ops[event.detail] = new
    return replace(desc, operations=tuple(ops.values()))


# -- change templates -------------------------------------------------------

def nonfunctional_template(service_id: str = "") -> Net:
    """Five places and four guarded transitions: PS --Tx--> PS'x for x in A, R, C, Re."""
    labels = [lbl for _, lbl in NONFUNCTIONAL.values()]
    places = ["PS"] + [f"PS'{x}" for x in labels]
    transitions = [f"T{x}" for x in labels]
    arcs = [("PS", f"T{x}") for x in labels] + [(f"T{x}", f"PS'{x}") for x in labels]
    names = {"PS": f"{service_id} initial state".strip()} if service_id else None
    return build_net(places, transitions, arcs, p_in="PS", p_out="PS",
                     guards={f"T{x}": x for x in labels}, names=names)


def nonfunctional_initial() -> Marking:
    return Marking({"PS": ["A", "R", "C", "Re"]})


def functional_template(service_id: str = "") -> Net:
    places = ["PSF", "PSF'S", "PSF'B"]
    transitions = ["TStruct", "TBehav"]
    arcs = [("PSF", "TStruct"), ("TStruct", "PSF'S"), ("PSF", "TBehav"), ("TBehav", "PSF'B")]
    names = {"PSF": f"{service_id} interface".strip()} if service_id else None
    return build_net(places, transitions, arcs, p_in="PSF", p_out="PSF",
                     guards={"TStruct": "Struct", "TBehav": "Behav"}, names=names)


def functional_initial() -> Marking:
    return Marking({"PSF": ["Struct", "Behav"]})


def dependability_subnet(template: Net) -> Net:
    """Restriction of the non-functional template to availability and reliability."""
    keep_t = {"TA", "TRe"}
    keep_p = {"PS", "PS'A", "PS'Re"}
    arcs = [(s, d, w) for s, d, w in template.arcs if {s, d} <= keep_t | keep_p]
    return build_net(sorted(keep_p), sorted(keep_t), arcs, p_in="PS", p_out="PS",
                     guards={t: g for t, g in template.guards if t in keep_t})


def template_transition(kind: ThetaKind) -> str:
    if kind in NONFUNCTIONAL:
        return f"T{NONFUNCTIONAL[kind][1]}"
    return "TBehav" if kind is ThetaKind.BEHAVIORAL else "TStruct"


def template_for(kind: ThetaKind) -> tuple[Net, Marking]:
    if kind.functional:
        return functional_template(), functional_initial()
    return nonfunctional_template(), nonfunctional_initial()


def fire_theta(template_net: Net, template_marking: Marking, event: ThetaEvent) -> Marking:
    """Record ``event`` on a change template.  A repeated kind raises NotEnabled."""
    t = template_transition(event.kind)
    if t not in template_net.transitions:
        raise ChangeError(f"template has no transition for {event.kind.value}")
    return fire(template_net, template_marking, t)


def rearm(template_net: Net, template_marking: Marking, kind: ThetaKind) -> Marking:
    """Return the token for ``kind`` from its post place to the template's initial place."""
    t = template_transition(kind)
    label = template_net.guard(t)
    (post,) = template_net.outputs(t)
    if template_marking.count(post, label) == 0:
        return template_marking
    return template_marking.updated([(post, label, -1), (template_net.p_in, label, 1)])


# -- theta -> omega -------------------------------------------------------------

@dataclass(frozen=True)
class OrchestrationContext:
    """What the mapping needs to know about the running composition."""

    services: frozenset[str]
    invoked: Mapping[str, frozenset[str]] = field(default_factory=dict)

    @classmethod
    def of(cls, services: Iterable[str], invoked: Mapping[str, Iterable[str]] | None = None):
        return cls(frozenset(services), {k: frozenset(v) for k, v in (invoked or {}).items()})


def map_theta_to_omega(event: ThetaEvent, context: OrchestrationContext,
                       tick: int | None = None) -> OmegaEvent:
    tick = event.tick if tick is None else tick
    if event.whole_service:
        return OmegaEvent(OmegaKind.ALTER_SERVICE_INSTANCE, event.service_id, event, tick)
    if event.service_id not in context.services:
        raise UnknownService(event.service_id)
    if event.kind in (ThetaKind.ALTER_AVAILABILITY, ThetaKind.ALTER_RELIABILITY):
        kind = OmegaKind.ALTER_SERVICE_INSTANCE
    elif event.kind in (ThetaKind.ALTER_COST, ThetaKind.ALTER_RESPONSIVENESS):
        kind = OmegaKind.ALTER_STATE
    elif event.detail in context.invoked.get(event.service_id, frozenset()):
        kind = OmegaKind.ALTER_SERVICE_INSTANCE
    else:
        kind = OmegaKind.ALTER_STATE
    return OmegaEvent(kind, event.service_id, event, tick)


# -- serialization ----------------------------------------------------------

def _pairs(items) -> tuple[tuple[str, str], ...]:
    if isinstance(items, Mapping):
        return tuple(items.items())
    return tuple(tuple(p) for p in items)


def operation_from_dict(data: Mapping) -> OperationSignature:
    return OperationSignature(data["name"], _pairs(data.get("inputs", ())),
                              _pairs(data.get("outputs", ())), data.get("behavior", ""))


def operation_to_dict(op: OperationSignature) -> dict:
    data = {"name": op.name, "inputs": [list(p) for p in op.inputs],
            "outputs": [list(p) for p in op.outputs]}
    if op.behavior:
        data["behavior"] = op.behavior
    return data


def descriptor_from_dict(data: Mapping) -> ServiceDescriptor:
    return ServiceDescriptor(
        id=data["id"],
        role_name=data["role_name"],
        operations=tuple(operation_from_dict(o) for o in data.get("operations", ())),
        available=data.get("available", True),
        reliable=data.get("reliable", True),
        cost=data.get("cost", 0.0),
        responsiveness=data.get("responsiveness", 0.0),
        critical=data.get("critical", False),
        substitutes=tuple(data.get("substitutes", ())),
    )


def descriptor_to_dict(desc: ServiceDescriptor) -> dict:
    return {
        "id": desc.id,
        "role_name": desc.role_name,
        "operations": [operation_to_dict(o) for o in desc.operations],
        "available": desc.available,
        "reliable": desc.reliable,
        "cost": desc.cost,
        "responsiveness": desc.responsiveness,
        "critical": desc.critical,
        "substitutes": list(desc.substitutes),
    }


def render_value(value: object) -> str:
    """Compact, space-free rendering used in trace lines."""
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, OperationSignature):
        return value.render()
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value).replace(" ", "_")
