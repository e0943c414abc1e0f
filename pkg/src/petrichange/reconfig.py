"""Reconfigurable nets: a net plus rewriting rules that swap one fragment for another.

Rules match concrete node ids.  Applying a rule deletes the match fragment's
nodes (and every arc touching them), splices in the replacement fragment,
and moves each token bag from a deleted place to its transfer target.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .petri import Marking, Net, PetriError, StructuralError, build_net


class OmegaKind(str, Enum):
    ALTER_STATE = "AlterState"
    ALTER_SERVICE_INSTANCE = "AlterServiceInstance"
    ALTER_ORDER = "AlterOrder"
    # listed in the adaptive-change table next to the other two; kept representable
    ALTER_COST = "AlterCost"


class ReconfigError(PetriError):
    pass


class RuleError(ReconfigError):
    """A rule is malformed on its own or against the net it is registered with."""


class UnknownRule(ReconfigError):
    pass


class RuleApplicationFailed(ReconfigError):
    pass


class NotApplicable(RuleApplicationFailed):
    pass


class OrphanedTokens(RuleApplicationFailed):
    def __init__(self, place: str):
        super().__init__(f"deleted place {place!r} holds tokens but has no transfer target")
        self.place = place


class InvalidResult(RuleApplicationFailed):
    pass


@dataclass(frozen=True)
class Fragment:
    """Places, transitions and arcs of a subnet.

    Arc endpoints outside the fragment must be listed in ``ports``; they name
    host nodes (or, in a replacement, keys of the rule's ``port_map``).
    """

    places: frozenset[str] = frozenset()
    transitions: frozenset[str] = frozenset()
    arcs: tuple[tuple[str, str, int], ...] = ()
    ports: frozenset[str] = frozenset()
    guards: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        nodes = self.places | self.transitions
        if self.places & self.transitions:
            raise RuleError("fragment places and transitions overlap")
        if self.ports & nodes:
            raise RuleError("fragment ports overlap its own nodes")
        for s, d, w in self.arcs:
            for end in (s, d):
                if end not in nodes and end not in self.ports:
                    raise RuleError(f"fragment arc {s!r}->{d!r}: {end!r} is neither a node nor a port")
            if w < 1:
                raise RuleError(f"fragment arc {s!r}->{d!r} has weight {w}")
        for t, _ in self.guards:
            if t not in self.transitions:
                raise RuleError(f"fragment guard on unknown transition {t!r}")

    @property
    def nodes(self) -> frozenset[str]:
        return self.places | self.transitions

    @classmethod
    def of(cls, places: Iterable[str] = (), transitions: Iterable[str] = (),
           arcs: Iterable[Sequence] = (), ports: Iterable[str] | None = None,
           guards: Mapping[str, str] | None = None) -> Fragment:
        """Build a fragment; ports default to every arc endpoint that is not a node."""
        places, transitions = frozenset(places), frozenset(transitions)
        norm = tuple(sorted((a[0], a[1], a[2] if len(a) > 2 else 1) for a in arcs))
        if ports is None:
            ports = {e for s, d, _ in norm for e in (s, d)} - places - transitions
        return cls(places, transitions, norm, frozenset(ports), tuple(sorted((guards or {}).items())))


@dataclass(frozen=True)
class RewriteRule:
    id: str
    omega_kind: OmegaKind
    match: Fragment
    replacement: Fragment
    token_transfer: tuple[tuple[str, str], ...] = ()
    port_map: tuple[tuple[str, str], ...] = ()
    # service the rule reacts to, for registered AlterState/AlterOrder rules
    target: str | None = None

    @property
    def transfer(self) -> dict[str, str]:
        return dict(self.token_transfer)

    def resolve_port(self, port: str) -> str:
        return dict(self.port_map).get(port, port)


def make_rule(id: str, omega_kind: OmegaKind | str, match: Fragment, replacement: Fragment,
              token_transfer: Mapping[str, str] | None = None,
              port_map: Mapping[str, str] | None = None, target: str | None = None) -> RewriteRule:
    rule = RewriteRule(
        id=id,
        omega_kind=OmegaKind(omega_kind),
        match=match,
        replacement=replacement,
        token_transfer=tuple(sorted((token_transfer or {}).items())),
        port_map=tuple(sorted((port_map or {}).items())),
        target=target,
    )
    check_rule(rule)
    return rule


def check_rule(rule: RewriteRule) -> None:
    """Net-independent well-formedness."""
    clash = rule.match.nodes & rule.replacement.nodes
    if clash:
        raise RuleError(f"rule {rule.id!r}: replacement reuses matched ids {sorted(clash)}")
    for src, dst in rule.token_transfer:
        if src not in rule.match.places:
            raise RuleError(f"rule {rule.id!r}: transfer source {src!r} is not a matched place")
        if dst not in rule.replacement.places and dst not in rule.replacement.ports:
            raise RuleError(f"rule {rule.id!r}: transfer target {dst!r} is not in the replacement")
    for port, _ in rule.port_map:
        if port not in rule.replacement.ports:
            raise RuleError(f"rule {rule.id!r}: port_map key {port!r} is not a replacement port")


def adaptive_change_kind(rule: RewriteRule) -> OmegaKind:
    return rule.omega_kind


@dataclass(frozen=True)
class PNAC:
    net: Net
    rules: tuple[RewriteRule, ...] = ()
    initial: Marking = field(default_factory=Marking)
    generation: int = 0

    def rule(self, rule_id: str) -> RewriteRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise UnknownRule(rule_id)

    def with_rule(self, rule: RewriteRule) -> PNAC:
        """Register ``rule`` (replacing any rule with the same id)."""
        check_rule(rule)
        rules = tuple(r for r in self.rules if r.id != rule.id) + (rule,)
        return replace(self, rules=rules)


def _can_hold_tokens(net: Net, marking: Marking, place: str) -> bool:
    return marking.count(place) > 0 or bool(net.producers(place))


def build_pnac(net: Net, rules: Iterable[RewriteRule] = (), initial: Marking | None = None) -> PNAC:
    initial = initial or Marking()
    stray = set(initial.places()) - net.places
    if stray:
        raise StructuralError(f"initial marking names unknown places {sorted(stray)}")
    rules = tuple(rules)
    ids = [r.id for r in rules]
    if len(set(ids)) != len(ids):
        raise RuleError("duplicate rule id")
    for rule in rules:
        check_rule(rule)
        transfer = rule.transfer
        for p in sorted(rule.match.places & net.places):
            if p not in transfer and _can_hold_tokens(net, initial, p):
                raise RuleError(f"rule {rule.id!r}: place {p!r} can hold tokens but has no transfer target")
    return PNAC(net, rules, initial, 0)


def _problems(net: Net, rule: RewriteRule) -> list[str]:
    problems = []
    m = rule.match
    missing = (m.places - net.places) | (m.transitions - net.transitions)
    if missing:
        problems.append(f"matched nodes missing: {sorted(missing)}")
    for s, d, w in m.arcs:
        if net.flow(s, d) != w:
            problems.append(f"matched arc {s}->{d} (weight {w}) absent")
    for port in m.ports:
        if port not in net.places and port not in net.transitions:
            problems.append(f"match port {port!r} absent")
    matched_arcs = {(s, d) for s, d, _ in m.arcs}
    for s, d, _ in net.arcs:
        if (s in m.nodes or d in m.nodes) and (s, d) not in matched_arcs:
            problems.append(f"arc {s}->{d} touches a deleted node but is not matched")
    survivors = (net.places | net.transitions) - m.nodes
    clash = rule.replacement.nodes & (net.places | net.transitions)
    if clash:
        problems.append(f"replacement ids already in net: {sorted(clash)}")
    for port in rule.replacement.ports:
        if rule.resolve_port(port) not in survivors:
            problems.append(f"replacement port {port!r} has no surviving host node")
    return problems


def applicable(pnac: PNAC, rule: RewriteRule, marking: Marking | None = None) -> bool:
    """True iff ``rule`` can be applied to ``pnac.net``.

    Besides the match being present, every arc touching a deleted node must
    be part of the match, and the replacement must be fresh.
    """
    pnac.rule(rule.id)
    return not _problems(pnac.net, rule)


def apply_rule(pnac: PNAC, rule: RewriteRule, marking: Marking) -> tuple[PNAC, Marking]:
    if pnac.rule(rule.id) != rule:
        raise UnknownRule(rule.id)
    problems = _problems(pnac.net, rule)
    if problems:
        raise NotApplicable(f"rule {rule.id!r}: " + "; ".join(problems))
    net, m, r = pnac.net, rule.match, rule.replacement

    transfer = rule.transfer
    deltas: list[tuple[str, str, int]] = []
    for p in sorted(m.places):
        bag = marking[p]
        if not bag:
            continue
        if p not in transfer:
            raise OrphanedTokens(p)
        target = transfer[p]
        if target not in r.places:
            target = rule.resolve_port(target)
            if target not in net.places:
                raise InvalidResult(f"rule {rule.id!r}: transfer target {target!r} is not a place")
        for label, n in bag.items():
            deltas += [(p, label, -n), (target, label, n)]

    def res(node: str) -> str:
        return node if node in r.nodes else rule.resolve_port(node)

    flow = {(s, d): w for s, d, w in net.arcs if s not in m.nodes and d not in m.nodes}
    for s, d, w in r.arcs:
        key = (res(s), res(d))
        flow[key] = flow.get(key, 0) + w
    guards = {t: g for t, g in net.guards if t not in m.nodes}
    guards.update(r.guards)
    names = {n: v for n, v in net.names if n not in m.nodes}
    try:
        new_net = build_net(
            sorted((net.places - m.places) | r.places),
            sorted((net.transitions - m.transitions) | r.transitions),
            [(s, d, w) for (s, d), w in sorted(flow.items())],
            p_in=net.p_in,
            p_out=net.p_out,
            guards=guards,
            alphabet=net.alphabet,
            names=names,
        )
    except StructuralError as exc:
        raise InvalidResult(f"rule {rule.id!r} yields an invalid net: {exc}") from exc
    new_marking = marking.updated(deltas)
    return replace(pnac, net=new_net, generation=pnac.generation + 1), new_marking


# -- serialization ----------------------------------------------------------

def fragment_to_dict(f: Fragment) -> dict:
    data = {
        "places": sorted(f.places),
        "transitions": sorted(f.transitions),
        "arcs": [[s, d, w] for s, d, w in f.arcs],
        "ports": sorted(f.ports),
    }
    if f.guards:
        data["guards"] = dict(f.guards)
    return data


def fragment_from_dict(data: Mapping) -> Fragment:
    return Fragment.of(data.get("places", ()), data.get("transitions", ()),
                       [tuple(a) for a in data.get("arcs", ())], data.get("ports"),
                       data.get("guards"))


def rule_to_dict(rule: RewriteRule) -> dict:
    data = {
        "id": rule.id,
        "omega_kind": rule.omega_kind.value,
        "match": fragment_to_dict(rule.match),
        "replacement": fragment_to_dict(rule.replacement),
        "token_transfer": dict(rule.token_transfer),
        "port_map": dict(rule.port_map),
    }
    if rule.target is not None:
        data["target"] = rule.target
    return data


def rule_from_dict(data: Mapping) -> RewriteRule:
    return make_rule(
        data["id"],
        data["omega_kind"],
        fragment_from_dict(data["match"]),
        fragment_from_dict(data["replacement"]),
        data.get("token_transfer"),
        data.get("port_map"),
        data.get("target"),
    )
