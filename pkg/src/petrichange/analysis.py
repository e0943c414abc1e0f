"""Explicit-state analysis: bounded reachability, consistency, safety, DOT export."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Protocol

from .petri import Marking, Net, PetriError, enabled_transitions, fire

DEFAULT_BOUND = 100_000


class BoundExceeded(PetriError):
    """Exploration hit its bound before reaching the output place; the verdict is unknown."""

    def __init__(self, bound: int):
        super().__init__(f"no verdict within {bound} markings")
        self.bound = bound


class Cancelled(PetriError):
    pass


class CancelToken(Protocol):
    def is_set(self) -> bool: ...


@dataclass(frozen=True)
class ReachabilitySet:
    markings: frozenset[Marking]
    bound: int
    truncated: bool
    # breadth-first discovery order
    order: tuple[Marking, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.markings)

    def __contains__(self, m: Marking) -> bool:
        return m in self.markings

    def to_json(self) -> str:
        return json.dumps({
            "bound": self.bound,
            "truncated": self.truncated,
            "markings": [m.to_dict() for m in self.order],
        }, sort_keys=True)


def _explore(net: Net, initial: Marking, bound: int, goal=None, cancel: CancelToken | None = None):
    """BFS with parent pointers.  Returns (order, parents, truncated, hit)."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    parents: dict[Marking, tuple[Marking, str] | None] = {initial: None}
    order = [initial]
    queue = deque([initial])
    truncated = False
    if goal is not None and goal(initial):
        return order, parents, False, initial
    while queue:
        if cancel is not None and cancel.is_set():
            raise Cancelled()
        m = queue.popleft()
        for t in enabled_transitions(net, m):
            nxt = fire(net, m, t)
            if nxt in parents:
                continue
            if len(parents) >= bound:
                truncated = True
                continue
            parents[nxt] = (m, t)
            order.append(nxt)
            queue.append(nxt)
            if goal is not None and goal(nxt):
                return order, parents, truncated, nxt
        if truncated and goal is None:
            break
    return order, parents, truncated, None


def reachable(net: Net, initial: Marking, bound: int = DEFAULT_BOUND,
              cancel: CancelToken | None = None) -> ReachabilitySet:
    order, _, truncated, _ = _explore(net, initial, bound, cancel=cancel)
    return ReachabilitySet(frozenset(order), bound, truncated, tuple(order))


def _witness(parents, m: Marking) -> tuple[str, ...]:
    seq = []
    while parents[m] is not None:
        m, t = parents[m]
        seq.append(t)
    return tuple(reversed(seq))


@dataclass(frozen=True)
class Consistency:
    consistent: bool
    witness: tuple[str, ...] | None
    explored: int

    def __bool__(self) -> bool:
        return self.consistent


def check_consistency(net: Net, marking: Marking, bound: int = DEFAULT_BOUND,
                      cancel: CancelToken | None = None) -> Consistency:
    """Whether some reachable marking puts a token in ``net.p_out``.

    A positive answer carries a witnessing firing sequence.  Raises
    :class:`BoundExceeded` when the search was cut short without an answer.
    """
    goal = lambda m: m.count(net.p_out) > 0  # noqa: E731
    order, parents, truncated, hit = _explore(net, marking, bound, goal, cancel)
    if hit is not None:
        return Consistency(True, _witness(parents, hit), len(order))
    if truncated:
        raise BoundExceeded(bound)
    return Consistency(False, None, len(order))


def consistency_verdict(net: Net, marking: Marking, bound: int = DEFAULT_BOUND) -> str:
    """``"true"``, ``"false"`` or ``"indeterminate"``."""
    try:
        return "true" if check_consistency(net, marking, bound) else "false"
    except BoundExceeded:
        return "indeterminate"


class Safety(str, Enum):
    SAFE = "Safe"
    UNSAFE = "Unsafe"


@dataclass(frozen=True)
class UnsafeSpec:
    """Predicate over markings.

    ``kind`` is one of ``token_in`` (any listed place marked, optionally with
    a given label), ``exceeds`` (some listed place holds more than ``limit``
    tokens) or ``never``.
    """

    kind: str = "never"
    places: tuple[str, ...] = ()
    label: str | None = None
    limit: int = 1

    def __post_init__(self):
        if self.kind not in ("token_in", "exceeds", "never"):
            raise ValueError(f"unknown unsafe predicate {self.kind!r}")

    def holds(self, marking: Marking) -> bool:
        if self.kind == "token_in":
            return any(marking.count(p, self.label) > 0 for p in self.places)
        if self.kind == "exceeds":
            return any(marking.count(p) > self.limit for p in self.places)
        return False

    @classmethod
    def from_dict(cls, data: Mapping) -> UnsafeSpec:
        return cls(data.get("kind", "never"), tuple(data.get("places", ())),
                   data.get("label"), data.get("limit", 1))

    def to_dict(self) -> dict:
        data: dict = {"kind": self.kind}
        if self.places:
            data["places"] = list(self.places)
        if self.label is not None:
            data["label"] = self.label
        if self.kind == "exceeds":
            data["limit"] = self.limit
        return data


# change-state places of the non-functional template
TEMPLATE_UNSAFE = UnsafeSpec("token_in", ("PS'A", "PS'R", "PS'C", "PS'Re"))


def classify_safety(net: Net, marking: Marking, spec: UnsafeSpec) -> Safety:
    return Safety.UNSAFE if spec.holds(marking) else Safety.SAFE


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _bag(marking: Marking, place: str) -> str:
    bag = marking[place]
    return ",".join(lbl if n == 1 else f"{lbl}x{n}" for lbl, n in bag.items())


def export_dot(net: Net, marking: Marking | None = None, name: str = "net") -> str:
    marking = marking or Marking()
    lines = [f"digraph {_quote(name)} {{", "  rankdir=LR;"]
    for p in net.sorted_places():
        label = p
        tokens = _bag(marking, p)
        if tokens:
            label += "\\n{" + tokens + "}"
        extra = ", peripheries=2" if p in (net.p_in, net.p_out) else ""
        lines.append(f"  {_quote(p)} [shape=circle, label={_quote(label)}{extra}];")
    for t in net.sorted_transitions():
        label = t
        if net.guard(t):
            label += f"\\n[{net.guard(t)}]"
        lines.append(f"  {_quote(t)} [shape=box, label={_quote(label)}];")
    for s, d, w in net.arcs:
        lines.append(f"  {_quote(s)} -> {_quote(d)} [label={_quote(str(w))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def replay_paths(net: Net, initial: Marking, depth: int) -> dict[Marking, tuple[str, ...]]:
    """Depth-first enumeration of firing sequences up to ``depth``.

    Independent of the breadth-first explorer; used to cross-check it.
    """
    found: dict[Marking, tuple[str, ...]] = {}

    def walk(m: Marking, seq: tuple[str, ...]) -> None:
        if m not in found or len(seq) < len(found[m]):
            found[m] = seq
        elif m in found:
            return
        if len(seq) == depth:
            return
        for t in sorted(net.transitions):
            try:
                walk(fire(net, m, t), seq + (t,))
            except PetriError:
                continue

    walk(initial, ())
    return found


def markings_with(net: Net, markings: Iterable[Marking], spec: UnsafeSpec) -> int:
    return sum(1 for m in markings if spec.holds(m))
