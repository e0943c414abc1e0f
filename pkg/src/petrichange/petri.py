"""Labeled place/transition nets: structure, markings, firing and the incidence matrix.

Tokens carry a label from a finite alphabet.  A transition may be guarded by
one label, in which case it only consumes and produces tokens of that label.
Unguarded transitions consume whatever is available (smallest label first)
and produce ``PLAIN`` tokens.

All values here are immutable; every operation returns a new value.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

PLAIN = "plain"


class PetriError(Exception):
    """Base class for net errors."""


class StructuralError(PetriError):
    """A net violates one of the structural conditions."""


class UnknownTransition(PetriError):
    def __init__(self, transition: str):
        super().__init__(f"unknown transition {transition!r}")
        self.transition = transition


class NotEnabled(PetriError):
    """Raised when firing a transition whose input places lack tokens.

    ``place`` is the first (lexicographic) input place that blocks, and
    ``step`` the index within a firing sequence when one was being replayed.
    """

    def __init__(self, transition: str, place: str | None, step: int | None = None):
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"transition {transition!r} not enabled{where} (blocked by {place!r})")
        self.transition = transition
        self.place = place
        self.step = step


class DimensionMismatch(PetriError):
    pass


class NegativeResult(PetriError):
    def __init__(self, place: str, value: int):
        super().__init__(f"state equation gives {value} tokens in {place!r}")
        self.place = place
        self.value = value


class Marking:
    """Per-place multiset of labeled tokens.

    Accepts ``{place: {label: count}}``, ``{place: [label, ...]}`` or
    ``{place: count}`` (plain tokens).  Zero counts are dropped, so two
    markings compare equal iff they hold the same tokens.
    """

    __slots__ = ("_bags", "_key")

    def __init__(self, bags: Mapping[str, object] | None = None):
        norm: dict[str, dict[str, int]] = {}
        for place, bag in (bags or {}).items():
            if isinstance(bag, int):
                counts = {PLAIN: bag}
            elif isinstance(bag, Mapping):
                counts = dict(bag)
            else:
                counts = dict(Counter(bag))
            for label, n in counts.items():
                if not isinstance(n, int) or n < 0:
                    raise ValueError(f"bad token count {n!r} for {place}/{label}")
            counts = {lbl: n for lbl, n in counts.items() if n}
            if counts:
                norm[place] = dict(sorted(counts.items()))
        self._bags = dict(sorted(norm.items()))
        self._key = tuple((p, tuple(b.items())) for p, b in self._bags.items())

    def __getitem__(self, place: str) -> dict[str, int]:
        return dict(self._bags.get(place, {}))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Marking):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __lt__(self, other: Marking) -> bool:
        return self._key < other._key

    def __repr__(self) -> str:
        return f"Marking({self.to_dict()!r})"

    def count(self, place: str, label: str | None = None) -> int:
        bag = self._bags.get(place, {})
        if label is None:
            return sum(bag.values())
        return bag.get(label, 0)

    def places(self) -> list[str]:
        """Marked places, sorted."""
        return list(self._bags)

    def total(self) -> int:
        return sum(sum(b.values()) for b in self._bags.values())

    def label_totals(self) -> Counter:
        out: Counter = Counter()
        for bag in self._bags.values():
            out.update(bag)
        return out

    def labels(self) -> set[str]:
        return set(self.label_totals())

    def plain_counts(self) -> dict[str, int]:
        return {p: sum(b.values()) for p, b in self._bags.items()}

    def project_plain(self) -> Marking:
        return Marking(self.plain_counts())

    def to_dict(self) -> dict[str, dict[str, int]]:
        return {p: dict(b) for p, b in self._bags.items()}

    def updated(self, deltas: Iterable[tuple[str, str, int]]) -> Marking:
        """Apply ``(place, label, delta)`` triples; a negative result raises ValueError."""
        bags = self.to_dict()
        for place, label, delta in deltas:
            bag = bags.setdefault(place, {})
            n = bag.get(label, 0) + delta
            if n < 0:
                raise ValueError(f"negative token count in {place}/{label}")
            bag[label] = n
        return Marking(bags)

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> Marking:
        return cls(data)


@dataclass(frozen=True)
class Net:
    """A labeled net.  Use :func:`build_net` to get a validated instance.

    ``arcs`` holds ``(source, target, weight)`` triples, sorted.  ``guards``
    and ``names`` are sorted ``(id, value)`` pairs so the whole value stays
    hashable.
    """

    places: frozenset[str]
    transitions: frozenset[str]
    arcs: tuple[tuple[str, str, int], ...]
    p_in: str
    p_out: str
    guards: tuple[tuple[str, str], ...] = ()
    alphabet: frozenset[str] = frozenset({PLAIN})
    names: tuple[tuple[str, str], ...] = ()

    @cached_property
    def _flow(self) -> dict[tuple[str, str], int]:
        return {(s, d): w for s, d, w in self.arcs}

    @cached_property
    def _inputs(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {t: {} for t in self.transitions}
        for s, d, w in self.arcs:
            if d in self.transitions:
                out[d][s] = w
        return out

    @cached_property
    def _outputs(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {t: {} for t in self.transitions}
        for s, d, w in self.arcs:
            if s in self.transitions:
                out[s][d] = w
        return out

    @cached_property
    def _guard_map(self) -> dict[str, str]:
        return dict(self.guards)

    def flow(self, source: str, target: str) -> int:
        return self._flow.get((source, target), 0)

    def inputs(self, t: str) -> dict[str, int]:
        """Input places of ``t`` with arc weights."""
        return dict(self._inputs[t])

    def outputs(self, t: str) -> dict[str, int]:
        return dict(self._outputs[t])

    def guard(self, t: str) -> str | None:
        return self._guard_map.get(t)

    def name(self, node: str) -> str:
        return dict(self.names).get(node, node)

    def producers(self, place: str) -> list[str]:
        return sorted(s for s, d, _ in self.arcs if d == place)

    def consumers(self, place: str) -> list[str]:
        return sorted(d for s, d, _ in self.arcs if s == place)

    def sorted_places(self) -> list[str]:
        return sorted(self.places)

    def sorted_transitions(self) -> list[str]:
        return sorted(self.transitions)


def build_net(
    places: Iterable[str],
    transitions: Iterable[str],
    arcs: Iterable[Sequence],
    *,
    p_in: str,
    p_out: str,
    guards: Mapping[str, str] | None = None,
    alphabet: Iterable[str] | None = None,
    names: Mapping[str, str] | None = None,
) -> Net:
    """Validate the inputs and return a :class:`Net`.

    ``arcs`` items are ``(source, target)`` or ``(source, target, weight)``.
    Raises :class:`StructuralError` naming the first violated condition.
    """
    places = list(places)
    transitions = list(transitions)
    pset, tset = frozenset(places), frozenset(transitions)
    if len(pset) != len(places):
        raise StructuralError("duplicate place id")
    if len(tset) != len(transitions):
        raise StructuralError("duplicate transition id")
    if not pset and not tset:
        raise StructuralError("net is empty: P ∪ T = ∅")
    overlap = pset & tset
    if overlap:
        raise StructuralError(f"places and transitions overlap: {sorted(overlap)}")
    for node in pset | tset:
        if not isinstance(node, str) or not node:
            raise StructuralError(f"node ids must be non-empty strings, got {node!r}")

    flow: dict[tuple[str, str], int] = {}
    for arc in arcs:
        if len(arc) == 2:
            src, dst, w = arc[0], arc[1], 1
        elif len(arc) == 3:
            src, dst, w = arc
        else:
            raise StructuralError(f"malformed arc {arc!r}")
        for end in (src, dst):
            if end not in pset and end not in tset:
                raise StructuralError(f"arc {src!r}->{dst!r} has dangling endpoint {end!r}")
        if (src in pset) == (dst in pset):
            kind = "place" if src in pset else "transition"
            raise StructuralError(f"illegal arc {src!r}->{dst!r}: {kind} to {kind}")
        if not isinstance(w, int) or isinstance(w, bool) or w < 1:
            raise StructuralError(f"arc {src!r}->{dst!r} has weight {w!r} < 1")
        if (src, dst) in flow:
            raise StructuralError(f"duplicate arc {src!r}->{dst!r}")
        flow[(src, dst)] = w

    if p_in not in pset:
        raise StructuralError(f"input place {p_in!r} is not a place")
    if p_out not in pset:
        raise StructuralError(f"output place {p_out!r} is not a place")

    guards = dict(guards or {})
    for t in guards:
        if t not in tset:
            raise StructuralError(f"guard on unknown transition {t!r}")
    alpha = set(alphabet) if alphabet is not None else set()
    alpha |= {PLAIN, *guards.values()}
    names = dict(names or {})
    for node in names:
        if node not in pset and node not in tset:
            raise StructuralError(f"name given for unknown node {node!r}")

    return Net(
        places=pset,
        transitions=tset,
        arcs=tuple(sorted((s, d, w) for (s, d), w in flow.items())),
        p_in=p_in,
        p_out=p_out,
        guards=tuple(sorted(guards.items())),
        alphabet=frozenset(alpha),
        names=tuple(sorted(names.items())),
    )


def _check_transition(net: Net, t: str) -> None:
    if t not in net.transitions:
        raise UnknownTransition(t)


def _consumption(net: Net, marking: Marking, t: str) -> tuple[list[tuple[str, str, int]], str | None]:
    """Tokens ``t`` would take, and the first blocking place (None if enabled)."""
    guard = net.guard(t)
    taken: list[tuple[str, str, int]] = []
    for place, w in sorted(net._inputs[t].items()):
        bag = marking[place]
        if guard is not None:
            if bag.get(guard, 0) < w:
                return taken, place
            taken.append((place, guard, -w))
            continue
        if sum(bag.values()) < w:
            return taken, place
        need = w
        for label in sorted(bag):
            k = min(need, bag[label])
            taken.append((place, label, -k))
            need -= k
            if not need:
                break
    return taken, None


def enabled(net: Net, marking: Marking, t: str) -> bool:
    _check_transition(net, t)
    return _consumption(net, marking, t)[1] is None


def enabled_transitions(net: Net, marking: Marking) -> list[str]:
    return [t for t in net.sorted_transitions() if _consumption(net, marking, t)[1] is None]


def fire(net: Net, marking: Marking, t: str) -> Marking:
    _check_transition(net, t)
    taken, blocked = _consumption(net, marking, t)
    if blocked is not None:
        raise NotEnabled(t, blocked)
    label = net.guard(t) or PLAIN
    produced = [(p, label, w) for p, w in sorted(net._outputs[t].items())]
    return marking.updated(taken + produced)


def fire_sequence(net: Net, marking: Marking, sequence: Iterable[str]) -> Marking:
    for step, t in enumerate(sequence):
        try:
            marking = fire(net, marking, t)
        except NotEnabled as exc:
            raise NotEnabled(t, exc.place, step) from None
    return marking


@dataclass(frozen=True)
class IncidenceMatrix:
    """Pre, Post and C = Post - Pre; rows are places, columns transitions, both sorted."""

    places: tuple[str, ...]
    transitions: tuple[str, ...]
    pre: np.ndarray
    post: np.ndarray
    c: np.ndarray

    def column(self, t: str) -> dict[str, int]:
        j = self.transitions.index(t)
        return {p: int(self.c[i, j]) for i, p in enumerate(self.places)}

    def entry(self, place: str, t: str) -> int:
        return int(self.c[self.places.index(place), self.transitions.index(t)])


def incidence_matrix(net: Net) -> IncidenceMatrix:
    places = tuple(net.sorted_places())
    transitions = tuple(net.sorted_transitions())
    row = {p: i for i, p in enumerate(places)}
    col = {t: j for j, t in enumerate(transitions)}
    pre = np.zeros((len(places), len(transitions)), dtype=np.int64)
    post = np.zeros_like(pre)
    for s, d, w in net.arcs:
        if s in row:
            pre[row[s], col[d]] = w
        else:
            post[row[d], col[s]] = w
    for m in (pre, post):
        m.setflags(write=False)
    c = post - pre
    c.setflags(write=False)
    return IncidenceMatrix(places, transitions, pre, post, c)


def state_equation(
    marking: Marking,
    matrix: IncidenceMatrix,
    count_vector: Mapping[str, int] | Sequence[int],
) -> Marking:
    """M' = M + C·σ over the plain projection of ``marking``.

    No enabledness check is made: a non-negative result is not necessarily
    reachable.
    """
    if isinstance(count_vector, Mapping):
        unknown = set(count_vector) - set(matrix.transitions)
        if unknown:
            raise DimensionMismatch(f"count vector names unknown transitions {sorted(unknown)}")
        sigma = np.array([count_vector.get(t, 0) for t in matrix.transitions], dtype=np.int64)
    else:
        sigma = np.asarray(count_vector, dtype=np.int64)
        if sigma.shape != (len(matrix.transitions),):
            raise DimensionMismatch(
                f"count vector has length {sigma.size}, expected {len(matrix.transitions)}"
            )
    if (sigma < 0).any():
        raise ValueError("firing counts must be non-negative")
    counts = marking.plain_counts()
    stray = set(counts) - set(matrix.places)
    if stray:
        raise DimensionMismatch(f"marking names places outside the matrix: {sorted(stray)}")
    m = np.array([counts.get(p, 0) for p in matrix.places], dtype=np.int64)
    result = m + matrix.c @ sigma if matrix.transitions else m
    for p, v in zip(matrix.places, result):
        if v < 0:
            raise NegativeResult(p, int(v))
    return Marking({p: int(v) for p, v in zip(matrix.places, result)})


def net_to_dict(net: Net) -> dict:
    data = {
        "places": net.sorted_places(),
        "transitions": net.sorted_transitions(),
        "arcs": [[s, d, w] for s, d, w in net.arcs],
        "p_in": net.p_in,
        "p_out": net.p_out,
    }
    if net.guards:
        data["guards"] = dict(net.guards)
    extra = sorted(net.alphabet - {PLAIN} - {g for _, g in net.guards})
    if extra:
        data["alphabet"] = extra
    if net.names:
        data["names"] = dict(net.names)
    return data


def net_from_dict(data: Mapping) -> Net:
    return build_net(
        data["places"],
        data["transitions"],
        [tuple(a) for a in data.get("arcs", [])],
        p_in=data["p_in"],
        p_out=data["p_out"],
        guards=data.get("guards"),
        alphabet=data.get("alphabet"),
        names=data.get("names"),
    )
