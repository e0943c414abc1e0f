"""Hierarchical nets whose transitions can be refined by whole subnets.

A refined transition must have exactly one input and one output place, each
with weight 1.  On flattening, the subnet's ``p_in`` is fused with the
transition's input place, its ``p_out`` with the output place, and the
transition itself disappears.  Inner nodes are renamed ``<path>/<id>``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .petri import (
    Marking,
    Net,
    NotEnabled,
    PetriError,
    StructuralError,
    UnknownTransition,
    build_net,
    fire,
    net_from_dict,
    net_to_dict,
)

SEP = "/"


class AlreadyRefined(PetriError):
    pass


class CyclicRefinement(PetriError):
    pass


def _path(path: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(path, str):
        return tuple(path.split(SEP))
    return tuple(path)


def _key(path: Sequence[str]) -> str:
    return SEP.join(path)


def _check_ids(net: Net) -> None:
    for node in net.places | net.transitions:
        if SEP in node:
            raise StructuralError(f"id {node!r} contains reserved separator {SEP!r}")


@dataclass(frozen=True)
class HierarchicalNet:
    root: Net
    refinements: tuple[tuple[str, Net], ...] = ()

    def __post_init__(self):
        _check_ids(self.root)

    @property
    def refinement_map(self) -> dict[str, Net]:
        return dict(self.refinements)

    def net_at(self, path: Sequence[str]) -> Net:
        """The net hosting the transitions at ``path`` (empty path = root)."""
        if not path:
            return self.root
        try:
            return self.refinement_map[_key(path)]
        except KeyError:
            raise UnknownTransition(_key(path)) from None

    def is_refined(self, path: Sequence[str]) -> bool:
        return _key(path) in self.refinement_map


def _port_places(host: Net, t: str) -> tuple[str, str]:
    ins, outs = host.inputs(t), host.outputs(t)
    if len(ins) != 1 or len(outs) != 1 or set(ins.values()) | set(outs.values()) != {1}:
        raise StructuralError(
            f"refined transition {t!r} needs exactly one input and one output place of weight 1"
        )
    return next(iter(ins)), next(iter(outs))


def refine(hnet: HierarchicalNet, transition_path: str | Sequence[str],
           subnet: Net | HierarchicalNet) -> HierarchicalNet:
    """Attach ``subnet`` to the transition at ``transition_path``.

    ``subnet`` may itself be hierarchical; its refinements are re-keyed under
    the new path.
    """
    path = _path(transition_path)
    if not path or any(not seg for seg in path):
        raise UnknownTransition(_key(path))
    host = hnet.net_at(path[:-1])
    if path[-1] not in host.transitions:
        raise UnknownTransition(_key(path))
    if hnet.is_refined(path):
        raise AlreadyRefined(_key(path))

    inner = subnet if isinstance(subnet, HierarchicalNet) else HierarchicalNet(subnet)
    ancestors = [hnet.net_at(path[:i]) for i in range(len(path))]
    for net in [inner.root, *(n for _, n in inner.refinements)]:
        if any(net == a for a in ancestors):
            raise CyclicRefinement(f"refining {_key(path)!r} would nest a net inside itself")
    for _, n in inner.refinements:
        _check_ids(n)
    _port_places(host, path[-1])
    if inner.root.p_in == inner.root.p_out:
        raise StructuralError("a refining subnet needs distinct p_in and p_out")

    added = [(_key(path), inner.root)]
    added += [(_key(path + _path(k)), n) for k, n in inner.refinements]
    return HierarchicalNet(hnet.root, tuple(sorted(hnet.refinements + tuple(added))))


def _flatten_level(hnet: HierarchicalNet, path: tuple[str, ...]):
    """Flat components of the net at ``path``, ids qualified by ``path``."""
    net = hnet.net_at(path)

    def q(node: str) -> str:
        return _key(path + (node,))

    places = {q(p) for p in net.places}
    transitions = {q(t) for t in net.transitions}
    arcs = {(q(s), q(d)): w for s, d, w in net.arcs}
    guards = {q(t): g for t, g in net.guards}
    names = {q(n): v for n, v in net.names}
    alphabet = set(net.alphabet)

    for t in net.sorted_transitions():
        sub_path = path + (t,)
        if not hnet.is_refined(sub_path):
            continue
        src, dst = _port_places(net, t)
        sp, st, sa, sg, sn, salpha, s_in, s_out = _flatten_level(hnet, sub_path)
        fuse = {s_in: q(src), s_out: q(dst)}
        transitions.discard(q(t))
        guards.pop(q(t), None)
        names.pop(q(t), None)
        arcs = {k: w for k, w in arcs.items() if q(t) not in k}
        places |= sp - set(fuse)
        transitions |= st
        for (s, d), w in sa.items():
            key = (fuse.get(s, s), fuse.get(d, d))
            arcs[key] = arcs.get(key, 0) + w
        guards.update(sg)
        names.update({k: v for k, v in sn.items() if k not in fuse})
        alphabet |= salpha
    return places, transitions, arcs, guards, names, alphabet, q(net.p_in), q(net.p_out)


def flatten(hnet: HierarchicalNet) -> Net:
    places, transitions, arcs, guards, names, alphabet, p_in, p_out = _flatten_level(hnet, ())
    return build_net(
        sorted(places),
        sorted(transitions),
        [(s, d, w) for (s, d), w in sorted(arcs.items())],
        p_in=p_in,
        p_out=p_out,
        guards=guards,
        alphabet=alphabet,
        names=names,
    )


def _resolve_place(hnet: HierarchicalNet, path: tuple[str, ...], place: str) -> str:
    """Flat id of ``place`` in the net at ``path``, following port fusion upward."""
    while path:
        net = hnet.net_at(path)
        if place == net.p_in:
            place = _port_places(hnet.net_at(path[:-1]), path[-1])[0]
        elif place == net.p_out:
            place = _port_places(hnet.net_at(path[:-1]), path[-1])[1]
        else:
            return _key(path + (place,))
        path = path[:-1]
    return place


def execute_hierarchical(hnet: HierarchicalNet, marking: Marking,
                         sequence: Iterable[str]) -> Marking:
    """Fire path-qualified leaf transitions directly on the hierarchy.

    Markings use the same qualified place ids :func:`flatten` produces.
    """
    for step, qualified in enumerate(sequence):
        path = _path(qualified)
        try:
            host = hnet.net_at(path[:-1])
        except UnknownTransition:
            raise UnknownTransition(qualified) from None
        t = path[-1]
        if t not in host.transitions or hnet.is_refined(path):
            raise UnknownTransition(qualified)
        # p_in and p_out may fuse onto one host place, so weights add up
        ins: Counter = Counter()
        outs: Counter = Counter()
        for p, w in host.inputs(t).items():
            ins[_resolve_place(hnet, path[:-1], p)] += w
        for p, w in host.outputs(t).items():
            outs[_resolve_place(hnet, path[:-1], p)] += w
        arcs = [(p, qualified, w) for p, w in ins.items()]
        arcs += [(qualified, p, w) for p, w in outs.items()]
        ports = sorted(set(ins) | set(outs)) or ["_"]
        local = build_net(
            ports, [qualified], arcs, p_in=ports[0], p_out=ports[0],
            guards={qualified: host.guard(t)} if host.guard(t) else None,
        )
        try:
            marking = fire(local, marking, qualified)
        except NotEnabled as exc:
            raise NotEnabled(qualified, exc.place, step) from None
    return marking


def hnet_to_dict(hnet: HierarchicalNet) -> dict:
    return {
        "root": net_to_dict(hnet.root),
        "refinements": [{"path": k, "subnet": net_to_dict(n)} for k, n in hnet.refinements],
    }


def hnet_from_dict(data: Mapping) -> HierarchicalNet:
    hnet = HierarchicalNet(net_from_dict(data["root"]))
    entries = sorted(data.get("refinements", []), key=lambda e: len(_path(e["path"])))
    for entry in entries:
        hnet = refine(hnet, entry["path"], net_from_dict(entry["subnet"]))
    return hnet
