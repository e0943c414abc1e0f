"""Random fault schedules checked against the cross-module invariants."""
from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .reaction import Status
from .scenario import Fault, ScenarioConfig
from .simenv import SimTrace, run

ESCALATIONS = ("pause", "remove", "exit")


@dataclass(frozen=True)
class FuzzFailure:
    index: int
    seed: str
    problems: tuple[str, ...]
    schedule: tuple[Fault, ...]


def random_schedule(config: ScenarioConfig, rng: random.Random, horizon: int = 20,
                    max_faults: int = 4) -> tuple[Fault, ...]:
    ids = sorted(s.id for s in config.services)
    faults = []
    for _ in range(rng.randint(1, max_faults)):
        sid = rng.choice(ids)
        field = rng.choice(("available", "available", "reliable", "cost", "responsiveness"))
        if field in ("available", "reliable"):
            value = rng.random() < 0.3
        else:
            value = float(rng.randint(0, 40))
        faults.append(Fault(rng.randrange(min(horizon, config.max_ticks)), sid, field, value))
    return tuple(sorted(faults, key=lambda f: f.tick))


def check_invariants(config: ScenarioConfig, trace: SimTrace) -> list[str]:
    """Conservation, consistency-or-escalation, bounded pause and clean rule application."""
    problems = []
    entries = list(trace.entries)
    for i, e in enumerate(entries):
        before, after = e.get("tokens_before"), e.get("tokens_after")
        if before is not None and before != after:
            problems.append(f"tick {e.tick}: tokens not conserved by {e.get('rule')}: {before} -> {after}")
        if e.get("consistent") == "false":
            nxt = entries[i + 1] if i + 1 < len(entries) else None
            if nxt is None or nxt.get("action") not in ESCALATIONS:
                problems.append(f"tick {e.tick}: inconsistent after {e.get('rule')} without escalation")
    beats = 0
    for e in entries:
        if e.kind == "HEARTBEAT":
            beats += 1
            if beats > config.policy.heartbeat_limit:
                problems.append(f"tick {e.tick}: paused beyond {config.policy.heartbeat_limit} heartbeats")
        elif e.get("action") in ("resume", "pause"):
            beats = 0
    problems += [ln for ln in trace.lines if " ERROR " in ln]
    if trace.final.completed and trace.status is not Status.COMPLETED:
        problems.append("output place marked but status not Completed")
    return problems


def _failures(config: ScenarioConfig, schedule: tuple[Fault, ...]) -> list[str]:
    cfg = replace(config, fault_schedule=schedule)
    first = run(cfg)
    problems = check_invariants(cfg, first)
    if run(cfg).lines != first.lines:
        problems.append("non-deterministic trace")
    return problems


def minimize(config: ScenarioConfig, schedule: tuple[Fault, ...]) -> tuple[Fault, ...]:
    """Greedily drop faults while the run still fails."""
    current = list(schedule)
    changed = True
    while changed:
        changed = False
        for i in range(len(current)):
            trial = tuple(current[:i] + current[i + 1:])
            if _failures(config, trial):
                current = list(trial)
                changed = True
                break
    return tuple(current)


def fuzz(config: ScenarioConfig, count: int, seed: int) -> list[FuzzFailure]:
    """Run ``count`` random schedules layered on the scenario's own schedule."""
    if count < 1:
        raise ValueError("count must be >= 1")
    failures = []
    for i in range(count):
        label = f"{seed}:{i}"
        rng = random.Random(label)
        schedule = tuple(sorted(config.fault_schedule + random_schedule(config, rng),
                                key=lambda f: f.tick))
        problems = _failures(config, schedule)
        if problems:
            failures.append(FuzzFailure(i, label, tuple(problems), minimize(config, schedule)))
    return failures
