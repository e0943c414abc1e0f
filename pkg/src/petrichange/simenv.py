"""Deterministic tick loop driving process execution, detection and reaction together."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .changes import ServiceDescriptor, UnknownService, operation_from_dict, render_value
from .detection import Channel, forward, new_agent, poll_cycle
from .petri import enabled_transitions, fire
from .reaction import (
    OrchestrationState,
    Status,
    heartbeat_tick,
    react,
    resume_pending,
)
from .reconfig import RuleApplicationFailed, build_pnac
from .scenario import Fault, ScenarioConfig

log = logging.getLogger(__name__)

EXIT_CODES = {Status.COMPLETED: 0, Status.EXITED: 2}
OVERRUN_EXIT = 3


@dataclass(frozen=True)
class Environment:
    """Simulated member services as the outside world sees them."""

    descriptors: Mapping[str, ServiceDescriptor]
    advertised: frozenset[str]

    @classmethod
    def of(cls, services: Iterable[ServiceDescriptor], advertised: Iterable[str] | None = None):
        services = list(services)
        ids = [s.id for s in services] if advertised is None else advertised
        return cls({s.id: s for s in services}, frozenset(ids))

    def registry(self) -> list[str]:
        return sorted(self.advertised)

    def alive(self, service_id: str) -> bool:
        return service_id in self.advertised and self.descriptors[service_id].available

    def refresh(self, service_id: str) -> ServiceDescriptor:
        return self.descriptors[service_id]


def inject(environment: Environment, fault: Fault) -> Environment:
    sid = fault.service_id
    if sid not in environment.descriptors:
        raise UnknownService(sid)
    if fault.field == "advertised":
        adv = set(environment.advertised)
        (adv.add if fault.new_value else adv.discard)(sid)
        return replace(environment, advertised=frozenset(adv))
    value = fault.new_value
    if fault.field == "operations":
        value = tuple(o if not isinstance(o, Mapping) else operation_from_dict(o) for o in value)
    desc = replace(environment.descriptors[sid], **{fault.field: value})
    return replace(environment, descriptors={**environment.descriptors, sid: desc})


@dataclass(frozen=True)
class SimTrace:
    lines: tuple[str, ...]
    final: OrchestrationState
    ticks: int
    entries: tuple = field(default=(), compare=False)

    @property
    def status(self) -> Status:
        return self.final.status

    @property
    def exit_code(self) -> int:
        return EXIT_CODES.get(self.final.status, OVERRUN_EXIT)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def initial_state(config: ScenarioConfig) -> OrchestrationState:
    pnac = build_pnac(config.flat_net(), config.rules, config.initial())
    return OrchestrationState(
        pnac=pnac,
        marking=pnac.initial,
        bindings=dict(config.bindings),
        composites=config.composites,
        invoked=dict(config.invoked),
    )


def _next_transition(state: OrchestrationState, env: Environment) -> str | None:
    for t in enabled_transitions(state.net, state.marking):
        sid = state.service_at(t)
        if sid is None or env.alive(sid):
            return t
    return None


def run(config: ScenarioConfig) -> SimTrace:
    """Execute the scenario.  Per tick: faults, poll, reactions, heartbeat, one firing."""
    env = Environment.of(config.services, config.advertised)
    agent = new_agent(config.polling, [env.descriptors[s] for s in env.registry()], config.dead_band)
    state = initial_state(config)
    channel = Channel()
    policy = config.policy
    faults: dict[int, list[Fault]] = {}
    for f in config.fault_schedule:
        faults.setdefault(f.tick, []).append(f)
    lines: list[str] = []
    seen = 0

    def flush(tick_state: OrchestrationState) -> None:
        nonlocal seen
        lines.extend(e.line() for e in tick_state.trace[seen:])
        seen = len(tick_state.trace)

    tick = 0
    for tick in range(config.max_ticks):
        was_paused = state.status is Status.PAUSED
        for f in faults.get(tick, ()):
            env = inject(env, f)
            lines.append(f"tick={tick} FAULT service={f.service_id} field={f.field} "
                         f"value={render_value(f.new_value) if f.field != 'operations' else 'ops'}")

        agent, records = poll_cycle(agent, env, tick)
        lines.extend(r.line() for r in records)
        forward(records, channel)

        for record in channel.drain():
            try:
                state = react(state, record, policy, agent.snapshots, tick)
            except RuleApplicationFailed as exc:
                flush(state)
                lines.append(f"tick={tick} ERROR rule-application {str(exc).replace(' ', '_')}")
                state = replace(state, status=Status.EXITED)
            flush(state)
            if state.status is Status.EXITED:
                channel.close()
                break

        if state.status is Status.PAUSED and was_paused:
            state = heartbeat_tick(state, env, policy, tick)
            if state.status is Status.RUNNING and state.pending:
                state = resume_pending(state, policy, agent.snapshots, tick)
            flush(state)
            if state.status is Status.EXITED:
                channel.close()

        if state.status is Status.RUNNING:
            t = _next_transition(state, env)
            if t is not None:
                state = replace(state, marking=fire(state.net, state.marking, t))
                lines.append(f"tick={tick} FIRE transition={t}")
                if state.completed:
                    state = replace(state, status=Status.COMPLETED)
                    channel.close()

        if state.status in (Status.COMPLETED, Status.EXITED):
            break

    lines.append(f"RESULT status={state.status.value} generations={state.pnac.generation}")
    log.debug("scenario %s finished at tick %d with %s", config.name, tick, state.status.value)
    return SimTrace(tuple(lines), state, tick + 1, state.trace)
