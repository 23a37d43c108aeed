"""Synchronous plan executor over scripted action components.

Each planner action maps to a component that answers event commands with a
status.  Failures trigger replanning from the current knowledge base until
the goal holds or the replan budget runs out; every step lands in a trace
that can be dumped as JSON Lines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import WorkbotError
from .pddl import (Atom, DomainDef, GroundAction, Plan, ProblemDef,
                   Unsolvable, plan as make_plan)

E_START = "e_start"
E_STOP = "e_stop"
E_TRIGGER = "e_trigger"
EVENTS = (E_START, E_STOP, E_TRIGGER)

E_SUCCESS = "e_success"
E_FAILURE = "e_failure"
E_STOPPED = "e_stopped"
STATUSES = (E_SUCCESS, E_FAILURE, E_STOPPED)

OUTCOME_SUCCESS = "Success"
OUTCOME_BUDGET = "ReplanBudgetExhausted"
OUTCOME_UNSOLVABLE = "Unsolvable"


class ExecutionError(WorkbotError):
    pass


class UnknownAction(ExecutionError):
    pass


class ReplanBudgetExhausted(ExecutionError):
    pass


@dataclass
class ActionBinding:
    """Deterministic component behavior for one planner action.

    ``script`` lists the statuses successive runs return; the last entry
    repeats once the script is exhausted.  On failure the knowledge base
    gains ``failure_add`` and loses ``failure_delete`` (both default empty:
    a failed attempt leaves the world as it was).
    """

    action: str
    script: tuple[str, ...] = (E_SUCCESS,)
    failure_add: frozenset[Atom] = frozenset()
    failure_delete: frozenset[Atom] = frozenset()
    _cursor: int = field(default=0, repr=False)

    def __post_init__(self):
        if not self.script:
            raise ValueError("script must not be empty")
        for status in self.script:
            if status not in (E_SUCCESS, E_FAILURE):
                raise ValueError(f"script entries must be "
                                 f"{E_SUCCESS}/{E_FAILURE}, got {status}")

    def next_status(self) -> str:
        status = self.script[min(self._cursor, len(self.script) - 1)]
        self._cursor += 1
        return status


def component_step(binding: ActionBinding, event: str,
                   kb: frozenset[Atom],
                   ground_action: GroundAction | None = None
                   ) -> tuple[str, frozenset[Atom]]:
    """One command/status exchange with a component.

    e_stop answers e_stopped and leaves the kb alone.  e_trigger and
    e_start both run the behavior to completion: success applies the ground
    action's planner effects (when given), failure applies the binding's
    failure effects.
    """
    if event not in EVENTS:
        raise ValueError(f"unknown event: {event}")
    if event == E_STOP:
        return E_STOPPED, kb
    status = binding.next_status()
    if status == E_SUCCESS:
        if ground_action is not None:
            kb = ground_action.apply(kb)
        return E_SUCCESS, kb
    kb = (kb - binding.failure_delete) | binding.failure_add
    return E_FAILURE, kb


@dataclass(frozen=True)
class TraceRecord:
    step: int
    action: str
    status: str
    kb_size: int
    replans: int
    kb_after: frozenset[Atom]

    def to_json(self) -> dict:
        return {"step": self.step, "action": self.action,
                "status": self.status, "kb_size": self.kb_size,
                "replans": self.replans}


@dataclass(frozen=True)
class ExecutionTrace:
    records: tuple[TraceRecord, ...]
    outcome: str
    final_kb: frozenset[Atom]
    replans: int
    plans_attempted: int

    def to_jsonl(self) -> str:
        lines = [json.dumps(r.to_json(), sort_keys=True)
                 for r in self.records]
        lines.append(json.dumps({"outcome": self.outcome,
                                 "replans": self.replans,
                                 "plans_attempted": self.plans_attempted},
                                sort_keys=True))
        return "\n".join(lines) + "\n"


def _schema_name(ground_name: str) -> str:
    return ground_name.strip("()").split()[0]


def execute(domain: DomainDef, problem: ProblemDef,
            bindings: dict[str, ActionBinding],
            fault_script: dict[int, str] | None = None,
            max_replans: int = 3,
            mode: str = "greedy") -> ExecutionTrace:
    """Plan, run each step through its component, replan on failure.

    ``fault_script`` forces the status of specific global step indices
    (counted across replans) without consuming the binding's own script.
    The budget allows max_replans replans, i.e. max_replans + 1 plans in
    total; exhausting it, or an unsolvable replanning state, ends the trace
    with the corresponding outcome instead of raising.
    """
    for schema in domain.actions:
        if schema.name not in bindings:
            raise UnknownAction(f"no binding for action: {schema.name}")
    fault_script = fault_script or {}
    for binding in bindings.values():
        binding._cursor = 0         # a run always starts scripts fresh

    kb = problem.init
    records: list[TraceRecord] = []
    replans = 0
    plans_attempted = 0
    step = 0

    while True:
        current = ProblemDef(
            name=problem.name, domain_name=problem.domain_name,
            objects=problem.objects, init=kb,
            function_values=problem.function_values,
            goal=problem.goal, metric=problem.metric)
        plans_attempted += 1
        try:
            the_plan = make_plan(domain, current, mode)
        except Unsolvable:
            return ExecutionTrace(records=tuple(records),
                                  outcome=OUTCOME_UNSOLVABLE, final_kb=kb,
                                  replans=replans,
                                  plans_attempted=plans_attempted)
        failed = False
        for act in the_plan.actions:
            binding = bindings[_schema_name(act.name)]
            if step in fault_script:
                status = fault_script[step]
                if status not in (E_SUCCESS, E_FAILURE):
                    raise ValueError(f"fault script status must be "
                                     f"{E_SUCCESS}/{E_FAILURE}: {status}")
                if status == E_SUCCESS:
                    kb = act.apply(kb)
                else:
                    kb = (kb - binding.failure_delete) | binding.failure_add
            else:
                status, kb = component_step(binding, E_TRIGGER, kb, act)
            if status == E_FAILURE:
                replans += 1
            records.append(TraceRecord(step=step, action=act.name,
                                       status=status, kb_size=len(kb),
                                       replans=replans, kb_after=kb))
            step += 1
            if status == E_FAILURE:
                failed = True
                break
        if failed:
            if replans > max_replans:
                return ExecutionTrace(records=tuple(records),
                                      outcome=OUTCOME_BUDGET, final_kb=kb,
                                      replans=replans,
                                      plans_attempted=plans_attempted)
            continue
        return ExecutionTrace(records=tuple(records),
                              outcome=OUTCOME_SUCCESS, final_kb=kb,
                              replans=replans,
                              plans_attempted=plans_attempted)


def load_fault_script(obj: dict) -> dict[int, str]:
    """{"3": "e_failure"} JSON form to {3: "e_failure"}."""
    return {int(k): str(v) for k, v in obj.items()}


def load_bindings(obj: dict) -> dict[str, ActionBinding]:
    """Bindings from their JSON form.

    Each key names an action schema; the value may give "script" (list of
    statuses), "failure_add" and "failure_delete" (lists of atom lists).
    """
    out = {}
    for name, body in obj.items():
        out[name] = ActionBinding(
            action=name,
            script=tuple(body.get("script", [E_SUCCESS])),
            failure_add=frozenset(tuple(a) for a in body.get("failure_add", [])),
            failure_delete=frozenset(tuple(a)
                                     for a in body.get("failure_delete", [])))
    return out
