"""Exchangeable multi-stopping and swing options with a refraction period.

When the reward does not care about the order of the d stop times, the
nested recursion collapses: commitments can be made in nondecreasing time
order, so a state is just the node plus the times committed so far. The
swing specialization adds per-right payoffs collected from one process and
a minimum gap (refraction period) delta between consecutive exercises, with
all d rights forced into the horizon.
"""
from __future__ import annotations

from dataclasses import dataclass

from .market_model import (
    CapExceededError,
    InfeasibleError,
    MultiReward,
    NodeProcess,
    StoppingTime,
    TreeModel,
)
from .multiple_stopping import DEFAULT_STATE_CAP, MultiStoppingTuple, tuple_value
from .single_stopping import EPS_EQ


@dataclass(frozen=True)
class SymmetricSolution:
    """Value and an ordered optimal tuple (componentwise nondecreasing times)."""

    value: float
    components: MultiStoppingTuple

    @property
    def model(self) -> TreeModel:
        return self.components.model

    @property
    def start(self) -> str:
        return self.components.start


def symmetric_backward(
    model: TreeModel,
    psi: MultiReward,
    start: str,
    *,
    cap_states: int = DEFAULT_STATE_CAP,
    eps: float = EPS_EQ,
) -> SymmetricSolution:
    """Solve a symmetric d-fold problem with an ordered-commitment recursion.

    States are (times committed so far, node); at each node the recursion
    either commits the next time now or carries the state to the children.
    Values agree with the general solver on symmetric rewards; this routine
    exists because the collapsed state space is what makes larger d cheap.
    """
    if not psi.symmetric:
        raise ValueError("symmetric_backward needs a symmetric reward")
    if start not in model:
        raise ValueError(f"unknown start node {start!r}")
    d = psi.d
    memo: dict[tuple[tuple[int, ...], str], float] = {}

    def w(prior: tuple[int, ...], node: str) -> float:
        if len(prior) == d:
            return psi.evaluate(model.path_to(node), prior)
        key = (prior, node)
        cached = memo.get(key)
        if cached is not None:
            return cached
        if len(memo) >= cap_states:
            raise CapExceededError(
                f"ordered-commitment table exceeded its budget of {cap_states} states",
                count=len(memo),
            )
        stop_next = w(prior + (model.time(node),), node)
        kids = model.children(node)
        if not kids:
            out = stop_next
        else:
            cont = 0.0
            for cid, p in kids:
                cont += p * w(prior, cid)
            out = max(stop_next, cont)
        memo[key] = out
        return out

    value = w((), start)

    stop_sets: list[set[str]] = [set() for _ in range(d)]

    def extract(prior: tuple[int, ...], node: str) -> None:
        t = model.time(node)
        while len(prior) < d and w(prior + (t,), node) >= w(prior, node) - eps:
            stop_sets[len(prior)].add(node)
            prior = prior + (t,)
        if len(prior) == d:
            return
        for cid, _ in model.children(node):
            extract(prior, cid)

    extract((), start)
    tup = MultiStoppingTuple(
        tuple(StoppingTime(model, start, frozenset(s)) for s in stop_sets)
    )
    attained = tuple_value(tup, psi)
    if abs(attained - value) > eps:
        raise AssertionError(
            f"ordered tuple attains {attained!r}, backward value is {value!r}"
        )
    return SymmetricSolution(value=value, components=tup)


@dataclass(frozen=True)
class SwingSolution:
    """A solved swing instance: d rights on payoff ``y`` with gap ``delta``."""

    model: TreeModel
    y: NodeProcess
    d: int
    delta: int
    start: str
    value: float
    value_process: NodeProcess
    z: tuple[NodeProcess, ...]
    components: MultiStoppingTuple
    exercise_times: dict[str, tuple[int, ...]]


def swing_solve(
    model: TreeModel,
    y: NodeProcess,
    d: int,
    delta: int,
    start: str,
    *,
    eps: float = EPS_EQ,
) -> SwingSolution:
    """Solve a swing option exactly: all d rights must be exercised, consecutive
    exercise times at least ``delta`` apart, everything inside the horizon.

    Raises :class:`InfeasibleError` when the d rights cannot fit between the
    start time and the horizon.
    """
    if y.model is not model:
        raise ValueError("payoff process lives on a different model")
    if d < 1:
        raise ValueError(f"number of rights must be >= 1, got {d!r}")
    if delta < 0:
        raise ValueError(f"refraction period must be >= 0, got {delta!r}")
    if start not in model:
        raise ValueError(f"unknown start node {start!r}")
    d, delta = int(d), int(delta)
    horizon = model.horizon
    t0 = model.time(start)
    if t0 + (d - 1) * delta > horizon:
        raise InfeasibleError(
            f"{d} rights with gap {delta} starting at time {t0} do not fit into horizon {horizon}"
        )

    memo: dict[tuple[str, int, int], float] = {}

    def feasible(node: str, e: int, a: int) -> bool:
        return max(a, model.time(node)) + (e - 1) * delta <= horizon

    def v(node: str, e: int, a: int) -> float:
        if e == 0:
            return 0.0
        t = model.time(node)
        a = max(a, t)
        key = (node, e, a)
        cached = memo.get(key)
        if cached is not None:
            return cached
        best = None
        if t >= a and t + (e - 1) * delta <= horizon:
            best = y[node] + v(node, e - 1, t + delta)
        kids = model.children(node)
        if kids and max(t + 1, a) + (e - 1) * delta <= horizon:
            cont = 0.0
            for cid, p in kids:
                cont += p * v(cid, e, a)
            best = cont if best is None else max(best, cont)
        if best is None:
            raise AssertionError(f"feasible state ({node!r}, {e}, {a}) has no action")
        memo[key] = best
        return best

    value = v(start, d, t0)

    value_process = NodeProcess(
        model,
        {
            nid: (v(nid, d, model.time(nid)) if feasible(nid, d, model.time(nid)) else 0.0)
            for nid in model.node_ids()
        },
    )
    z = []
    for k in range(d):
        remaining = d - k - 1
        vals = {}
        for nid in model.node_ids():
            t = model.time(nid)
            if remaining >= 1 and feasible(nid, remaining, t + delta):
                vals[nid] = v(nid, remaining, t + delta)
            else:
                vals[nid] = 0.0
        z.append(NodeProcess(model, vals))

    stop_sets: list[set[str]] = [set() for _ in range(d)]

    def extract(node: str, e: int, a: int) -> None:
        if e == 0:
            return
        t = model.time(node)
        a = max(a, t)
        here = v(node, e, a)
        if t >= a and t + (e - 1) * delta <= horizon:
            exercised = y[node] + v(node, e - 1, t + delta)
            if exercised >= here - eps:
                stop_sets[d - e].add(node)
                extract(node, e - 1, t + delta)
                return
        for cid, _ in model.children(node):
            extract(cid, e, a)

    extract(start, d, t0)
    components = MultiStoppingTuple(
        tuple(StoppingTime(model, start, frozenset(s)) for s in stop_sets)
    )

    exercise_times: dict[str, tuple[int, ...]] = {}
    attained = 0.0
    for leaf in model.leaves_below(start):
        times = components.times_on_path(leaf)
        nodes = components.stop_nodes_on_path(leaf)
        for k in range(d - 1):
            if times[k + 1] - times[k] < delta:
                raise AssertionError(
                    f"exercise schedule {times} on path to {leaf!r} violates the gap {delta}"
                )
        exercise_times[leaf] = times
        attained += model.cond_prob(start, leaf) * sum(y[nid] for nid in nodes)
    if abs(attained - value) > eps:
        raise AssertionError(f"exercise schedule attains {attained!r}, value is {value!r}")

    return SwingSolution(
        model=model,
        y=y,
        d=d,
        delta=delta,
        start=start,
        value=value,
        value_process=value_process,
        z=tuple(z),
        components=components,
        exercise_times=exercise_times,
    )
