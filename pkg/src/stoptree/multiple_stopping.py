"""Optimal d-fold stopping by reduction to single stopping.

The d-component problem collapses to an ordinary stopping problem for a
synthetic one-step reward: at any node, committing one component now and
optimizing the rest is itself a well-defined value (a nested stopping
problem), and the best over which component to commit — the *new reward* —
is the payoff the outer single-stopping problem should see. Backward
induction on that new reward gives the d-fold value, and unwinding the
argmax choices yields an explicit optimal tuple whose earliest component
is the earliest optimal single stop of the reduced problem.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .market_model import (
    CapExceededError,
    MultiReward,
    NodeProcess,
    StoppingTime,
    TreeModel,
    conditional_expectation,
    instance_fingerprint,
)
from .single_stopping import EPS_EQ, SnellSolution, minimal_optimal_stop, snell_solve

DEFAULT_STATE_CAP = 1_000_000

FixedKey = tuple[tuple[int, int], ...]  # sorted ((component, time), ...) pairs


@dataclass(frozen=True)
class MultiStoppingTuple:
    """d stopping rules on a shared model, all issued from the same start node."""

    components: tuple[StoppingTime, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("a stopping tuple needs at least one component")
        first = self.components[0]
        for tau in self.components[1:]:
            if tau.model is not first.model:
                raise ValueError("components live on different models")
            if tau.start != first.start:
                raise ValueError(
                    f"components start at different nodes ({tau.start!r} vs {first.start!r})"
                )

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def model(self) -> TreeModel:
        return self.components[0].model

    @property
    def start(self) -> str:
        return self.components[0].start

    def stop_nodes_on_path(self, leaf: str) -> tuple[str, ...]:
        return tuple(tau.stop_node_on_path(leaf) for tau in self.components)

    def times_on_path(self, leaf: str) -> tuple[int, ...]:
        return tuple(tau.stop_time_on_path(leaf) for tau in self.components)


def tuple_value(tup: MultiStoppingTuple, psi: MultiReward) -> float:
    """E[ψ(τ₁,…,τ_d)] from the tuple's start node, summed leaf by leaf."""
    if psi.d != tup.d:
        raise ValueError(f"reward has {psi.d} slots, tuple has {tup.d}")
    model = tup.model
    total = 0.0
    for leaf in model.leaves_below(tup.start):
        total += model.cond_prob(tup.start, leaf) * psi.evaluate(
            model.path_to(leaf), tup.times_on_path(leaf)
        )
    return total


class NestedValue:
    """Memoized nested-problem values for one (model, reward) pair.

    A state is a node plus the set of components already committed (with
    their commit times). ``residual_value`` is the best achievable from that
    state; ``new_reward`` is the best achievable if one more component must
    commit at the node right now.
    """

    def __init__(self, model: TreeModel, psi: MultiReward, cap_states: int = DEFAULT_STATE_CAP):
        self.model = model
        self.psi = psi
        self.cap_states = cap_states
        self._residual: dict[tuple[FixedKey, str], float] = {}
        self._reward: dict[tuple[FixedKey, str], float] = {}

    def residual_value(self, fixed: FixedKey, node: str) -> float:
        """Value at ``node`` given the commitments in ``fixed``; remaining components free."""
        fixed = _canon(fixed, self.psi.d)
        if len(fixed) == self.psi.d:
            times = tuple(t for _, t in sorted(fixed))
            return self.psi.evaluate(self.model.path_to(node), times)
        key = (fixed, node)
        cached = self._residual.get(key)
        if cached is not None:
            return cached
        self._charge()
        kids = self.model.children(node)
        if not kids:
            out = self.new_reward(fixed, node)
        else:
            cont = 0.0
            for cid, p in kids:
                cont += p * self.residual_value(fixed, cid)
            out = max(self.new_reward(fixed, node), cont)
        self._residual[key] = out
        return out

    def new_reward(self, fixed: FixedKey, node: str) -> float:
        """Best value at ``node`` when one more component commits here, now."""
        fixed = _canon(fixed, self.psi.d)
        if len(fixed) >= self.psi.d:
            raise ValueError("all components are already committed")
        key = (fixed, node)
        cached = self._reward.get(key)
        if cached is not None:
            return cached
        self._charge()
        t = self.model.time(node)
        taken = {i for i, _ in fixed}
        best = None
        for i in range(self.psi.d):
            if i in taken:
                continue
            v = self.residual_value(_extend(fixed, i, t), node)
            if best is None or v > best:
                best = v
        assert best is not None
        self._reward[key] = best
        return best

    def state_count(self) -> int:
        return len(self._residual) + len(self._reward)

    def _charge(self) -> None:
        n = self.state_count()
        if n >= self.cap_states:
            raise CapExceededError(
                f"nested value table exceeded its budget of {self.cap_states} states",
                count=n,
            )


def _canon(fixed, d: int) -> FixedKey:
    out = tuple(sorted((int(i), int(t)) for i, t in fixed))
    seen = [i for i, _ in out]
    if len(set(seen)) != len(seen):
        raise ValueError(f"component committed twice in {out}")
    for i, t in out:
        if not 0 <= i < d:
            raise ValueError(f"component index {i} out of range for d={d}")
        if t < 0:
            raise ValueError(f"negative commit time {t}")
    return out


def _extend(fixed: FixedKey, i: int, t: int) -> FixedKey:
    return tuple(sorted(fixed + ((i, t),)))


def u_component(
    model: TreeModel,
    psi: MultiReward,
    fixed,
    i: int,
    node: str,
    nested: NestedValue | None = None,
) -> float:
    """Value at ``node`` when component ``i`` commits here and the rest stay optimal.

    ``fixed`` lists components already committed earlier on the path as
    ``(index, time)`` pairs (often empty).
    """
    if nested is None:
        nested = NestedValue(model, psi)
    fixed = _canon(fixed, psi.d)
    t = model.time(node)
    for j, tj in fixed:
        if j == i:
            raise ValueError(f"component {i} is already committed")
        if tj > t:
            raise ValueError(f"commitment of component {j} at time {tj} lies after node {node!r}")
    return nested.residual_value(_extend(fixed, i, t), node)


def new_reward(
    model: TreeModel,
    psi: MultiReward,
    node: str,
    fixed=(),
    nested: NestedValue | None = None,
) -> float:
    """Synthetic one-step reward: best u_component over the still-free indices."""
    if nested is None:
        nested = NestedValue(model, psi)
    return nested.new_reward(_canon(fixed, psi.d), node)


def assemble_optimal_tuple(
    nested: NestedValue, start: str, *, eps: float = EPS_EQ
) -> MultiStoppingTuple:
    """Unwind the nested recursion into d explicit stopping rules.

    On every path the walk commits a component at the first node where
    stopping matches the residual value, choosing the smallest attaining
    component index on ties, then continues with the residual problem. The
    earliest commitment nodes therefore reproduce the earliest optimal stop
    of the reduced problem.
    """
    model = nested.model
    d = nested.psi.d
    stop_sets: list[set[str]] = [set() for _ in range(d)]

    def commit(fixed: FixedKey, node: str) -> None:
        target = nested.new_reward(fixed, node)
        taken = {i for i, _ in fixed}
        t = model.time(node)
        chosen = None
        for i in range(d):
            if i in taken:
                continue
            if nested.residual_value(_extend(fixed, i, t), node) >= target - eps:
                chosen = i
                break
        if chosen is None:
            raise AssertionError(f"no component attains the committed value at {node!r}")
        stop_sets[chosen].add(node)
        extended = _extend(fixed, chosen, t)
        if len(extended) < d:
            walk(extended, node)

    def walk(fixed: FixedKey, node: str) -> None:
        if nested.residual_value(fixed, node) <= nested.new_reward(fixed, node) + eps:
            commit(fixed, node)
            return
        kids = model.children(node)
        if not kids:
            raise AssertionError(f"leaf {node!r} fails the stopping equality")
        for cid, _ in kids:
            walk(fixed, cid)

    walk((), start)
    return MultiStoppingTuple(
        tuple(StoppingTime(model, start, frozenset(s)) for s in stop_sets)
    )


@dataclass(frozen=True)
class SolveReport:
    """Everything :func:`solve_multi` knows about one solved instance."""

    model: TreeModel
    reward: MultiReward
    start: str
    d: int
    value: float
    snell: SnellSolution
    new_reward_process: NodeProcess
    stopping_tuple: MultiStoppingTuple
    nested: NestedValue
    diagnostics: dict[str, float] = field(default_factory=dict)
    instance_hash: str = ""
    oracle_delta: float | None = None


def solve_multi(
    model: TreeModel,
    psi: MultiReward,
    start: str,
    *,
    cap_states: int = DEFAULT_STATE_CAP,
    eps: float = EPS_EQ,
) -> SolveReport:
    """Solve the d-fold stopping problem exactly from ``start``.

    Returns the value, the reduced single-stopping solution it coincides
    with, and an explicit optimal tuple whose componentwise minimum is the
    earliest optimal stop of the reduced problem (postconditions checked).
    """
    if start not in model:
        raise ValueError(f"unknown start node {start!r}")
    nested = NestedValue(model, psi, cap_states=cap_states)
    value = nested.residual_value((), start)

    phi = NodeProcess(model, {nid: nested.new_reward((), nid) for nid in model.node_ids()})
    snell = snell_solve(phi)
    theta = minimal_optimal_stop(snell, start)
    tup = assemble_optimal_tuple(nested, start, eps=eps)

    attained = tuple_value(tup, psi)
    if abs(attained - value) > eps:
        raise AssertionError(
            f"assembled tuple attains {attained!r}, backward value is {value!r}"
        )
    for leaf in model.leaves_below(start):
        if min(tup.times_on_path(leaf)) != theta.stop_time_on_path(leaf):
            raise AssertionError(
                f"earliest component stop disagrees with the reduced rule on path to {leaf!r}"
            )

    slack = 0.0
    for nid in model.subtree_ids(start):
        if not model.is_leaf(nid):
            slack = max(slack, conditional_expectation(snell.value, nid) - snell.value[nid])
    diagnostics = {
        "reduction_residual": abs(value - snell.value[start]),
        "supermartingale_slack": slack,
    }
    return SolveReport(
        model=model,
        reward=psi,
        start=start,
        d=psi.d,
        value=value,
        snell=snell,
        new_reward_process=phi,
        stopping_tuple=tup,
        nested=nested,
        diagnostics=diagnostics,
        instance_hash=instance_fingerprint(model, psi, start),
    )


def tuple_order_below(a, b) -> bool:
    """Whether time vector ``a`` is below-or-equal ``b`` in the d-fold order.

    The order compares minima first; on equal minima some position must
    attain the minimum in both vectors and leave below-or-equal reduced
    vectors behind. For d = 1 it is the usual order on integers.
    """
    a = tuple(int(x) for x in a)
    b = tuple(int(x) for x in b)
    if len(a) != len(b):
        raise ValueError(f"cannot compare tuples of lengths {len(a)} and {len(b)}")
    return _below(a, b)


def _below(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    if len(a) == 1:
        return a[0] <= b[0]
    ma, mb = min(a), min(b)
    if ma != mb:
        return ma < mb
    for i, ai in enumerate(a):
        if ai == ma and b[i] == mb and _below(a[:i] + a[i + 1 :], b[:i] + b[i + 1 :]):
            return True
    return False


def tuple_order_compare(a, b) -> str:
    """Compare two stop-time vectors: 'equal', 'less', 'greater', or 'incomparable'."""
    ab = tuple_order_below(a, b)
    ba = tuple_order_below(b, a)
    if ab and ba:
        return "equal"
    if ab:
        return "less"
    if ba:
        return "greater"
    return "incomparable"


@dataclass(frozen=True)
class MinimalityReport:
    """Outcome of checking a candidate tuple against every enumerated optimum."""

    candidate_value: float
    oracle_value: float
    optimal_count: int
    candidate_optimal: bool
    below_all: bool
    violations: tuple[tuple[str, tuple[int, ...], tuple[int, ...]], ...] = ()

    @property
    def minimal(self) -> bool:
        return self.candidate_optimal and self.below_all


def verify_minimal_optimal(
    model: TreeModel,
    psi: MultiReward,
    start: str,
    candidate: MultiStoppingTuple,
    *,
    cap_tuples: int | None = None,
    time_budget: float = 60.0,
    eps: float = EPS_EQ,
) -> MinimalityReport:
    """Check by exhaustive enumeration that ``candidate`` is optimal and pathwise
    below-or-equal every optimal tuple. ``violations`` lists up to 20 offending
    (leaf, candidate times, other times) triples."""
    from .oracle import DEFAULT_TUPLE_CAP, brute_force_value

    report = brute_force_value(
        model,
        psi,
        start,
        cap_tuples=DEFAULT_TUPLE_CAP if cap_tuples is None else cap_tuples,
        time_budget=time_budget,
        eps=eps,
    )
    cand_val = tuple_value(candidate, psi)
    candidate_optimal = abs(cand_val - report.value) <= eps
    leaves = tuple(model.leaves_below(start))
    violations: list[tuple[str, tuple[int, ...], tuple[int, ...]]] = []
    for other in report.optimal_tuples:
        for leaf in leaves:
            mine = candidate.times_on_path(leaf)
            theirs = other.times_on_path(leaf)
            if not tuple_order_below(mine, theirs):
                violations.append((leaf, mine, theirs))
                if len(violations) >= 20:
                    break
        if len(violations) >= 20:
            break
    return MinimalityReport(
        candidate_value=cand_val,
        oracle_value=report.value,
        optimal_count=len(report.optimal_tuples),
        candidate_optimal=candidate_optimal,
        below_all=not violations,
        violations=tuple(violations),
    )
