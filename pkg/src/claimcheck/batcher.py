"""Claim batch selection as a small integer program.

Each unverified claim either joins the next batch or waits.  Selecting a
claim pays its expected verification time, plus a once-per-section reading
cost shared with every other selected claim from the same section.  The
solver maximizes summed training utility under a time budget and batch
size bounds, exactly, with a branch-and-bound search.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union


class BatchError(ValueError):
    pass


@dataclass(frozen=True)
class BatchConfig:
    """Knobs for one batch selection round.

    ``budget_seconds`` left unset derives as b_u x median claim cost x 1.5
    once costs are known.
    """

    budget_seconds: Optional[float] = None
    min_claims: int = 100
    max_claims: int = 100
    utility_weight: float = 1.0
    section_seconds: float = 60.0

    def __post_init__(self) -> None:
        if not 0 <= self.min_claims <= self.max_claims:
            raise BatchError("need 0 <= min_claims <= max_claims")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise BatchError("budget must be positive when set")
        if self.utility_weight < 0:
            raise BatchError("utility weight must be nonnegative")
        if self.section_seconds < 0:
            raise BatchError("section reading cost must be nonnegative")


def batch_cost(batch: Sequence[str],
               costs: Mapping[str, float],
               section_costs: Mapping[str, float],
               sections: Mapping[str, str]) -> float:
    """Verification seconds plus each touched section's reading cost once."""
    total = 0.0
    touched = set()
    for claim_id in batch:
        if claim_id not in sections:
            raise BatchError(f"claim {claim_id!r} is not mapped to a section")
        total += costs[claim_id]
        touched.add(sections[claim_id])
    for section_id in touched:
        total += section_costs.get(section_id, 0.0)
    return total


@dataclass(frozen=True)
class IlpInstance:
    """One binary variable per claim and per touched section.

    Selecting claim i forces its section's variable on (linking), the claim
    count stays within [min_claims, max_claims] and the combined cost under
    ``budget``.  Claims are kept in lexicographic id order, which the
    solver's tie-break relies on.
    """

    claim_ids: tuple[str, ...]
    utilities: tuple[float, ...]
    costs: tuple[float, ...]
    section_ids: tuple[str, ...]
    section_costs: tuple[float, ...]
    section_of: tuple[int, ...]  # claim index -> section index
    min_claims: int
    max_claims: int
    budget: float

    @property
    def variable_count(self) -> int:
        return len(self.claim_ids) + len(self.section_ids)

    @property
    def linking_constraint_count(self) -> int:
        return len(self.claim_ids)

    @property
    def obviously_infeasible(self) -> bool:
        if self.min_claims == 0:
            return False
        if self.min_claims > len(self.claim_ids):
            return True
        cheapest = min(
            (self.costs[i] + self.section_costs[self.section_of[i]]
             for i in range(len(self.claim_ids))),
            default=float("inf"))
        return self.budget < cheapest and self.min_claims >= 1

    def claim_cost(self, batch: Sequence[str]) -> float:
        index = {c: i for i, c in enumerate(self.claim_ids)}
        total = 0.0
        touched = set()
        for claim_id in batch:
            i = index[claim_id]
            total += self.costs[i]
            touched.add(self.section_of[i])
        return total + sum(self.section_costs[j] for j in touched)

    def dump(self) -> str:
        lines = ["batch selection instance",
                 f"budget <= {self.budget}",
                 f"cardinality {self.min_claims} <= |B| <= {self.max_claims}",
                 "claims (id section utility cost):"]
        for i, claim_id in enumerate(self.claim_ids):
            lines.append(f"  {claim_id} {self.section_ids[self.section_of[i]]}"
                         f" {self.utilities[i]} {self.costs[i]}")
        lines.append("sections (id read_cost):")
        for j, section_id in enumerate(self.section_ids):
            lines.append(f"  {section_id} {self.section_costs[j]}")
        lines.append("linking: section var >= each of its claim vars")
        lines.append("objective: maximize sum of selected utilities")
        return "\n".join(lines)


def build_ilp(utilities: Mapping[str, float],
              costs: Mapping[str, float],
              sections: Mapping[str, str],
              section_costs: Union[Mapping[str, float], float],
              config: BatchConfig) -> IlpInstance:
    """Assemble the instance; derives the budget and relaxes min_claims when
    fewer claims than the configured lower bound remain."""
    claim_ids = tuple(sorted(utilities))
    for claim_id in claim_ids:
        if claim_id not in sections:
            raise BatchError(f"claim {claim_id!r} is not mapped to a section")
        if costs[claim_id] <= 0:
            raise BatchError(f"claim {claim_id!r} needs a positive cost")
    section_ids = tuple(sorted({sections[c] for c in claim_ids}))
    section_index = {s: j for j, s in enumerate(section_ids)}
    if isinstance(section_costs, Mapping):
        per_section = tuple(float(section_costs.get(s, 0.0))
                            for s in section_ids)
    else:
        per_section = tuple(float(section_costs) for _ in section_ids)
    budget = config.budget_seconds
    if budget is None:
        cost_values = [costs[c] for c in claim_ids]
        median = statistics.median(cost_values) if cost_values else 1.0
        budget = config.max_claims * median * 1.5
    return IlpInstance(
        claim_ids=claim_ids,
        utilities=tuple(float(utilities[c]) for c in claim_ids),
        costs=tuple(float(costs[c]) for c in claim_ids),
        section_ids=section_ids,
        section_costs=per_section,
        section_of=tuple(section_index[sections[c]] for c in claim_ids),
        min_claims=min(config.min_claims, len(claim_ids)),
        max_claims=config.max_claims,
        budget=float(budget),
    )


@dataclass(frozen=True)
class Solution:
    selected: tuple[str, ...]  # sorted claim ids
    objective: float
    cost: float
    feasible: bool
    exact: bool
    nodes: int

    def dump(self) -> str:
        status = "infeasible" if not self.feasible else (
            "optimal" if self.exact else "heuristic")
        return (f"solution [{status}] objective={self.objective}"
                f" cost={self.cost} nodes={self.nodes}\n"
                f"selected: {' '.join(self.selected) or '(none)'}")


class _Budget:
    __slots__ = ("nodes", "cap")

    def __init__(self, cap: int):
        self.nodes = 0
        self.cap = cap

    def spend(self) -> bool:
        self.nodes += 1
        return self.nodes <= self.cap


def solve(instance: IlpInstance, *, max_nodes: int = 500_000) -> Solution:
    """Exact optimum of summed utility; ties pick the lexicographically
    smallest selected id set."""
    return _branch_and_bound(instance, utility_weight=1.0, charge_cost=False,
                             max_nodes=max_nodes)


def solve_variant(instance: IlpInstance, utility_weight: float, *,
                  max_nodes: int = 500_000) -> Solution:
    """Minimize batch cost minus ``utility_weight`` x summed utility.

    Same constraint set as ``solve``; the reported objective is the
    minimized value.
    """
    if utility_weight < 0:
        raise BatchError("utility weight must be nonnegative")
    return _branch_and_bound(instance, utility_weight=utility_weight,
                             charge_cost=True, max_nodes=max_nodes)


def _branch_and_bound(instance: IlpInstance, utility_weight: float,
                      charge_cost: bool, max_nodes: int) -> Solution:
    n = len(instance.claim_ids)
    b_l, b_u = instance.min_claims, min(instance.max_claims, n)
    utilities = instance.utilities
    costs = instance.costs
    section_of = instance.section_of
    section_costs = instance.section_costs

    # per-suffix sorted views for the bounds
    gain = [utility_weight * utilities[i] - (costs[i] if charge_cost else 0.0)
            for i in range(n)]
    suffix_gains: list[list[float]] = [[] for _ in range(n + 1)]
    suffix_cheap: list[list[float]] = [[] for _ in range(n + 1)]
    suffix_density: list[list[tuple[float, float]]] = [[] for _ in range(n + 1)]
    for i in range(n, -1, -1):
        tail = list(range(i, n))
        suffix_gains[i] = sorted((gain[j] for j in tail), reverse=True)
        suffix_cheap[i] = sorted(costs[j] for j in tail)
        suffix_density[i] = sorted(
            ((utilities[j], costs[j]) for j in tail),
            key=lambda uc: -(uc[0] / uc[1]))

    def upper_bound(i: int, chosen: int, spent: float) -> float:
        room = b_u - chosen
        must = max(0, b_l - chosen)
        gains = suffix_gains[i]
        take = min(room, len(gains))
        best = -float("inf")
        running = 0.0
        for t in range(take + 1):
            if t > 0:
                running += gains[t - 1]
            if t >= must:
                best = max(best, running)
        if best == -float("inf"):
            return best
        if not charge_cost:
            # fractional knapsack on claim costs alone; no cardinality cap
            # here, the capped top-by-density prefix is not a valid bound
            # when the cheapest-dense items are not the most valuable ones
            capacity = instance.budget - spent
            frac = 0.0
            for u, v in suffix_density[i]:
                if capacity <= 0:
                    break
                if v <= capacity:
                    frac += u
                    capacity -= v
                else:
                    frac += u * capacity / v
                    break
            best = min(best, frac)
        return best

    budget = _Budget(max_nodes)
    best_score = -float("inf")
    best_ids: Optional[tuple[str, ...]] = None
    best_cost = 0.0
    aborted = False

    chosen_idx: list[int] = []
    open_sections: dict[int, int] = {}

    def recurse(i: int, score: float, spent: float) -> None:
        nonlocal best_score, best_ids, best_cost, aborted
        if aborted:
            return
        if not budget.spend():
            aborted = True
            return
        chosen = len(chosen_idx)
        if chosen + (n - i) < b_l:
            return
        if i == n:
            if chosen < b_l:
                return
            ids = tuple(instance.claim_ids[j] for j in chosen_idx)
            if score > best_score or (score == best_score
                                      and (best_ids is None or ids < best_ids)):
                best_score = score
                best_ids = ids
                best_cost = spent
            return
        bound = upper_bound(i, chosen, spent)
        if bound == -float("inf") or score + bound < best_score:
            return
        # include branch first: favors discovering good incumbents early
        if chosen < b_u:
            j = section_of[i]
            extra = costs[i] + (section_costs[j] if j not in open_sections else 0.0)
            if spent + extra <= instance.budget + 1e-9:
                chosen_idx.append(i)
                open_sections[j] = open_sections.get(j, 0) + 1
                delta = gain[i] - (section_costs[j]
                                   if charge_cost and open_sections[j] == 1
                                   else 0.0)
                recurse(i + 1, score + delta, spent + extra)
                open_sections[j] -= 1
                if open_sections[j] == 0:
                    del open_sections[j]
                chosen_idx.pop()
        recurse(i + 1, score, spent)

    recurse(0, 0.0, 0.0)

    if best_ids is None:
        return Solution((), 0.0, 0.0, feasible=False, exact=not aborted,
                        nodes=budget.nodes)
    objective = best_score if not charge_cost else -best_score
    return Solution(best_ids, objective, best_cost, feasible=True,
                    exact=not aborted, nodes=budget.nodes)


def solve_fast(instance: IlpInstance, *, max_nodes: int = 500_000) -> Solution:
    """Greedy shortcut for the common case, exact search otherwise.

    When the top claims by utility already fit the budget they are the
    optimum; tie-breaks can differ from ``solve`` only through zero-utility
    claims, which is why this is a separate entry point.
    """
    n = len(instance.claim_ids)
    order = sorted(range(n), key=lambda i: (-instance.utilities[i],
                                            instance.claim_ids[i]))
    take = order[:min(instance.max_claims, n)]
    if len(take) >= instance.min_claims:
        ids = tuple(sorted(instance.claim_ids[i] for i in take))
        cost = instance.claim_cost(ids)
        if cost <= instance.budget + 1e-9:
            objective = sum(instance.utilities[i] for i in take)
            return Solution(ids, objective, cost, feasible=True, exact=True,
                            nodes=0)
    return solve(instance, max_nodes=max_nodes)


def solve_greedy(instance: IlpInstance, *,
                 utility_weight: float = 1.0) -> Solution:
    """Marginal-gain greedy for instances too large for the exact search.

    Repeatedly adds the claim with the best margin, utility_weight x utility
    minus the verification cost minus the section's reading cost when that
    section is not open yet.  Stops at max_claims, or as soon as the best
    margin turns nonpositive with min_claims already met.  A claim that
    would break the budget is skipped unless the cardinality floor still
    needs it; the floor outranks the budget, like ``cheapest_fallback``.

    The reported objective follows ``solve_variant``: batch cost minus
    utility_weight x summed utility, lower is better.
    """
    if utility_weight < 0:
        raise BatchError("utility weight must be nonnegative")
    n = len(instance.claim_ids)
    remaining = set(range(n))
    opened: set[int] = set()
    chosen: list[int] = []
    cost = 0.0
    floor = min(instance.min_claims, n)
    while remaining and len(chosen) < instance.max_claims:
        best = None
        best_rank: Optional[tuple] = None
        best_extra = best_gain = 0.0
        for i in remaining:
            extra = instance.costs[i]
            if instance.section_of[i] not in opened:
                extra += instance.section_costs[instance.section_of[i]]
            over = cost + extra > instance.budget + 1e-9
            if over and len(chosen) >= floor:
                continue
            gain = utility_weight * instance.utilities[i] - extra
            rank = (over, -gain, extra, instance.claim_ids[i])
            if best_rank is None or rank < best_rank:
                best, best_rank = i, rank
                best_extra, best_gain = extra, gain
        if best is None:
            break
        if len(chosen) >= floor and best_gain <= 0.0:
            break
        chosen.append(best)
        remaining.discard(best)
        opened.add(instance.section_of[best])
        cost += best_extra
    ids = tuple(sorted(instance.claim_ids[i] for i in chosen))
    utility = sum(instance.utilities[i] for i in chosen)
    feasible = len(chosen) >= floor and cost <= instance.budget + 1e-9
    return Solution(ids, cost - utility_weight * utility, cost,
                    feasible=feasible, exact=False, nodes=0)


def cheapest_fallback(instance: IlpInstance) -> tuple[str, ...]:
    """Budget-blind escape hatch when the instance is infeasible: the
    min_claims cheapest claims by expected cost."""
    n = len(instance.claim_ids)
    order = sorted(range(n), key=lambda i: (instance.costs[i],
                                            instance.claim_ids[i]))
    take = order[:max(instance.min_claims, 1)][:n]
    return tuple(sorted(instance.claim_ids[i] for i in take))
