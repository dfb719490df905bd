"""Joint split-point and bit-width search.

Pipeline: filter feasible split prefixes, then for each one sweep a grid of
(weight budget, activation budget) pairs anchored at uniform-bit totals. Each
budget is solved with per-layer Lagrangian rate-distortion allocation; weight
solves depend only on (n, weight anchor) and activation solves on (n,
activation anchor), so they are cached and the total number of allocator runs
stays within |P|*|B|^2 + |B|. The solution list always starts with the
cloud-only sentinel, so selection under an accuracy threshold cannot fail.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .cost import (
    DeviceProfile,
    NetworkProfile,
    activation_memory_bits,
    boundary_cut,
    split_latency,
    transmission_latency,
    weight_memory_bits,
)
from .engine import evaluate_accuracy, float_accuracy
from .graph import LayerGraph, compute_working_sets
from .quantize import DistortionTable


@dataclass(frozen=True)
class BitAssignment:
    weight_bits: dict
    act_bits: dict

    def total_bits(self) -> int:
        return sum(self.weight_bits.values()) + sum(self.act_bits.values())

    def key(self, prefix_ids) -> tuple:
        return tuple((self.weight_bits[i], self.act_bits[i]) for i in prefix_ids)

    def histogram(self) -> tuple:
        def hist(d):
            out = {}
            for b in d.values():
                out[b] = out.get(b, 0) + 1
            return tuple(sorted(out.items()))

        return hist(self.weight_bits), hist(self.act_bits)


EMPTY_ASSIGNMENT = BitAssignment(weight_bits={}, act_bits={})


@dataclass
class SplitSolution:
    n: int
    assignment: BitAssignment
    breakdown: object
    total_distortion: float
    edge_weight_bytes: float
    edge_act_bytes: float
    accuracy_drop: float | None = None

    @property
    def is_sentinel(self) -> bool:
        return self.n == 0


@dataclass
class Allocation:
    feasible: bool
    bits: dict
    budget_used_bits: int = 0
    total_distortion: float = 0.0
    lam: float = 0.0
    reason: str = ""


# -- potential splits -----------------------------------------------------------


def potential_splits(g: LayerGraph, order, edge: DeviceProfile, net: NetworkProfile, M_bytes: int, B=None):
    """Split prefixes that beat raw-input transmission and fit memory at min bits."""
    B = tuple(B) if B else edge.supported_bits
    b_min = min(B)
    compute = [i for i in order if i != g.input_id]
    N = len(compute)

    cut0 = boundary_cut(g, order, 0)
    T0 = transmission_latency(g, cut0, {g.input_id: g.input_bits}, net)

    weights_prefix = 0
    peak_elems = 0
    working = compute_working_sets(g, order)
    out = []
    for n in range(1, N + 1):
        node = g.nodes[compute[n - 1]]
        weights_prefix += node.weight_elements()
        peak_elems = max(peak_elems, working[n - 1].total_elements)
        cut = boundary_cut(g, order, n)
        Tn = transmission_latency(g, cut, {c: b_min for c in cut.crossing_tensors}, net)
        if Tn > T0:
            continue
        if b_min * (weights_prefix + peak_elems) > M_bytes * 8:
            continue
        out.append(n)
    return out


# -- Lagrangian allocation ---------------------------------------------------------


def _choices_at(points, lam):
    """Per-layer argmin of d + lam*r; ties to smaller rate, then smaller bits."""
    out = {}
    for i, pts in points.items():
        best = None
        for b, d, r in pts:  # ascending b, hence ascending r
            cost = d + lam * r
            if best is None or cost < best[0]:
                best = (cost, b, r)
        out[i] = best[1]
    return out


def _lambda_max(points) -> float:
    top = 0.0
    for pts in points.values():
        for k in range(len(pts)):
            for j in range(k + 1, len(pts)):
                _, d1, r1 = pts[k]
                _, d2, r2 = pts[j]
                if r2 > r1 and d1 > d2:
                    top = max(top, (d1 - d2) / (r2 - r1))
    return top + 1.0


def _table_points(table: DistortionTable, layer_ids):
    return {
        i: [(b, table.d(i, b), table.r(i, b)) for b in table.bits]
        for i in layer_ids
    }


def allocate_bits_lagrangian(table: DistortionTable, layer_ids, budget_bits: int) -> Allocation:
    """Largest-rate convex-hull point with total rate within the budget.

    Bisection on the multiplier (64 iterations); returned bits satisfy the
    budget and each layer's choice minimizes d_i(b) + lam*r_i(b) at the final
    multiplier.
    """
    layer_ids = list(layer_ids)
    if not layer_ids:
        return Allocation(feasible=True, bits={}, budget_used_bits=0, total_distortion=0.0)
    points = _table_points(table, layer_ids)

    def rate_of(bits):
        return sum(table.r(i, bits[i]) for i in layer_ids)

    def dist_of(bits):
        return sum(table.d(i, bits[i]) for i in layer_ids)

    floor_bits = _choices_at(points, _lambda_max(points))
    if rate_of(floor_bits) > budget_bits:
        return Allocation(feasible=False, bits={}, reason="budget below minimum rate")

    top_bits = _choices_at(points, 0.0)
    if rate_of(top_bits) <= budget_bits:
        return Allocation(
            feasible=True,
            bits=top_bits,
            budget_used_bits=rate_of(top_bits),
            total_distortion=dist_of(top_bits),
            lam=0.0,
        )

    lo, hi = 0.0, _lambda_max(points)
    best = floor_bits
    best_lam = hi
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        cand = _choices_at(points, mid)
        if rate_of(cand) <= budget_bits:
            best, best_lam, hi = cand, mid, mid
        else:
            lo = mid
    return Allocation(
        feasible=True,
        bits=best,
        budget_used_bits=rate_of(best),
        total_distortion=dist_of(best),
        lam=best_lam,
    )


def repair_activation_assignment(table, g, order, n, bits, budget_bits):
    """Lower bits until every step's bit-weighted working set fits the budget.

    At the first violating step, the live tensor with the largest current rate
    (ties to smaller id) that can still go lower is dropped one width. Returns
    the repaired bits dict or None when stuck.
    """
    bits = dict(bits)
    working = compute_working_sets(g, order)[:n]
    ladder = {b: i for i, b in enumerate(table.bits)}
    while True:
        violating = None
        for ws in working:
            step_bits = sum(
                e * (g.input_bits if nid == g.input_id else bits[nid]) for nid, e in ws.live_tensors
            )
            if step_bits > budget_bits:
                violating = ws
                break
        if violating is None:
            return bits
        candidates = [
            (nid, e)
            for nid, e in violating.live_tensors
            if nid != g.input_id and ladder[bits[nid]] > 0
        ]
        if not candidates:
            return None
        victim = max(candidates, key=lambda t: (t[1] * bits[t[0]], -t[0]))[0]
        bits[victim] = table.bits[ladder[bits[victim]] - 1]


def allocate_activation_bits(
    table: DistortionTable, g: LayerGraph, order, n: int, budget_bytes=None, budget_bits=None
) -> Allocation:
    """Per-layer Lagrangian choices with feasibility measured on the true
    constraint: the peak bit-weighted working set of the edge prefix."""
    if budget_bits is None:
        budget_bits = int(round(budget_bytes * 8))
    compute = [i for i in order if i != g.input_id]
    layer_ids = compute[:n]
    if not layer_ids:
        return Allocation(feasible=True, bits={}, budget_used_bits=0)
    points = _table_points(table, layer_ids)

    def peak_of(bits):
        return activation_memory_bits(g, order, n, bits)

    def dist_of(bits):
        return sum(table.d(i, bits[i]) for i in layer_ids)

    floor_bits = _choices_at(points, _lambda_max(points))
    if peak_of(floor_bits) > budget_bits:
        return Allocation(feasible=False, bits={}, reason="infeasible even at minimum bits")

    top_bits = _choices_at(points, 0.0)
    if peak_of(top_bits) <= budget_bits:
        chosen, lam = top_bits, 0.0
    else:
        lo, hi = 0.0, _lambda_max(points)
        chosen, lam = floor_bits, hi
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            cand = _choices_at(points, mid)
            if peak_of(cand) <= budget_bits:
                chosen, lam, hi = cand, mid, mid
            else:
                lo = mid

    repaired = repair_activation_assignment(table, g, order, n, chosen, budget_bits)
    if repaired is None:
        return Allocation(feasible=False, bits={}, reason="repair could not fit budget")
    return Allocation(
        feasible=True,
        bits=repaired,
        budget_used_bits=peak_of(repaired),
        total_distortion=dist_of(repaired),
        lam=lam,
    )


# -- enumeration -------------------------------------------------------------------


@dataclass
class SearchStats:
    potential: list
    solve_count: int
    solve_bound: int
    pairs_tried: int
    pairs_kept: int


def enumerate_solutions(
    g: LayerGraph,
    order,
    wtable: DistortionTable,
    atable: DistortionTable,
    edge: DeviceProfile,
    cloud: DeviceProfile,
    net: NetworkProfile,
    M_bytes: int,
    B=None,
    edge_pays_output: bool = True,
    distortion_cap: float | None = None,
):
    """All feasible (split, bit assignment) candidates plus the sentinel.

    Returns (solutions, stats). Every emitted solution satisfies the memory
    constraint re-checked exactly; the sentinel is always first.
    """
    B = tuple(B) if B else edge.supported_bits
    compute = [i for i in order if i != g.input_id]

    sentinel = SplitSolution(
        n=0,
        assignment=EMPTY_ASSIGNMENT,
        breakdown=split_latency(g, order, 0, EMPTY_ASSIGNMENT, edge, cloud, net, edge_pays_output),
        total_distortion=0.0,
        edge_weight_bytes=0.0,
        edge_act_bytes=0.0,
        accuracy_drop=0.0,
    )
    S = [sentinel]

    P = potential_splits(g, order, edge, net, M_bytes, B)
    stats = SearchStats(
        potential=P,
        solve_count=0,
        solve_bound=len(P) * len(B) ** 2 + len(B),
        pairs_tried=0,
        pairs_kept=0,
    )

    working = compute_working_sets(g, order)
    seen = set()
    for n in P:
        prefix = compute[:n]
        w_total = sum(g.nodes[i].weight_elements() for i in prefix)
        peak_elems = max(ws.total_elements for ws in working[:n])
        w_anchors = [w_total * b for b in B]
        a_anchors = [peak_elems * b for b in B]
        w_cache: dict[int, Allocation] = {}
        a_cache: dict[int, Allocation] = {}
        for kw, Wk in enumerate(w_anchors):
            for ka, Ak in enumerate(a_anchors):
                if Wk + Ak > M_bytes * 8:
                    continue
                stats.pairs_tried += 1
                if kw not in w_cache:
                    w_cache[kw] = allocate_bits_lagrangian(wtable, prefix, Wk)
                    stats.solve_count += 1
                walloc = w_cache[kw]
                if ka not in a_cache:
                    a_cache[ka] = allocate_activation_bits(atable, g, order, n, budget_bits=Ak)
                    stats.solve_count += 1
                aalloc = a_cache[ka]
                if not (walloc.feasible and aalloc.feasible):
                    continue
                mw = weight_memory_bits(g, order, n, walloc.bits)
                ma = activation_memory_bits(g, order, n, aalloc.bits)
                if mw + ma > M_bytes * 8:
                    continue
                assignment = BitAssignment(weight_bits=dict(walloc.bits), act_bits=dict(aalloc.bits))
                key = (n, assignment.key(prefix))
                if key in seen:
                    continue
                seen.add(key)
                distortion = walloc.total_distortion + aalloc.total_distortion
                if distortion_cap is not None and distortion > distortion_cap:
                    continue
                S.append(
                    SplitSolution(
                        n=n,
                        assignment=assignment,
                        breakdown=split_latency(g, order, n, assignment, edge, cloud, net, edge_pays_output),
                        total_distortion=distortion,
                        edge_weight_bytes=mw / 8.0,
                        edge_act_bytes=ma / 8.0,
                    )
                )
                stats.pairs_kept += 1
    if len(B) >= 2:
        assert stats.solve_count <= stats.solve_bound, "allocator call budget exceeded"
    return S, stats


# -- selection ---------------------------------------------------------------------


def solution_sort_key(sol: SplitSolution, compute_ids):
    return (
        sol.breakdown.total_s,
        sol.n,
        sol.assignment.total_bits(),
        sol.assignment.key(compute_ids[: sol.n]),
    )


def measure_drop(g, order, eval_set, sol: SplitSolution, base_acc: float, cache: dict):
    if sol.is_sentinel:
        return 0.0
    compute = [i for i in order if i != g.input_id]
    key = (sol.n, sol.assignment.key(compute[: sol.n]))
    if key not in cache:
        acc = evaluate_accuracy(g, eval_set, sol.n, sol.assignment, order=order)
        cache[key] = base_acc - acc
    return cache[key]


def select_solution(
    S, g, order, eval_set, A_percent: float, drop_cache: dict | None = None, base_acc: float | None = None
) -> SplitSolution:
    """First solution in predicted-latency order whose measured accuracy drop
    stays within A. The sentinel's drop is 0 by definition, so this returns."""
    if not any(s.is_sentinel for s in S):
        raise ValueError("solution list is missing the cloud-only sentinel")
    compute = [i for i in order if i != g.input_id]
    cache = drop_cache if drop_cache is not None else {}
    if base_acc is None:
        base_acc = float_accuracy(g, eval_set, order=order)
    threshold = A_percent / 100.0 + 1e-9
    for sol in sorted(S, key=lambda s: solution_sort_key(s, compute)):
        drop = measure_drop(g, order, eval_set, sol, base_acc, cache)
        if drop <= threshold:
            return replace(sol, accuracy_drop=drop)
    raise AssertionError("unreachable: sentinel always qualifies")


def measure_all(S, g, order, eval_set, drop_cache: dict | None = None):
    """Accuracy drops for every solution (used for trade-off reports)."""
    cache = drop_cache if drop_cache is not None else {}
    base_acc = float_accuracy(g, eval_set, order=order)
    return [
        replace(sol, accuracy_drop=measure_drop(g, order, eval_set, sol, base_acc, cache))
        for sol in S
    ]


def float_baseline(g, order, edge, cloud, net, edge_pays_output=True):
    """Best all-16-bit split by predicted latency (no quantization)."""
    compute = [i for i in order if i != g.input_id]
    best = None
    for n in range(0, len(compute) + 1):
        assignment = BitAssignment(
            weight_bits={i: 16 for i in compute[:n]},
            act_bits={i: 16 for i in compute[:n]},
        )
        br = split_latency(g, order, n, assignment, edge, cloud, net, edge_pays_output)
        key = (br.total_s, n)
        if best is None or key < best[0]:
            best = (key, n, br)
    return best[1], best[2]
