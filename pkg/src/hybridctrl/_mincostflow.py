"""Integer min-cost flow by successive shortest paths with node potentials.

Arcs are stored in forward/backward pairs (arc i's reverse is i ^ 1) with a
CSR adjacency over the paired arc list. Supplies are positive for sources and
negative for sinks; caps, costs, and supplies must be integral. The inner loop
is numba-compiled: at the problem sizes used by the joint full match (tens of
treated times hundreds of controls) a pure-Python solver is minutes per call.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


_INF = np.int64(2**62)


@njit(cache=True)
def _solve(n_nodes, arc_to, arc_cap, arc_cost, adj_head, adj_arcs, excess):
    pi = np.zeros(n_nodes, dtype=np.int64)
    dist = np.empty(n_nodes, dtype=np.int64)
    parent = np.empty(n_nodes, dtype=np.int64)
    done = np.empty(n_nodes, dtype=np.bool_)
    heap_cap = arc_to.shape[0] + n_nodes + 2
    heap_d = np.empty(heap_cap, dtype=np.int64)
    heap_v = np.empty(heap_cap, dtype=np.int64)

    while True:
        pending = False
        for v in range(n_nodes):
            if excess[v] > 0:
                pending = True
                break
        if not pending:
            return 0

        for v in range(n_nodes):
            dist[v] = _INF
            parent[v] = -1
            done[v] = False
        hsize = 0
        for v in range(n_nodes):
            if excess[v] > 0:
                dist[v] = 0
                heap_d[hsize] = 0
                heap_v[hsize] = v
                hsize += 1
                i = hsize - 1
                while i > 0:
                    par = (i - 1) // 2
                    if heap_d[par] <= heap_d[i]:
                        break
                    heap_d[par], heap_d[i] = heap_d[i], heap_d[par]
                    heap_v[par], heap_v[i] = heap_v[i], heap_v[par]
                    i = par

        target = np.int64(-1)
        while hsize > 0:
            d = heap_d[0]
            v = heap_v[0]
            hsize -= 1
            heap_d[0] = heap_d[hsize]
            heap_v[0] = heap_v[hsize]
            i = 0
            while True:
                left = 2 * i + 1
                if left >= hsize:
                    break
                small = left
                right = left + 1
                if right < hsize and heap_d[right] < heap_d[left]:
                    small = right
                if heap_d[i] <= heap_d[small]:
                    break
                heap_d[i], heap_d[small] = heap_d[small], heap_d[i]
                heap_v[i], heap_v[small] = heap_v[small], heap_v[i]
                i = small
            if done[v] or d > dist[v]:
                continue
            done[v] = True
            if excess[v] < 0:
                target = v
                break
            for k in range(adj_head[v], adj_head[v + 1]):
                ai = adj_arcs[k]
                if arc_cap[ai] <= 0:
                    continue
                w = arc_to[ai]
                nd = d + arc_cost[ai] + pi[v] - pi[w]
                if nd < dist[w]:
                    dist[w] = nd
                    parent[w] = ai
                    heap_d[hsize] = nd
                    heap_v[hsize] = w
                    hsize += 1
                    i = hsize - 1
                    while i > 0:
                        par = (i - 1) // 2
                        if heap_d[par] <= heap_d[i]:
                            break
                        heap_d[par], heap_d[i] = heap_d[i], heap_d[par]
                        heap_v[par], heap_v[i] = heap_v[i], heap_v[par]
                        i = par

        if target < 0:
            return -1

        dt = dist[target]
        for v in range(n_nodes):
            if dist[v] < dt:
                pi[v] += dist[v]
            else:
                pi[v] += dt

        bottleneck = _INF
        v = target
        while parent[v] != -1:
            ai = parent[v]
            if arc_cap[ai] < bottleneck:
                bottleneck = arc_cap[ai]
            v = arc_to[ai ^ 1]
        src = v
        if excess[src] < bottleneck:
            bottleneck = excess[src]
        if -excess[target] < bottleneck:
            bottleneck = -excess[target]

        v = target
        while parent[v] != -1:
            ai = parent[v]
            arc_cap[ai] -= bottleneck
            arc_cap[ai ^ 1] += bottleneck
            v = arc_to[ai ^ 1]
        excess[src] -= bottleneck
        excess[target] += bottleneck


class MinCostFlow:
    """Build a flow network with integral caps/costs and solve it."""

    def __init__(self, n_nodes: int):
        self.n_nodes = int(n_nodes)
        self._from: list[np.ndarray] = []
        self._to: list[np.ndarray] = []
        self._cap: list[np.ndarray] = []
        self._cost: list[np.ndarray] = []
        self.supply = np.zeros(self.n_nodes, dtype=np.int64)

    def add_arcs(self, tail, head, cap, cost) -> None:
        tail = np.atleast_1d(np.asarray(tail, dtype=np.int64))
        head = np.atleast_1d(np.asarray(head, dtype=np.int64))
        n = max(tail.shape[0], head.shape[0])
        self._from.append(np.broadcast_to(tail, (n,)).copy())
        self._to.append(np.broadcast_to(head, (n,)).copy())
        self._cap.append(np.broadcast_to(np.asarray(cap, dtype=np.int64), (n,)).copy())
        self._cost.append(np.broadcast_to(np.asarray(cost, dtype=np.int64), (n,)).copy())

    def set_supply(self, node: int, amount: int) -> None:
        self.supply[node] = amount

    def solve(self) -> np.ndarray:
        """Return per-logical-arc flows (in add order); raises on infeasible."""
        tail = np.concatenate(self._from)
        head = np.concatenate(self._to)
        cap = np.concatenate(self._cap)
        cost = np.concatenate(self._cost)
        m = tail.shape[0]
        arc_to = np.empty(2 * m, dtype=np.int64)
        arc_cap = np.empty(2 * m, dtype=np.int64)
        arc_cost = np.empty(2 * m, dtype=np.int64)
        arc_from = np.empty(2 * m, dtype=np.int64)
        arc_to[0::2] = head
        arc_to[1::2] = tail
        arc_cap[0::2] = cap
        arc_cap[1::2] = 0
        arc_cost[0::2] = cost
        arc_cost[1::2] = -cost
        arc_from[0::2] = tail
        arc_from[1::2] = head
        order = np.argsort(arc_from, kind="stable").astype(np.int64)
        adj_head = np.searchsorted(arc_from[order], np.arange(self.n_nodes + 1)).astype(np.int64)
        residual = arc_cap.copy()
        status = _solve(self.n_nodes, arc_to, residual, arc_cost, adj_head, order,
                        self.supply.copy())
        if status != 0:
            raise RuntimeError("min-cost flow is infeasible")
        return cap - residual[0::2]
