"""Optimal full matching on logit propensity distance, and the SFM/JFM weights.

A full match partitions treated and control subjects into subclasses, each
with one treated and any number of controls or one control and any number of
treated, minimizing the total treated-control distance within subclasses. The
optimum is found by reduction to integer min-cost flow: supplies force every
treated and every control into the matched edge set, and the solved edge set
is decoded into star-shaped subclasses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ._mincostflow import MinCostFlow
from .datagen import TrialData
from .exceptions import ConfigError
from .propensity import PS_CLIP, WeightSet, propensity_scores

#: Distances are rounded to integer multiples of this resolution for the solver.
COST_RESOLUTION = 1e-6


@dataclass(frozen=True)
class MatchProblem:
    """Treated x control distance matrix; entries must be finite and >= 0."""

    distance: np.ndarray

    def validate(self) -> None:
        d = np.asarray(self.distance)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ConfigError("distance must be a nonempty 2-D matrix")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ConfigError("distances must be finite and nonnegative")

    @property
    def n_treated(self) -> int:
        return self.distance.shape[0]

    @property
    def n_control(self) -> int:
        return self.distance.shape[1]


@dataclass
class FullMatchResult:
    """Subclass labels per subject plus the achieved objective.

    ``objective_units`` is the exact integer objective at the solver's cost
    resolution; ``objective`` is the same sum of raw distances.
    """

    treated_subclass: np.ndarray
    control_subclass: np.ndarray
    n_subclasses: int
    objective: float
    objective_units: int
    pairs: list[tuple[int, int]]

    @property
    def treated_counts(self) -> np.ndarray:
        return np.bincount(self.treated_subclass, minlength=self.n_subclasses)

    @property
    def control_counts(self) -> np.ndarray:
        return np.bincount(self.control_subclass, minlength=self.n_subclasses)

    def validate_structure(self) -> None:
        tc, cc = self.treated_counts, self.control_counts
        if np.any(tc < 1) or np.any(cc < 1):
            raise ConfigError("every subclass needs at least one treated and one control")
        if np.any((tc > 1) & (cc > 1)):
            raise ConfigError("subclasses must be 1-treated-many-controls or the reverse")

    def to_csv(self, path, treated_ids, control_ids, control_weights=None) -> None:
        """Audit export: `id,subclass,role,weight`."""
        if control_weights is None:
            control_weights = subclass_weights(self)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "subclass", "role", "weight"])
            for i, s in enumerate(self.treated_subclass):
                writer.writerow([int(treated_ids[i]), int(s), "treated", repr(1.0)])
            for j, s in enumerate(self.control_subclass):
                writer.writerow([int(control_ids[j]), int(s), "control",
                                 repr(float(control_weights[j]))])


def _decode_stars(n_treated: int, n_control: int,
                  edges: list[tuple[int, int]], d_units: np.ndarray):
    """Drop redundant zero-cost edges until every component is a star.

    An edge is removable when both endpoints still have degree >= 2; at a
    min-cost solution such edges always carry zero cost. Among removable edges
    the one with the highest (control, treated) index goes first, so lower
    control indices keep their links (deterministic tie-breaking).
    """
    deg_t = np.zeros(n_treated, dtype=int)
    deg_c = np.zeros(n_control, dtype=int)
    for i, j in edges:
        deg_t[i] += 1
        deg_c[j] += 1
    kept = set(edges)
    while True:
        removable = [(j, i) for (i, j) in kept if deg_t[i] >= 2 and deg_c[j] >= 2]
        if not removable:
            break
        j, i = max(removable)
        if d_units[i, j] != 0:
            raise AssertionError("positive-cost redundant edge in optimal flow")
        kept.discard((i, j))
        deg_t[i] -= 1
        deg_c[j] -= 1
    return sorted(kept)


def optimal_full_match(problem: MatchProblem,
                       resolution: float = COST_RESOLUTION) -> FullMatchResult:
    """Globally optimal full match of the given distance matrix.

    Network layout: source -> treated (lower bound one control each, expressed
    through node supplies), treated -> control unit arcs carrying the distance
    cost, control -> sink, and a sink -> source return arc. Every treated and
    every control is forced into the matched edge set; the integral min-cost
    solution is then decoded into subclasses whose cost equals the flow cost.
    """
    problem.validate()
    d = np.asarray(problem.distance, dtype=float)
    nt, nc = d.shape
    d_units = np.rint(d / resolution).astype(np.int64)

    source, sink = 0, 1 + nt + nc
    net = MinCostFlow(n_nodes=nt + nc + 2)
    if nc > 1:
        net.add_arcs(source, 1 + np.arange(nt), nc - 1, 0)
    tt = np.repeat(np.arange(nt), nc)
    cc = np.tile(np.arange(nc), nt)
    net.add_arcs(1 + tt, 1 + nt + cc, 1, d_units[tt, cc])
    if nt > 1:
        net.add_arcs(1 + nt + np.arange(nc), sink, nt - 1, 0)
    net.add_arcs(sink, source, nt * nc + 1, 0)
    for i in range(nt):
        net.set_supply(1 + i, 1)
    for j in range(nc):
        net.set_supply(1 + nt + j, -1)
    net.set_supply(sink, nc)
    net.set_supply(source, -nt)

    flows = net.solve()
    offset = nt if nc > 1 else 0
    pair_flow = flows[offset:offset + nt * nc]
    edges = [(int(tt[k]), int(cc[k])) for k in np.flatnonzero(pair_flow)]
    flow_units = int(d_units[tt, cc][pair_flow > 0].sum())

    kept = _decode_stars(nt, nc, edges, d_units)
    objective_units = int(sum(d_units[i, j] for i, j in kept))
    if objective_units != flow_units:
        raise AssertionError("decoded objective does not match flow cost")

    # Components of the star forest, labeled in order of lowest treated index.
    treated_sub = np.full(nt, -1, dtype=int)
    control_sub = np.full(nc, -1, dtype=int)
    t_adj: dict[int, list[int]] = {}
    c_adj: dict[int, list[int]] = {}
    for i, j in kept:
        t_adj.setdefault(i, []).append(j)
        c_adj.setdefault(j, []).append(i)
    label = 0
    for i in range(nt):
        if treated_sub[i] != -1:
            continue
        stack = [("t", i)]
        while stack:
            side, v = stack.pop()
            if side == "t":
                if treated_sub[v] != -1:
                    continue
                treated_sub[v] = label
                stack.extend(("c", j) for j in t_adj.get(v, ()))
            else:
                if control_sub[v] != -1:
                    continue
                control_sub[v] = label
                stack.extend(("t", i2) for i2 in c_adj.get(v, ()))
        label += 1
    if np.any(treated_sub < 0) or np.any(control_sub < 0):
        raise AssertionError("some subject left unmatched by the flow solution")

    result = FullMatchResult(
        treated_subclass=treated_sub,
        control_subclass=control_sub,
        n_subclasses=label,
        objective=float(sum(d[i, j] for i, j in kept)),
        objective_units=objective_units,
        pairs=kept,
    )
    result.validate_structure()
    return result


def subclass_weights(match: FullMatchResult) -> np.ndarray:
    """Control weights: treated count over control count within each subclass.

    Treated subjects keep weight 1. Summing the returned weights over all
    controls gives the number of treated subjects.
    """
    tc = match.treated_counts
    cc = match.control_counts
    return tc[match.control_subclass] / cc[match.control_subclass]


def _logit(ps: np.ndarray) -> np.ndarray:
    ps = np.clip(ps, PS_CLIP, 1.0 - PS_CLIP)
    return np.log(ps / (1.0 - ps))


def _match_weights(data: TrialData, htd_arms: tuple[str, ...],
                   full_ps_model: bool) -> tuple[np.ndarray, np.ndarray, FullMatchResult]:
    """One PS fit and one full match of MT against the pooled given arms."""
    _, idx, ps = propensity_scores(data, htd_arms, full_ps_model)
    logit = _logit(ps)
    is_treated = data.source[idx] == "MT"
    t_rows = idx[is_treated]
    c_rows = idx[~is_treated]
    dist = np.abs(logit[is_treated][:, None] - logit[~is_treated][None, :])
    match = optimal_full_match(MatchProblem(distance=dist))
    weights = np.ones(data.n)
    weights[c_rows] = subclass_weights(match)
    ps_col = np.full(data.n, np.nan)
    ps_col[c_rows] = ps[~is_treated]
    return weights, ps_col, match


def separate_fm(data: TrialData, full_ps_model: bool = False) -> WeightSet:
    """SFM: match MT vs HC0 and MT vs HC1 independently; weights from each match."""
    weights = np.ones(data.n)
    ps_col = np.full(data.n, np.nan)
    for arm in ("HC0", "HC1"):
        w, p, _ = _match_weights(data, (arm,), full_ps_model)
        rows = data.arm_mask(arm)
        weights[rows] = w[rows]
        ps_col[rows] = p[rows]
    return WeightSet(method="SFM", ids=data.ids, source=data.source,
                     weights=weights, ps=ps_col, requires_q=False)


def joint_fm(data: TrialData, full_ps_model: bool = False) -> WeightSet:
    """JFM: one full match of MT against pooled HC0+HC1; Q required downstream."""
    weights, ps_col, _ = _match_weights(data, ("HC0", "HC1"), full_ps_model)
    return WeightSet(method="JFM", ids=data.ids, source=data.source,
                     weights=weights, ps=ps_col, requires_q=True)
