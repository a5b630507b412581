"""Arc strengths across an ensemble of networks and the averaged network."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, CycleError, GraphError, TierViolationError
from .graph import Dag, Node


@dataclass(frozen=True)
class ArcStrengthTable:
    """Directed arc frequencies; arcs never observed are absent (strength 0)."""

    arcs: Mapping[tuple[str, str], float]
    network_count: int
    nodes: tuple[Node, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "arcs", dict(sorted(self.arcs.items())))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        for arc, f in self.arcs.items():
            if not 0.0 <= f <= 1.0:
                raise ConfigError(f"strength of {arc} outside [0, 1]: {f}")

    def strength(self, parent: str, child: str) -> float:
        return self.arcs.get((parent, child), 0.0)

    def write_csv(self, path, precision: int | None = None) -> None:
        fmt = repr if precision is None else (lambda v: f"{v:.{precision}g}")
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parent", "child", "frequency"])
            for (a, b), f in self.arcs.items():
                w.writerow([a, b, fmt(f)])


def arc_strengths(networks: Sequence[Dag]) -> ArcStrengthTable:
    """Fraction of networks containing each directed arc."""
    networks = list(networks)
    if not networks:
        raise ConfigError("need at least one network")
    universe = {n.id: n for n in networks[0].nodes}
    for k, d in enumerate(networks[1:], start=1):
        if {n.id: n for n in d.nodes} != universe:
            raise GraphError(f"network {k} has a different node set from network 0")
    counts = Counter(arc for d in networks for arc in d.arcs)
    m = len(networks)
    return ArcStrengthTable({a: c / m for a, c in counts.items()}, m, networks[0].nodes)


def threshold_l1(strengths: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Candidate cut-offs and their L1 distances.

    For a candidate t taken from the observed strengths, the ideal CDF puts
    the fraction p_t of strengths below t at 0 and the rest at 1, i.e. it
    equals p_t on [0, 1).  The distance is the integral over [0, 1] of
    |F(x) - p_t| with F the empirical CDF of the strengths.
    """
    s = np.sort(np.asarray(strengths, dtype=float))
    m = s.size
    u = np.unique(s)
    # F on [u_k, u_{k+1}) and interval lengths, plus [0, u_1) where F = 0
    cum = np.searchsorted(s, u, side="right") / m
    edges = np.append(u, 1.0)
    lengths = np.diff(edges)
    levels = cum
    p = np.searchsorted(s, u, side="left") / m
    dist = u[0] * p + (np.abs(levels[None, :] - p[:, None]) * lengths[None, :]).sum(axis=1)
    return u, dist


def estimate_threshold(t: ArcStrengthTable | Iterable[float]) -> float:
    """Data-driven inclusion threshold (L1 fit of a two-point CDF).

    Returns the cut-off such that arcs with strength strictly greater than
    it form the retained cluster: the largest strength in the excluded
    group, or 0.0 when nothing is excluded.  Ties in distance go to the
    smaller candidate.
    """
    strengths = list(t.arcs.values()) if isinstance(t, ArcStrengthTable) else list(t)
    if not strengths:
        raise ConfigError("cannot estimate a threshold from an empty table")
    u, dist = threshold_l1(strengths)
    # distances equal up to rounding count as ties
    k = int(np.flatnonzero(dist <= dist.min() + 1e-12)[0])
    return float(u[k - 1]) if k > 0 else 0.0


def averaged_network(t: ArcStrengthTable, threshold: float, nodes: Iterable[Node] | None = None) -> Dag:
    """Arcs stronger than ``threshold``, added strongest first.

    Arcs that would break acyclicity or the tier rules are skipped.  SNPs
    left without any arc are removed; traits are always kept.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"threshold must lie in [0, 1], got {threshold}")
    nodes = tuple(nodes) if nodes is not None else t.nodes
    if not nodes:
        ids = sorted({x for arc in t.arcs for x in arc})
        raise ConfigError(f"node list required (tiers unknown for {ids[:5]}...)")
    dag = Dag(nodes)
    for (a, b), f in sorted(t.arcs.items(), key=lambda kv: (-kv[1], kv[0])):
        if f <= threshold:
            break
        try:
            dag = dag.add_arc(a, b)
        except (CycleError, TierViolationError):
            continue
    isolated = {i for i in dag.isolated() if dag.node(i).is_snp}
    return dag.subgraph(set(dag.ids) - isolated)
