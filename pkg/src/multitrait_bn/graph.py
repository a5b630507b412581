"""Typed DAGs over SNP and trait nodes.

Arcs must respect the prognostic ordering: SNPs may point to SNPs or
traits, traits may point only to traits in the same or a later tier, and
nothing may point from a trait to a SNP.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from .errors import CycleError, GraphError, TierViolationError

SNP = "snp"
TRAIT = "trait"


@dataclass(frozen=True, order=True)
class Node:
    id: str
    kind: str = TRAIT
    tier: int = 0

    def __post_init__(self):
        if self.kind not in (SNP, TRAIT):
            raise GraphError(f"unknown node kind {self.kind!r}")
        if self.kind == SNP:
            object.__setattr__(self, "tier", -1)
        elif self.tier < 0:
            raise GraphError(f"trait {self.id!r} has negative tier {self.tier}")

    @property
    def is_snp(self) -> bool:
        return self.kind == SNP


def arc_violation(parent: Node, child: Node) -> str | None:
    """Return why ``parent -> child`` breaks the tier rules, or None."""
    if parent.id == child.id:
        return f"self-loop on {parent.id!r}"
    if child.kind == SNP and parent.kind == TRAIT:
        return f"trait {parent.id!r} cannot be a parent of SNP {child.id!r}"
    if parent.kind == TRAIT and child.kind == TRAIT and parent.tier > child.tier:
        return (
            f"trait {parent.id!r} (tier {parent.tier}) cannot be a parent of "
            f"trait {child.id!r} (tier {child.tier})"
        )
    return None


def arc_allowed(parent: Node, child: Node) -> bool:
    return arc_violation(parent, child) is None


@dataclass(frozen=True)
class Dag:
    """Immutable DAG; the mutating-style methods return new graphs."""

    nodes: tuple[Node, ...]
    arcs: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", frozenset((str(a), str(b)) for a, b in self.arcs))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node ids")
        lookup = self.node_map
        for a, b in self.arcs:
            if a not in lookup or b not in lookup:
                raise GraphError(f"arc {a}->{b} references an unknown node")
            why = arc_violation(lookup[a], lookup[b])
            if why:
                raise TierViolationError(why)
        cycle = self._find_cycle()
        if cycle:
            raise CycleError(cycle)

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    @cached_property
    def _parents(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {i: set() for i in self.ids}
        for a, b in self.arcs:
            out[b].add(a)
        return {k: frozenset(v) for k, v in out.items()}

    @cached_property
    def _children(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {i: set() for i in self.ids}
        for a, b in self.arcs:
            out[a].add(b)
        return {k: frozenset(v) for k, v in out.items()}

    def node(self, node_id: str) -> Node:
        try:
            return self.node_map[node_id]
        except KeyError:
            raise GraphError(f"unknown node {node_id!r}") from None

    def parents(self, node_id: str) -> frozenset[str]:
        self.node(node_id)
        return self._parents[node_id]

    def children(self, node_id: str) -> frozenset[str]:
        self.node(node_id)
        return self._children[node_id]

    @property
    def snps(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.kind == SNP)

    @property
    def traits(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes if n.kind == TRAIT)

    def _find_cycle(self) -> list[str] | None:
        color = dict.fromkeys(self.ids, 0)
        children = self._children
        for start in sorted(self.ids):
            if color[start]:
                continue
            stack = [(start, iter(sorted(children[start])))]
            path = [start]
            color[start] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    color[node] = 2
                    stack.pop()
                    path.pop()
                elif color[nxt] == 1:
                    return path[path.index(nxt):] + [nxt]
                elif color[nxt] == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(sorted(children[nxt]))))
        return None

    def find_path(self, src: str, dst: str) -> list[str] | None:
        """Directed path from ``src`` to ``dst`` (BFS, shortest), or None."""
        prev = {src: None}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            if u == dst:
                path = []
                while u is not None:
                    path.append(u)
                    u = prev[u]
                return path[::-1]
            for v in sorted(self._children[u]):
                if v not in prev:
                    prev[v] = u
                    queue.append(v)
        return None

    def add_arc(self, parent: str, child: str) -> "Dag":
        p, c = self.node(parent), self.node(child)
        if (parent, child) in self.arcs:
            raise GraphError(f"arc {parent}->{child} already present")
        why = arc_violation(p, c)
        if why:
            raise TierViolationError(why)
        path = self.find_path(child, parent)
        if path is not None:
            raise CycleError(path)
        return Dag(self.nodes, self.arcs | {(parent, child)})

    def remove_arc(self, parent: str, child: str) -> "Dag":
        if (parent, child) not in self.arcs:
            raise GraphError(f"arc {parent}->{child} not present")
        return Dag(self.nodes, self.arcs - {(parent, child)})

    def with_nodes(self, nodes: Iterable[Node]) -> "Dag":
        """Same arcs over a different node list (must contain every arc endpoint)."""
        return Dag(tuple(nodes), self.arcs)

    def subgraph(self, keep: Iterable[str]) -> "Dag":
        keep = set(keep)
        return Dag(
            tuple(n for n in self.nodes if n.id in keep),
            frozenset((a, b) for a, b in self.arcs if a in keep and b in keep),
        )

    def markov_blanket(self, target: str) -> frozenset[str]:
        """Parents, children and the children's other parents."""
        mb = set(self.parents(target)) | set(self.children(target))
        for c in self._children[target]:
            mb |= self._parents[c]
        mb.discard(target)
        return frozenset(mb)

    def ancestors(self, targets: Iterable[str]) -> set[str]:
        out: set[str] = set()
        stack = list(targets)
        while stack:
            u = stack.pop()
            if u in out:
                continue
            out.add(u)
            stack.extend(self._parents[u])
        return out

    def d_separated(self, x: str, y: str, z: Iterable[str] = ()) -> bool:
        """Reachability ("Bayes ball") test of x _||_ y | z."""
        z = set(z)
        self.node(x), self.node(y)
        if x == y or x in z or y in z:
            raise GraphError("x and y must be distinct and outside the conditioning set")
        anc_z = self.ancestors(z)
        # states: (node, True) reached from a child going up, (node, False) from a parent going down
        visited: set[tuple[str, bool]] = set()
        queue = deque([(x, True)])
        while queue:
            node, up = queue.popleft()
            if (node, up) in visited:
                continue
            visited.add((node, up))
            if node == y:
                return False
            if up:
                if node not in z:
                    queue.extend((p, True) for p in self._parents[node])
                    queue.extend((c, False) for c in self._children[node])
            else:
                if node not in z:
                    queue.extend((c, False) for c in self._children[node])
                if node in anc_z:
                    queue.extend((p, True) for p in self._parents[node])
        return True

    def topological_order(self) -> list[str]:
        """Kahn's algorithm, smallest id first among ready nodes."""
        indeg = {i: len(self._parents[i]) for i in self.ids}
        ready = [i for i, k in indeg.items() if k == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            u = heapq.heappop(ready)
            order.append(u)
            for v in self._children[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(ready, v)
        if len(order) != len(self.ids):
            raise CycleError(self._find_cycle() or [])
        return order

    def isolated(self) -> list[str]:
        return [i for i in self.ids if not self._parents[i] and not self._children[i]]

    def __repr__(self) -> str:
        parts = []
        for node in self.topological_order():
            ps = sorted(self._parents[node])
            parts.append(f"[{node}|{','.join(ps)}]" if ps else f"[{node}]")
        return "Dag(" + "".join(parts) + ")"
