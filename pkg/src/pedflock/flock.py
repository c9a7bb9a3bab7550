"""Per-bin flock clustering of confident pair edges, and validation against annotations."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Set, Tuple


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self._parent = {}
        self._size = {}
        for item in items:
            self.add(item)

    def add(self, item) -> None:
        if item not in self._parent:
            self._parent[item] = item
            self._size[item] = 1

    def __contains__(self, item) -> bool:
        return item in self._parent

    def find(self, item):
        root = item
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[item] != root:
            self._parent[item], item = root, self._parent[item]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        return ra

    def components(self) -> List[List]:
        groups: Dict = {}
        for item in self._parent:
            groups.setdefault(self.find(item), []).append(item)
        return list(groups.values())


@dataclass
class FlockAssignment:
    bin_index: int
    groups: List[Tuple[int, ...]] = field(default_factory=list)
    singles: Set[int] = field(default_factory=set)

    @property
    def members(self) -> Set[int]:
        return set(self.singles).union(*self.groups) if self.groups else set(self.singles)

    def flock_of(self) -> Dict[int, int]:
        """pid -> index into ``groups`` for every grouped pedestrian."""
        return {pid: k for k, g in enumerate(self.groups) for pid in g}

    def flock_id(self, k: int) -> str:
        return f"{self.bin_index}:{k}"


def cluster_edges(bin_members: Iterable[int], edges: Iterable[Tuple[int, int]], bin_index: int = 0) -> FlockAssignment:
    """Connected components of the edge graph; components of two or more are flocks.

    Flocks are sorted by their smallest pid and members ascend within a
    flock, so the result does not depend on edge order.
    """
    members = set(bin_members)
    uf = UnionFind(sorted(members))
    for a, b in edges:
        if a not in members or b not in members:
            raise KeyError(f"edge ({a}, {b}) references a pedestrian outside the bin")
        uf.union(a, b)
    groups = sorted(tuple(sorted(c)) for c in uf.components() if len(c) >= 2)
    singles = {c[0] for c in uf.components() if len(c) == 1}
    return FlockAssignment(bin_index, groups, singles)


def _prf(tp: int, fp: int, fn: int):
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision and recall:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0 if (precision is not None or recall is not None) else None
    return precision, recall, f1


def validate_assignment(assignments: Sequence[FlockAssignment] | FlockAssignment, annotation_pairs: set) -> dict:
    """Pairwise and agent-level agreement with annotated groups.

    Pairwise counts range over every unordered pair of pedestrians that
    share a bin; agent counts over the binary "belongs to some group"
    label, where an agent is annotated as grouped if one of its annotated
    partners is in the same bin. Undefined ratios are reported as 0.0 and
    listed under ``undefined``.
    """
    if isinstance(assignments, FlockAssignment):
        assignments = [assignments]
    ptp = pfp = pfn = 0
    atp = afp = afn = 0
    for asg in assignments:
        flock_of = asg.flock_of()
        members = sorted(asg.members)
        truly_grouped = set()
        for a, b in itertools.combinations(members, 2):
            predicted = a in flock_of and flock_of.get(b) == flock_of[a]
            actual = (a, b) in annotation_pairs
            if actual:
                truly_grouped.update((a, b))
            ptp += predicted and actual
            pfp += predicted and not actual
            pfn += actual and not predicted
        for pid in members:
            predicted = pid in flock_of
            actual = pid in truly_grouped
            atp += predicted and actual
            afp += predicted and not actual
            afn += actual and not predicted

    pp, pr, pf = _prf(ptp, pfp, pfn)
    ap, ar, _ = _prf(atp, afp, afn)
    values = {
        "pair_precision": pp, "pair_recall": pr, "pair_f1": pf,
        "agent_precision": ap, "agent_recall": ar,
    }
    undefined = sorted(k for k, v in values.items() if v is None)
    out = {k: (0.0 if v is None else v) for k, v in values.items()}
    out["undefined"] = undefined
    out["counts"] = {"pair_tp": ptp, "pair_fp": pfp, "pair_fn": pfn,
                     "agent_tp": atp, "agent_fp": afp, "agent_fn": afn}
    return out


@dataclass(frozen=True)
class FlockSummaryReport:
    total_agents: int
    flock_agents: int
    flock_percent: Optional[float]
    flocks: int
    runtime_s: float

    def to_json(self) -> dict:
        return {"schema": "pedflock-flocksummary/1", **self.__dict__}


def flock_summary(assignments: Sequence[FlockAssignment], runtime_s: float = 0.0) -> FlockSummaryReport:
    total = sum(len(a.members) for a in assignments)
    grouped = sum(len(g) for a in assignments for g in a.groups)
    return FlockSummaryReport(
        total_agents=total,
        flock_agents=grouped,
        flock_percent=100.0 * grouped / total if total else None,
        flocks=sum(len(a.groups) for a in assignments),
        runtime_s=runtime_s,
    )


def detect_flocks(bin_members: Dict[int, Iterable[int]], scores, tau: float = 0.9) -> List[FlockAssignment]:
    """Threshold scores and cluster each bin; bins come back in index order.

    ``bin_members`` maps bin index to the pedestrians eligible in that bin.
    """
    edges: Dict[int, List[Tuple[int, int]]] = {}
    for s in scores:
        if s.probability >= tau:
            edges.setdefault(s.bin_index, []).append((s.pid_a, s.pid_b))
    unknown = set(edges) - set(bin_members)
    if unknown:
        raise KeyError(f"scores reference unknown bins {sorted(unknown)}")
    return [cluster_edges(bin_members[b], edges.get(b, []), b) for b in sorted(bin_members)]
