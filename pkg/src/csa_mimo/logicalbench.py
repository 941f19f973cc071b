"""Collision-channel benchmarks on the slot/pilot resource graph.

Users and resources form a bipartite graph with one edge per transmitted
replica.  The benchmarks idealise the physical layer: a resource holding
exactly one replica always decodes, and cancellation removes a decoded
user's replicas outright.  No-SIC decoding reads degree-1 resources off
the original graph; with SIC, decoding peels the graph to its fixpoint.
"""

from __future__ import annotations

from typing import Hashable, Iterable, Mapping

from . import mac

User = Hashable
Resource = tuple[int, int]  # (slot, pilot)


class ResourceGraph:
    """Bipartite user/resource multigraph built from replica placements."""

    def __init__(self, edges: Mapping[User, Iterable[Resource]]):
        self.edges: dict[User, list[Resource]] = {
            u: [tuple(r) for r in rs] for u, rs in edges.items()
        }
        self.resource_users: dict[Resource, list[User]] = {}
        for u, rs in self.edges.items():
            for r in rs:
                self.resource_users.setdefault(r, []).append(u)

    @classmethod
    def from_allocation(cls, alloc: mac.FrameAllocation) -> "ResourceGraph":
        """Graph of the transmitted (non-suppressed) replicas."""
        edges: dict[User, list[Resource]] = {}
        for u in range(alloc.k_active):
            edges[u] = [
                (int(s), int(p))
                for s, p, sup in zip(alloc.slots[u], alloc.pilots[u], alloc.suppressed[u])
                if not sup
            ]
        return cls(edges)

    def resources(self) -> list[Resource]:
        return sorted(self.resource_users)


def decode_no_sic(g: ResourceGraph) -> set:
    """Users with at least one degree-1 resource in the original graph."""
    return {users[0] for users in g.resource_users.values() if len(users) == 1}


def peel_with_sic(g: ResourceGraph) -> tuple[list, list[list]]:
    """Iterative peeling to the fixpoint.

    Returns (decode order, waves).  Each wave collects, against a snapshot
    of current degrees, every user holding a degree-1 resource; the scan
    runs over resources in ascending (slot, pilot) order, which fixes the
    reported order deterministically.  The decoded SET is invariant under
    any processing order; only the reported order depends on this policy.
    """
    live: dict[Resource, list] = {r: list(us) for r, us in g.resource_users.items()}
    scan_order = sorted(live)
    decoded: set = set()
    order: list = []
    waves: list[list] = []
    while True:
        wave = []
        seen = set()
        for r in scan_order:
            users = live[r]
            if len(users) == 1:
                u = users[0]
                if u not in decoded and u not in seen:
                    wave.append(u)
                    seen.add(u)
        if not wave:
            break
        for u in wave:
            for r in g.edges[u]:
                live[r].remove(u)
            decoded.add(u)
            order.append(u)
        waves.append(wave)
    return order, waves
