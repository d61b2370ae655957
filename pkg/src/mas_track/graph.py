"""Communication topology of a leader-follower network.

A topology is an undirected, weighted graph over followers 1..N plus a set of
weighted leader links.  From it we build the Laplacian L, the diagonal
leader-link matrix B, and the coupling matrix H = L + B whose smallest
eigenvalue governs every tracking bound: H is positive definite exactly when
every follower has a communication path to the leader.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import symmetric_eigenvalues


class TopologyError(ValueError):
    """A topology description violates a structural constraint."""


@dataclass(frozen=True)
class Topology:
    """Follower graph plus leader links.  Follower ids are 1-based.

    ``follower_edges`` holds unordered weighted pairs (i, j, weight);
    ``leader_links`` maps follower id -> link weight (absent means no link).
    Validation is eager: constructing an invalid topology raises
    :class:`TopologyError` naming the offending entry.
    """

    n_followers: int
    follower_edges: tuple = ()
    leader_links: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.n_followers
        if not isinstance(n, int) or n < 1:
            raise TopologyError(f"n_followers: must be a positive integer, got {n!r}")
        edges = tuple(tuple(e) for e in self.follower_edges)
        object.__setattr__(self, "follower_edges", edges)
        seen = set()
        for idx, edge in enumerate(edges):
            if len(edge) != 3:
                raise TopologyError(f"follower_edges[{idx}]: expected (i, j, weight), got {edge!r}")
            i, j, w = edge
            for agent in (i, j):
                if not isinstance(agent, int) or not 1 <= agent <= n:
                    raise TopologyError(
                        f"follower_edges[{idx}]: follower id {agent!r} out of range 1..{n}"
                    )
            if i == j:
                raise TopologyError(f"follower_edges[{idx}]: self-edge on follower {i}")
            if not (isinstance(w, (int, float)) and np.isfinite(w) and w > 0):
                raise TopologyError(
                    f"follower_edges[{idx}]: weight must be finite and > 0, got {w!r}"
                )
            pair = (min(i, j), max(i, j))
            if pair in seen:
                raise TopologyError(f"follower_edges[{idx}]: duplicate edge {pair}")
            seen.add(pair)
        links = dict(self.leader_links)
        object.__setattr__(self, "leader_links", links)
        for agent, w in links.items():
            if not isinstance(agent, int) or not 1 <= agent <= n:
                raise TopologyError(f"leader_links[{agent!r}]: follower id out of range 1..{n}")
            if not (isinstance(w, (int, float)) and np.isfinite(w) and w > 0):
                raise TopologyError(
                    f"leader_links[{agent}]: weight must be finite and > 0, got {w!r}"
                )

    def adjacency(self) -> np.ndarray:
        """Symmetric follower adjacency matrix (0-indexed)."""
        a = np.zeros((self.n_followers, self.n_followers))
        for i, j, w in self.follower_edges:
            a[i - 1, j - 1] = w
            a[j - 1, i - 1] = w
        return a

    def leader_weights(self) -> np.ndarray:
        """Leader link weights b_i as a vector (0 where unlinked)."""
        b = np.zeros(self.n_followers)
        for agent, w in self.leader_links.items():
            b[agent - 1] = w
        return b


def is_connected(topo: Topology) -> bool:
    """True iff the follower graph is connected (breadth-first reachability)."""
    n = topo.n_followers
    neighbors = [[] for _ in range(n)]
    for i, j, _ in topo.follower_edges:
        neighbors[i - 1].append(j - 1)
        neighbors[j - 1].append(i - 1)
    seen = [False] * n
    queue = deque([0])
    seen[0] = True
    while queue:
        u = queue.popleft()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


def is_leader_reachable(topo: Topology) -> bool:
    """True iff every follower has a path to the leader vertex.

    Since follower edges are undirected and a leader link gives its follower a
    direct path to the leader, this holds exactly when a breadth-first search
    seeded at the linked followers covers the whole follower set.
    """
    n = topo.n_followers
    if not topo.leader_links:
        return False
    neighbors = [[] for _ in range(n)]
    for i, j, _ in topo.follower_edges:
        neighbors[i - 1].append(j - 1)
        neighbors[j - 1].append(i - 1)
    seen = [False] * n
    queue = deque()
    for agent in topo.leader_links:
        seen[agent - 1] = True
        queue.append(agent - 1)
    while queue:
        u = queue.popleft()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


@dataclass(frozen=True)
class GraphMatrices:
    """Immutable matrices of a validated topology.

    L has zero row sums by construction, B is diagonal, H = L + B is
    symmetric; ``lambda_min_h > 0`` iff the leader is globally reachable.
    Instances are safe to share across concurrent runs.
    """

    laplacian: np.ndarray
    leader_diag: np.ndarray
    coupling: np.ndarray
    lambda_min_h: float
    lambda_max_h: float

    def __post_init__(self):
        for m in (self.laplacian, self.leader_diag, self.coupling):
            m.setflags(write=False)

    @property
    def n(self) -> int:
        return self.coupling.shape[0]

    @cached_property
    def b(self) -> np.ndarray:
        """Leader link weights (diagonal of B)."""
        out = np.diag(self.leader_diag).copy()
        out.setflags(write=False)
        return out

    @cached_property
    def leader_idx(self) -> np.ndarray:
        """Indices (0-based) of followers directly linked to the leader."""
        out = np.flatnonzero(self.b > 0)
        out.setflags(write=False)
        return out


def build_matrices(topo: Topology, eig_tol: float = 1e-12) -> GraphMatrices:
    """Assemble L, B, H for a topology and compute the extreme eigenvalues of
    the symmetric H by cyclic Jacobi."""
    a = topo.adjacency()
    degree = a.sum(axis=1)
    laplacian = np.diag(degree) - a
    b = topo.leader_weights()
    leader_diag = np.diag(b)
    coupling = laplacian + leader_diag
    values = symmetric_eigenvalues(coupling, tol=eig_tol)
    return GraphMatrices(
        laplacian=laplacian,
        leader_diag=leader_diag,
        coupling=coupling,
        lambda_min_h=float(values[0]),
        lambda_max_h=float(values[-1]),
    )
