"""Structural node and edge metrics over the undirected simple projection.

Every metric here works on :class:`Projection`, which collapses parallel
edges, drops self-loops and forgets direction.  Components are handled
independently wherever a metric is only defined on connected graphs.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .graph import PropertyGraph

METRICS = ("ev", "ec", "nc", "z", "mu", "sc")
NODE_METRICS = ("ev", "nc", "z", "mu", "sc")

DENSE_LIMIT = 2500        # largest component handled with a dense eigensolver
SPECTRAL_BUDGET = 2500    # subgraph centrality switches to the series beyond this
SERIES_TOL = 1e-12


class MetricError(ValueError):
    """A metric could not be computed; the message starts with its name."""


@dataclass
class Projection:
    ids: list[str]
    adj: list[list[int]]
    edges: list[tuple[int, int]]
    weights: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.ids)

    def degree(self) -> np.ndarray:
        return np.array([len(a) for a in self.adj], dtype=float)

    def edge_key(self, k: int) -> tuple[str, str]:
        i, j = self.edges[k]
        return (self.ids[i], self.ids[j])

    def components(self) -> list[list[int]]:
        seen = [False] * self.n
        out = []
        for s in range(self.n):
            if seen[s]:
                continue
            seen[s] = True
            comp = [s]
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for v in self.adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        comp.append(v)
                        queue.append(v)
            out.append(sorted(comp))
        return out

    def adjacency(self, nodes: list[int] | None = None) -> sp.csr_matrix:
        if nodes is None:
            nodes = list(range(self.n))
        local = {u: i for i, u in enumerate(nodes)}
        rows, cols = [], []
        for i, j in self.edges:
            if i in local and j in local:
                rows += [local[i], local[j]]
                cols += [local[j], local[i]]
        m = len(nodes)
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))


def project(g: PropertyGraph | Projection, weight: str | None = None) -> Projection:
    """Undirected simple projection of ``g``.

    With ``weight`` set, collapsed edges carry the summed numeric attribute
    of that name (missing values count as 1).
    """
    if isinstance(g, Projection):
        return g
    ids = list(g.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    acc: dict[tuple[int, int], float] = {}
    for e in g.edges.values():
        i, j = index[e.tail], index[e.head]
        if i == j:
            continue
        key = (i, j) if i < j else (j, i)
        w = float(e.attrs.get(weight, 1)) if weight else 1.0
        acc[key] = acc.get(key, 0.0) + w
    edges = sorted(acc)
    adj: list[list[int]] = [[] for _ in ids]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    for a in adj:
        a.sort()
    return Projection(ids, adj, edges, [acc[k] for k in edges])


def from_edge_list(n: int, edges, ids: list[str] | None = None) -> Projection:
    """Projection built straight from integer pairs; handy for tests."""
    ids = ids or [str(i) for i in range(n)]
    pairs = sorted({(min(i, j), max(i, j)) for i, j in edges if i != j})
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    for a in adj:
        a.sort()
    return Projection(list(ids), adj, pairs, [1.0] * len(pairs))


# eigenvector centrality

def _principal_vector(a: sp.csr_matrix) -> tuple[float, np.ndarray]:
    m = a.shape[0]
    if m <= DENSE_LIMIT:
        vals, vecs = np.linalg.eigh(a.toarray())
        lam, x = vals[-1], vecs[:, -1]
    else:
        vals, vecs = eigsh(a.astype(float), k=1, which="LA", tol=1e-14, maxiter=10_000)
        lam, x = vals[0], vecs[:, 0]
    x = np.abs(x)
    return float(lam), x / np.linalg.norm(x)


def eigenvector_centrality(g) -> dict[str, float]:
    """Principal adjacency eigenvector, unit Euclidean norm per component.

    A single-node component has the trivial eigenvector ``[1.0]``.
    """
    p = project(g)
    if p.n == 0:
        raise MetricError("eigenvector_centrality: empty graph")
    out = np.zeros(p.n)
    for comp in p.components():
        if len(comp) == 1:
            out[comp[0]] = 1.0
            continue
        _, x = _principal_vector(p.adjacency(comp))
        out[comp] = x
    return {p.ids[i]: float(v) for i, v in enumerate(out)}


# shortest-path edge betweenness

def _brandes_unweighted(p: Projection, s: int, edge_index, acc: np.ndarray) -> None:
    n = p.n
    sigma = [0] * n
    dist = [-1] * n
    preds: list[list[int]] = [[] for _ in range(n)]
    sigma[s], dist[s] = 1, 0
    order = []
    queue = deque([s])
    while queue:
        v = queue.popleft()
        order.append(v)
        for w in p.adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
                preds[w].append(v)
    delta = [0.0] * n
    for w in reversed(order):
        for v in preds[w]:
            c = sigma[v] / sigma[w] * (1.0 + delta[w])
            acc[edge_index[(v, w) if v < w else (w, v)]] += c
            delta[v] += c


def _brandes_weighted(p: Projection, s: int, edge_index, lengths, acc: np.ndarray) -> None:
    n = p.n
    sigma = [0] * n
    dist = [math.inf] * n
    preds: list[list[int]] = [[] for _ in range(n)]
    sigma[s], dist[s] = 1, 0.0
    order = []
    done = [False] * n
    heap = [(0.0, s)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        order.append(v)
        for w in p.adj[v]:
            nd = d + lengths[edge_index[(v, w) if v < w else (w, v)]]
            if nd < dist[w] - 1e-12 * max(1.0, nd):
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [v]
                heapq.heappush(heap, (nd, w))
            elif abs(nd - dist[w]) <= 1e-12 * max(1.0, nd) and not done[w]:
                sigma[w] += sigma[v]
                preds[w].append(v)
    delta = [0.0] * n
    for w in reversed(order):
        for v in preds[w]:
            c = sigma[v] / sigma[w] * (1.0 + delta[w])
            acc[edge_index[(v, w) if v < w else (w, v)]] += c
            delta[v] += c


def edge_betweenness(g, weighted: bool = False, weight: str = "count") -> dict[tuple[str, str], float]:
    """Sum over unordered node pairs of the share of shortest paths using each edge.

    Unnormalized.  With ``weighted`` the edge length is the inverse of the
    collapsed ``weight`` attribute (heavier co-occurrence means closer).
    """
    p = project(g, weight if weighted else None)
    edge_index = {e: k for k, e in enumerate(p.edges)}
    acc = np.zeros(len(p.edges))
    if weighted:
        lengths = [1.0 / w if w > 0 else math.inf for w in p.weights]
        for s in range(p.n):
            _brandes_weighted(p, s, edge_index, lengths, acc)
    else:
        for s in range(p.n):
            _brandes_unweighted(p, s, edge_index, acc)
    acc /= 2.0  # each unordered pair was counted from both ends
    return {p.edge_key(k): float(v) for k, v in enumerate(acc)}


# current-flow betweenness

def laplacian_pinv(a: sp.csr_matrix | np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a connected graph's Laplacian."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a, dtype=float)
    n = a.shape[0]
    lap = np.diag(a.sum(axis=1)) - a
    j = np.full((n, n), 1.0 / n)
    return np.linalg.inv(lap + j) - j


def _sorted_abs_pair_sums(rows: np.ndarray) -> np.ndarray:
    # sum_{s<t} |x_s - x_t| per row, via the sorted-order identity
    n = rows.shape[1]
    coef = 2.0 * np.arange(n) - n + 1
    return np.sort(rows, axis=1) @ coef


def _flow_row_sums(comp_edges: list[tuple[int, int]], lp: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(comp_edges))
    u = np.array([e[0] for e in comp_edges], dtype=int)
    v = np.array([e[1] for e in comp_edges], dtype=int)
    for start in range(0, len(comp_edges), chunk):
        sl = slice(start, start + chunk)
        out[sl] = _sorted_abs_pair_sums(lp[u[sl]] - lp[v[sl]])
    return out


def _current_flow(p: Projection):
    node_vals = np.zeros(p.n)
    edge_vals = np.zeros(len(p.edges))
    edge_index = {e: k for k, e in enumerate(p.edges)}
    for comp in p.components():
        m = len(comp)
        if m < 2:
            continue
        local = {u: i for i, u in enumerate(comp)}
        comp_edges = [(local[i], local[j]) for i in comp for j in p.adj[i] if i < j]
        lp = laplacian_pinv(p.adjacency(comp))
        flows = _flow_row_sums(comp_edges, lp)
        for (li, lj), total in zip(comp_edges, flows):
            gi, gj = comp[li], comp[lj]
            edge_vals[edge_index[(gi, gj)]] = total
            if m >= 3:
                node_vals[gi] += total
                node_vals[gj] += total
        if m >= 3:
            # throughput halves the incident current; each of the m-1 pairs a
            # node terminates contributes exactly one half and is excluded
            node_vals[comp] = node_vals[comp] / 2.0 - (m - 1) / 2.0
    np.clip(node_vals, 0.0, None, out=node_vals)
    return node_vals, edge_vals


def current_flow_betweenness(g) -> dict[str, float]:
    """Random-walk (current-flow) betweenness, unnormalized, per component.

    For each unordered source/sink pair a unit current is routed through the
    component viewed as a unit-resistance network; a node's score sums the
    current passing through it over pairs it does not terminate.
    Components with fewer than three nodes score zero.
    """
    p = project(g)
    node_vals, _ = _current_flow(p)
    return {p.ids[i]: float(v) for i, v in enumerate(node_vals)}


def edge_current_flow_betweenness(g) -> dict[tuple[str, str], float]:
    """Sum over unordered pairs of the absolute unit current on each edge."""
    p = project(g)
    _, edge_vals = _current_flow(p)
    return {p.edge_key(k): float(v) for k, v in enumerate(edge_vals)}


# local measures

def average_neighbor_degree(g) -> dict[str, float]:
    p = project(g)
    deg = p.degree()
    out = {}
    for i, nbrs in enumerate(p.adj):
        out[p.ids[i]] = float(deg[nbrs].mean()) if nbrs else 0.0
    return out


def core_numbers(g) -> dict[str, int]:
    """k-core decomposition by bucketed peeling (Batagelj-Zaversnik)."""
    p = project(g)
    n = p.n
    deg = [len(a) for a in p.adj]
    if n == 0:
        return {}
    maxd = max(deg)
    bins = [0] * (maxd + 1)
    for d in deg:
        bins[d] += 1
    start = 0
    for d in range(maxd + 1):
        bins[d], start = start, start + bins[d]
    pos = [0] * n
    vert = [0] * n
    for v in range(n):
        pos[v] = bins[deg[v]]
        vert[pos[v]] = v
        bins[deg[v]] += 1
    for d in range(maxd, 0, -1):
        bins[d] = bins[d - 1]
    bins[0] = 0
    for i in range(n):
        v = vert[i]
        for u in p.adj[v]:
            if deg[u] > deg[v]:
                du, pu = deg[u], pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u], vert[pu] = pw, w
                    pos[w], vert[pw] = pu, u
                bins[du] += 1
                deg[u] -= 1
    return {p.ids[i]: int(d) for i, d in enumerate(deg)}


def _series_terms(rho: float, tol: float = SERIES_TOL) -> int:
    # smallest K with rho^(K+1)/(K+1)! <= tol, bounding the tail relative to e^rho
    k, term = 0, 1.0
    while True:
        k += 1
        term *= rho / k
        if term <= tol and k > rho:
            return k


def subgraph_centrality_series(a: sp.csr_matrix, terms: int | None = None,
                               block: int = 256) -> np.ndarray:
    """Diagonal of exp(A) by a truncated power series.

    The default truncation K satisfies rho^(K+1)/(K+1)! <= 1e-12 with
    rho = max degree >= spectral radius, so the dropped tail is at most
    1e-12 * e^rho per entry.
    """
    a = sp.csr_matrix(a, dtype=float)
    n = a.shape[0]
    if terms is None:
        rho = float(a.sum(axis=1).max()) if n else 0.0
        terms = _series_terms(rho)
    out = np.ones(n)
    for start in range(0, n, block):
        cols = np.arange(start, min(n, start + block))
        x = np.zeros((n, len(cols)))
        x[cols, np.arange(len(cols))] = 1.0
        for k in range(1, terms + 1):
            x = a @ x / k
            out[cols] += x[cols, np.arange(len(cols))]
    return out


def subgraph_centrality(g, spectral_budget: int = SPECTRAL_BUDGET) -> dict[str, float]:
    """Weighted closed-walk counts: the diagonal of the adjacency exponential."""
    p = project(g)
    out = np.ones(p.n)
    for comp in p.components():
        if len(comp) == 1:
            continue
        a = p.adjacency(comp)
        if len(comp) <= spectral_budget:
            vals, vecs = np.linalg.eigh(a.toarray())
            out[comp] = (vecs ** 2) @ np.exp(vals)
        else:
            out[comp] = subgraph_centrality_series(a)
    return {p.ids[i]: float(v) for i, v in enumerate(out)}


# bundles

def _edge_label(key: tuple[str, str]) -> str:
    return f"{key[0]}|{key[1]}"


@dataclass
class MetricBundle:
    ev: dict[str, float]
    ec: dict[tuple[str, str], float]
    nc: dict[str, float]
    z: dict[str, float]
    mu: dict[str, int]
    sc: dict[str, float]
    meta: dict[str, Any] = field(default_factory=dict)

    def values(self, metric: str) -> list[float]:
        return [float(v) for v in getattr(self, metric).values()]

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {m: dict(getattr(self, m)) for m in NODE_METRICS}
        out["ec"] = {_edge_label(k): v for k, v in self.ec.items()}
        out["meta"] = self.meta
        return out

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "MetricBundle":
        ec = {tuple(k.split("|", 1)): float(v) for k, v in d["ec"].items()}
        return cls(ev=dict(d["ev"]), ec=ec, nc=dict(d["nc"]), z=dict(d["z"]),
                   mu={k: int(v) for k, v in d["mu"].items()}, sc=dict(d["sc"]),
                   meta=dict(d.get("meta", {})))

    @classmethod
    def pooled(cls, bundles: list["MetricBundle"]) -> "MetricBundle":
        """Concatenate several bundles' distributions (keys are prefixed by sample)."""
        merged = {m: {} for m in METRICS}
        for i, b in enumerate(bundles):
            for m in NODE_METRICS:
                merged[m].update({f"{i}/{k}": v for k, v in getattr(b, m).items()})
            merged["ec"].update({(f"{i}/{k[0]}", f"{i}/{k[1]}"): v for k, v in b.ec.items()})
        return cls(**merged, meta={"pooled_samples": len(bundles)})


def compute_metrics(g, weighted: bool = False, edge_metric: str = "shortest_path") -> MetricBundle:
    """All six metrics of a graph; failures name the metric that raised."""
    p = project(g, "count" if weighted else None)
    if p.n == 0:
        raise MetricError("eigenvector_centrality: empty graph")
    steps: list[tuple[str, Callable]] = [
        ("ev", lambda: eigenvector_centrality(p)),
        ("ec", (lambda: edge_betweenness(g, weighted=True)) if weighted else
               (lambda: edge_betweenness(p)) if edge_metric == "shortest_path" else
               (lambda: edge_current_flow_betweenness(p))),
        ("nc", lambda: current_flow_betweenness(p)),
        ("z", lambda: average_neighbor_degree(p)),
        ("mu", lambda: core_numbers(p)),
        ("sc", lambda: subgraph_centrality(p)),
    ]
    names = {"ev": "eigenvector_centrality", "ec": "edge_betweenness",
             "nc": "current_flow_betweenness", "z": "average_neighbor_degree",
             "mu": "core_numbers", "sc": "subgraph_centrality"}
    out = {}
    for key, fn in steps:
        try:
            out[key] = fn()
        except MetricError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the metric name
            raise MetricError(f"{names[key]}: {exc}") from exc
    return MetricBundle(**out, meta={"nodes": p.n, "edges": len(p.edges),
                                     "edge_metric": edge_metric, "weighted": weighted})
