"""Finite orbit sets, generalized connections on flow-labelled edges, and gauge solving.

Edges are pairs (m, g(m)) labelled by a generator word g; they are stored once
in the forward direction and traversed backwards with the inverse matrix.
Composite transports multiply later edges on the left, matching the smooth
holonomy convention.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.stats import unitary_group

from .connection import dagger, polar_unitary
from .flow_algebra import FlowWord
from .geometry import DEFAULT_STEP, ChartDomain


class OrbitCapExceeded(RuntimeError):
    pass


class PointEscapesOrbit(KeyError):
    pass


class WordNotGenerated(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    id: int
    generator: int
    source: int
    target: int


@dataclass
class FinitePointSet:
    domain: ChartDomain
    points: np.ndarray
    generators: Tuple[FlowWord, ...]
    edges: List[Edge]
    tol: float

    def __post_init__(self):
        self.forward: Dict[Tuple[int, int], Edge] = {(e.generator, e.source): e for e in self.edges}
        self.backward: Dict[Tuple[int, int], Edge] = {(e.generator, e.target): e for e in self.edges}

    @property
    def size(self) -> int:
        return len(self.points)

    def index_of(self, x) -> Optional[int]:
        d = np.linalg.norm(self.domain.displacement(self.points, np.asarray(x, dtype=float)), axis=-1)
        j = int(np.argmin(d)) if len(d) else -1
        return j if j >= 0 and d[j] <= self.tol else None

    def step(self, gen: int, sign: int, i: int) -> Tuple[int, Edge]:
        """Move from point i along generator ``gen`` (sign -1: backwards)."""
        table = self.forward if sign > 0 else self.backward
        e = table.get((gen, i))
        if e is None:
            raise PointEscapesOrbit(f"generator {gen} ({'+' if sign > 0 else '-'}) leaves the orbit at point {i}")
        return (e.target if sign > 0 else e.source), e

    def factor(self, F: FlowWord) -> List[Tuple[int, int]]:
        """Write F as a product of generators and inverses; returned rightmost first."""
        target = F.key()
        options = []
        for j, g in enumerate(self.generators):
            options.append((j, 1, g.key()))
            options.append((j, -1, g.inverse().key()))
        options = [o for o in options if o[2]]

        def search(rest):
            if not rest:
                return []
            for j, s, k in options:
                if rest[-len(k) :] == k:
                    tail = search(rest[: -len(k)])
                    if tail is not None:
                        return [(j, s)] + tail
            return None

        out = search(target)
        if out is None:
            raise WordNotGenerated(f"{F!r} is not a product of the orbit generators")
        return out

    def to_json(self) -> dict:
        return {
            "points": self.points.tolist(),
            "generators": [[[X.id, s] for X, s in g.letters] for g in self.generators],
            "edges": [[e.id, e.generator, e.source, e.target] for e in self.edges],
        }


def build_orbit(
    seeds,
    generators: Sequence[FlowWord],
    domain: ChartDomain,
    cap: int = 10_000,
    tol: Optional[float] = None,
    step: float = DEFAULT_STEP,
) -> FinitePointSet:
    """Closure of the seeds under the generators and their inverses."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if cap < len(seeds):
        raise ValueError("cap must be at least the number of seeds")
    tol = 1e-9 * float(np.max(domain.extent)) if tol is None else tol
    generators = tuple(generators)
    pts: List[np.ndarray] = []

    def snap(x):
        if pts:
            arr = np.asarray(pts)
            d = np.linalg.norm(domain.displacement(arr, x), axis=-1)
            j = int(np.argmin(d))
            if d[j] <= tol:
                return j, False
        if len(pts) >= cap:
            raise OrbitCapExceeded(f"orbit exceeds {cap} points")
        pts.append(domain.wrap(x))
        return len(pts) - 1, True

    frontier = []
    for s in seeds:
        j, new = snap(s)
        if new:
            frontier.append(j)
    edges: Dict[Tuple[int, int], Tuple[int, int]] = {}  # (gen, source) -> (target, id)
    order: List[Tuple[int, int, int]] = []
    while frontier:
        X = np.asarray([pts[i] for i in frontier])
        nxt = []
        for j, g in enumerate(generators):
            fwd = g.apply(X, domain, step)
            bwd = g.inverse().apply(X, domain, step)
            for i, y, z in zip(frontier, fwd, bwd):
                t, new = snap(y)
                if new:
                    nxt.append(t)
                if (j, i) not in edges:
                    edges[(j, i)] = (t, len(order))
                    order.append((j, i, t))
                s, new = snap(z)
                if new:
                    nxt.append(s)
                if (j, s) not in edges:
                    edges[(j, s)] = (i, len(order))
                    order.append((j, s, i))
        frontier = nxt
    edge_list = [Edge(k, j, s, t) for k, (j, s, t) in enumerate(order)]
    return FinitePointSet(domain, np.asarray(pts).reshape(-1, domain.dimension), generators, edge_list, tol)


def random_unitaries(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitaries; random phases for n = 1."""
    if n == 1:
        return np.exp(2j * np.pi * rng.random(count))[:, None, None]
    if count == 0:
        return np.zeros((0, n, n), dtype=complex)
    U = unitary_group.rvs(n, size=count, random_state=rng)
    return np.asarray(U).reshape(count, n, n)


@dataclass
class GeneralizedConnection:
    pts: FinitePointSet
    matrices: np.ndarray  # (E, n, n), one per stored edge
    id: str = "generalized"

    @property
    def fiber_dim(self) -> int:
        return self.matrices.shape[-1]

    def edge(self, eid: int, sign: int = 1) -> np.ndarray:
        U = self.matrices[eid]
        return U if sign > 0 else dagger(U)

    def path(self, steps: Sequence[Tuple[int, int]]) -> np.ndarray:
        """Transport along edges given in traversal order as (edge id, sign)."""
        U = np.eye(self.fiber_dim, dtype=complex)
        for eid, s in steps:
            U = self.edge(eid, s) @ U
        return U

    def transport(self, F: FlowWord, m: int) -> Tuple[int, np.ndarray]:
        """(F(m), nabla(F_m)) by walking the generator factorization of F."""
        U = np.eye(self.fiber_dim, dtype=complex)
        cur = m
        for gen, s in self.pts.factor(F):
            cur, e = self.pts.step(gen, s, cur)
            U = self.edge(e.id, s) @ U
        return cur, U

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "matrices": [[[[z.real, z.imag] for z in row] for row in M] for M in self.matrices],
        }


def random_generalized_connection(pts: FinitePointSet, n: int, seed: int = 0, id="random") -> GeneralizedConnection:
    rng = np.random.default_rng(seed)
    return GeneralizedConnection(pts, random_unitaries(len(pts.edges), n, rng), id)


def point_gauge_transform(nabla: GeneralizedConnection, U: np.ndarray) -> GeneralizedConnection:
    """nabla'(l) = U(e(l)) nabla(l) U(s(l))^*."""
    src = np.array([e.source for e in nabla.pts.edges], dtype=np.int64)
    tgt = np.array([e.target for e in nabla.pts.edges], dtype=np.int64)
    M = U[tgt] @ nabla.matrices @ dagger(U[src])
    return GeneralizedConnection(nabla.pts, M, f"gauged.{nabla.id}")


def point_projection(pts: FinitePointSet, m: int, n: int) -> np.ndarray:
    """1_m acting on l^2(pts, C^n)."""
    P = np.zeros((pts.size * n, pts.size * n), dtype=complex)
    P[m * n : (m + 1) * n, m * n : (m + 1) * n] = np.eye(n)
    return P


def discrete_represent(nabla: GeneralizedConnection, F: FlowWord, pts: Optional[FinitePointSet] = None) -> np.ndarray:
    """(psi(F) xi)(F(m)) = nabla(F_m) xi(m), as an explicit block matrix."""
    pts = pts or nabla.pts
    n = nabla.fiber_dim
    K = pts.size
    out = np.zeros((K * n, K * n), dtype=complex)
    for m in range(K):
        t, U = nabla.transport(F, m)
        out[t * n : (t + 1) * n, m * n : (m + 1) * n] = U
    return out


@dataclass
class GaugeSolveResult:
    success: bool
    U: Optional[np.ndarray] = None
    residual: float = float("nan")
    certificate: Optional[dict] = None

    def to_json(self) -> dict:
        out = {"success": self.success, "residual": self.residual}
        if self.certificate is not None:
            out["certificate"] = self.certificate
        return out


def _components(pts: FinitePointSet):
    """Spanning forest by BFS: per point its root, parent step and tree depth."""
    adj: Dict[int, List[Tuple[int, int, int]]] = {i: [] for i in range(pts.size)}
    for e in pts.edges:
        adj[e.source].append((e.target, e.id, 1))
        adj[e.target].append((e.source, e.id, -1))
    root = [-1] * pts.size
    parent: Dict[int, Tuple[int, int, int]] = {}  # child -> (parent, edge, sign from parent to child)
    tree = set()
    for r in range(pts.size):
        if root[r] >= 0:
            continue
        root[r] = r
        q = deque([r])
        while q:
            a = q.popleft()
            for b, eid, s in adj[a]:
                if root[b] < 0:
                    root[b] = r
                    parent[b] = (a, eid, s)
                    tree.add(eid)
                    q.append(b)
    return root, parent, tree


def _root_path(parent, i) -> List[Tuple[int, int]]:
    """Edges from the component root to point i, in traversal order."""
    steps = []
    while i in parent:
        a, eid, s = parent[i]
        steps.append((eid, s))
        i = a
    return steps[::-1]


def _invert(steps):
    return [(eid, -s) for eid, s in reversed(steps)]


def generalized_gauge_solve(
    nabla1: GeneralizedConnection, nabla2: GeneralizedConnection, pts: Optional[FinitePointSet] = None, tol: float = 1e-9, seed: int = 0
) -> GaugeSolveResult:
    """Find U with nabla2(l) = U(e(l)) nabla1(l) U(s(l))^* or a cycle certificate.

    U is fixed at each component root by solving the intertwining condition
    on all fundamental cycles (preferring U(root) = I), then propagated
    along a spanning tree.
    """
    pts = pts or nabla1.pts
    n = nabla1.fiber_dim
    if nabla2.fiber_dim != n or len(nabla2.matrices) != len(nabla1.matrices):
        raise ValueError("connections live on different carriers")
    root, parent, tree = _components(pts)
    paths = {i: _root_path(parent, i) for i in range(pts.size)}
    T1 = {i: nabla1.path(p) for i, p in paths.items()}
    T2 = {i: nabla2.path(p) for i, p in paths.items()}
    cycles: Dict[int, List[Tuple[int, List[Tuple[int, int]], np.ndarray, np.ndarray]]] = {}
    for e in pts.edges:
        if e.id in tree:
            continue
        loop = paths[e.source] + [(e.id, 1)] + _invert(paths[e.target])
        C1 = dagger(T1[e.target]) @ nabla1.edge(e.id) @ T1[e.source]
        C2 = dagger(T2[e.target]) @ nabla2.edge(e.id) @ T2[e.source]
        cycles.setdefault(root[e.source], []).append((e.id, loop, C1, C2))

    rng = np.random.default_rng(seed)
    I = np.eye(n)
    R: Dict[int, np.ndarray] = {}
    for r in sorted(set(root)):
        cyc = cycles.get(r, [])
        if not cyc or all(np.max(np.abs(C2 - C1)) <= tol for _, _, C1, C2 in cyc):
            R[r] = I.astype(complex)
            continue
        # C2 R = R C1 for every cycle: (I (x) C2 - C1^T (x) I) vec(R) = 0 (row-major vec)
        rows = [np.kron(C2, I) - np.kron(I, C1.T) for _, _, C1, C2 in cyc]
        null = null_space(np.vstack(rows), rcond=1e-8)
        if null.shape[1] == 0:
            return GaugeSolveResult(False, certificate=_certificate(cyc))
        coeff = rng.standard_normal(null.shape[1]) + 1j * rng.standard_normal(null.shape[1])
        M = (null @ coeff).reshape(n, n)
        if np.linalg.svd(M, compute_uv=False)[-1] <= 1e-8 * np.linalg.norm(M):
            return GaugeSolveResult(False, certificate=_certificate(cyc))
        Rr = polar_unitary(M)
        bad = max(np.max(np.abs(C2 @ Rr - Rr @ C1)) for _, _, C1, C2 in cyc)
        if bad > tol:
            return GaugeSolveResult(False, certificate=_certificate(cyc))
        R[r] = Rr
    U = np.stack([T2[i] @ R[root[i]] @ dagger(T1[i]) for i in range(pts.size)])
    check = point_gauge_transform(nabla1, U)
    residual = float(np.max(np.abs(check.matrices - nabla2.matrices), initial=0.0))
    return GaugeSolveResult(True, U, residual)


def _certificate(cyc) -> dict:
    best = max(cyc, key=lambda c: abs(np.trace(c[2]) - np.trace(c[3])))
    eid, loop, C1, C2 = best
    t1, t2 = complex(np.trace(C1)), complex(np.trace(C2))
    return {
        "cycle": [int(e) for e, _ in loop],
        "orientation": [int(s) for _, s in loop],
        "trace1": [t1.real, t1.imag],
        "trace2": [t2.real, t2.imag],
    }


def dumps(obj) -> str:
    return json.dumps(obj.to_json(), sort_keys=True)
