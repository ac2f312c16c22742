"""Grid discretization of L^2 half-density sections and the operators phi_nabla(a).

Sections are stored as arrays of shape (P, n) on the nodes of a ``GridSpec``;
operators are sparse matrices acting on the flattened vector with index
``node * n + component``. The inner product uses weights sqrt|g| h^d.

For a word F the operator is

    (phi(F) xi)(m) = c(m) Hol(F-path from F^-1 m to m) xi(F^-1 m),
    c(m)^2 = sqrt|g|(F^-1 m) J_{F^-1}(m) / sqrt|g|(m) = k_{F^-1}(m),

with xi interpolated by tensor-product cubic Lagrange. The Jacobian comes from
Liouville's formula integrated alongside the positions; the holonomy from a
fourth-order Magnus step per integrator step.
"""
from __future__ import annotations

import csv
import json
import weakref
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .connection import SmoothConnection, TrivialConnection, dagger, expm_antihermitian
from .flow_algebra import AlgebraElement, FlowWord, TestFunction
from .geometry import DEFAULT_STEP, ChartDomain, _evaluator, field_token, flow_jacobian_det, grid_points, integrate

DENSE_LIMIT = 4096
GAUSS = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)


class GridCapError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    domain: ChartDomain
    shape: tuple
    cap: int = 1 << 18
    order: int = 3

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) != self.domain.dimension:
            raise ValueError("grid shape does not match chart dimension")
        if min(shape) < 4:
            raise ValueError("cubic interpolation needs at least 4 nodes per axis")
        if int(np.prod(shape)) > self.cap:
            raise GridCapError(f"{shape} exceeds the cap of {self.cap} nodes")
        if self.order != 3:
            raise ValueError("only cubic interpolation is implemented")

    @classmethod
    def square(cls, domain: ChartDomain, N: int, **kw) -> "GridSpec":
        return cls(domain, (N,) * domain.dimension, **kw)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> np.ndarray:
        return self.domain.extent / np.asarray(self.shape)

    @cached_property
    def nodes(self) -> np.ndarray:
        return grid_points(self.domain.lower, self.domain.upper, self.shape)

    @cached_property
    def density(self) -> np.ndarray:
        return self.domain.density(self.nodes)

    @cached_property
    def weights(self) -> np.ndarray:
        return self.density * float(np.prod(self.h))

    def key(self) -> tuple:
        return (self.domain.key(), self.shape)

    def flow_key(self) -> tuple:
        """Key of everything flows depend on (not the metric)."""
        d = self.domain
        return (d.topology, tuple(d.lower), tuple(d.upper), self.shape)

    def label(self) -> str:
        return "x".join(map(str, self.shape))


@dataclass
class GridSection:
    grid: GridSpec
    values: np.ndarray  # (P, n)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.size:
            raise ValueError("section size does not match grid")
        self.values = v

    @property
    def fiber_dim(self) -> int:
        return self.values.shape[1]

    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def inner(self, other: "GridSection") -> complex:
        return complex(np.sum(self.grid.weights[:, None] * np.conj(self.values) * other.values))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.grid.weights[:, None] * np.abs(self.values) ** 2)))

    def to_csv(self, path) -> None:
        """Node coordinates followed by real and imaginary parts of every component."""
        nodes = self.grid.nodes
        d, n = nodes.shape[1], self.fiber_dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(d)] + [f"{p}{j}" for j in range(n) for p in ("re", "im")])
            for x, v in zip(nodes, self.values):
                w.writerow([repr(float(c)) for c in x] + [repr(float(t)) for z in v for t in (z.real, z.imag)])


def section_from_function(grid: GridSpec, fn, n: int = 1) -> GridSection:
    vals = np.asarray(fn(grid.nodes), dtype=complex).reshape(grid.size, -1)
    if vals.shape[1] == 1 and n > 1:
        vals = np.repeat(vals, n, axis=1)
    return GridSection(grid, vals)


# ---------------------------------------------------------------------------
# interpolation


def _lagrange4(s):
    """Cubic Lagrange weights for nodes at -1, 0, 1, 2 evaluated at offset s."""
    return np.stack(
        [
            -s * (s - 1) * (s - 2) / 6,
            (s + 1) * (s - 1) * (s - 2) / 2,
            -(s + 1) * s * (s - 2) / 2,
            (s + 1) * s * (s - 1) / 6,
        ],
        axis=-1,
    )


def interpolation_matrix(grid: GridSpec, points, mode: Optional[str] = None) -> sp.csr_matrix:
    """Sparse (Q, P) matrix of cubic Lagrange weights at ``points``.

    ``mode`` is "wrap" (torus), "clamp" (box: stencils shifted inward,
    extrapolating at the edge) or "zero" (values outside the grid are zero).
    """
    dom = grid.domain
    mode = mode or ("wrap" if dom.periodic else "clamp")
    pts = np.asarray(points, dtype=float)
    Q, d = pts.shape
    u = (pts - dom.lo) / grid.h
    cols = np.zeros((Q, 1), dtype=np.int64)
    vals = np.ones((Q, 1))
    keep = np.ones((Q, 1), dtype=bool)
    for ax in range(d):
        N = grid.shape[ax]
        if mode == "wrap":
            u_ax = np.mod(u[:, ax], N)
            i0 = np.floor(u_ax).astype(np.int64)
        else:
            u_ax = u[:, ax]
            i0 = np.floor(u_ax).astype(np.int64)
            if mode == "clamp":
                i0 = np.clip(i0, 1, N - 3)
        s = u_ax - i0
        w = _lagrange4(s)
        idx = i0[:, None] + np.arange(-1, 3)[None, :]
        if mode == "wrap":
            ok = np.ones_like(idx, dtype=bool)
            idx = np.mod(idx, N)
        else:
            ok = (idx >= 0) & (idx < N)
            idx = np.clip(idx, 0, N - 1)
        cols = (cols[:, :, None] * N + idx[:, None, :]).reshape(Q, -1)
        vals = (vals[:, :, None] * w[:, None, :]).reshape(Q, -1)
        keep = (keep[:, :, None] & ok[:, None, :]).reshape(Q, -1)
    vals = np.where(keep, vals, 0.0)
    rows = np.repeat(np.arange(Q), cols.shape[1])
    M = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(Q, grid.size))
    M.eliminate_zeros()
    return M


# ---------------------------------------------------------------------------
# operators


class RepresentationOperator:
    """Sparse operator on grid sections with its provenance."""

    def __init__(self, matrix, grid: GridSpec, fiber_dim: int, provenance=("", ""), diagonal=None):
        self.matrix = sp.csr_matrix(matrix)
        self.grid, self.fiber_dim = grid, fiber_dim
        self.provenance = tuple(provenance)
        self.diagonal = diagonal  # the diagonal when the operator is a multiplication

    @property
    def shape(self):
        return self.matrix.shape

    @cached_property
    def _w(self):
        return np.repeat(self.grid.weights, self.fiber_dim)

    def apply(self, xi):
        if isinstance(xi, GridSection):
            out = self.matrix @ xi.vector()
            return GridSection(self.grid, out.reshape(self.grid.size, self.fiber_dim))
        return self.matrix @ xi

    def __matmul__(self, other):
        if isinstance(other, RepresentationOperator):
            diag = None
            if self.diagonal is not None and other.diagonal is not None:
                diag = self.diagonal * other.diagonal
            return RepresentationOperator(
                self.matrix @ other.matrix, self.grid, self.fiber_dim, (f"{self.provenance[0]}*{other.provenance[0]}", self.provenance[1]), diag
            )
        return self.apply(other)

    def _combine(self, other, sign):
        diag = None
        if self.diagonal is not None and other.diagonal is not None:
            diag = self.diagonal + sign * other.diagonal
        op = "+" if sign > 0 else "-"
        return RepresentationOperator(
            self.matrix + sign * other.matrix,
            self.grid,
            self.fiber_dim,
            (f"{self.provenance[0]}{op}{other.provenance[0]}", self.provenance[1]),
            diag,
        )

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def scale(self, c):
        diag = None if self.diagonal is None else c * self.diagonal
        return RepresentationOperator(c * self.matrix, self.grid, self.fiber_dim, self.provenance, diag)

    def adjoint(self) -> "RepresentationOperator":
        """Adjoint for the weighted inner product: W^-1 T^H W."""
        w = self._w
        M = sp.diags(1.0 / w) @ self.matrix.conj().T @ sp.diags(w)
        diag = None if self.diagonal is None else np.conj(self.diagonal)
        return RepresentationOperator(M, self.grid, self.fiber_dim, (f"({self.provenance[0]})^*", self.provenance[1]), diag)

    def dense(self) -> np.ndarray:
        if self.shape[0] > DENSE_LIMIT * max(self.fiber_dim, 1):
            raise MemoryError("operator too large for dense assembly")
        return self.matrix.toarray()

    def norm_ratio(self, xi: GridSection) -> float:
        return self.apply(xi).norm() / xi.norm()


def identity_operator(grid: GridSpec, n: int) -> RepresentationOperator:
    P = grid.size * n
    return RepresentationOperator(sp.identity(P, dtype=complex, format="csr"), grid, n, ("I", ""), np.ones(P, complex))


def multiplication_operator(grid: GridSpec, f: TestFunction, n: int) -> RepresentationOperator:
    vals = np.repeat(np.asarray(f.eval(grid.nodes, grid.domain), dtype=complex), n)
    return RepresentationOperator(sp.diags(vals, format="csr"), grid, n, (f.id, ""), vals)


# ---------------------------------------------------------------------------
# flows on grid nodes, shared between connections


class _FlowTable:
    """Positions F^-1(m) and log J_{F^-1}(m) at grid nodes, keyed by word prefix."""

    def __init__(self, grid: GridSpec, step: float):
        self.grid, self.step = grid, step
        self.entries: Dict[tuple, Tuple[np.ndarray, np.ndarray]] = {(): (grid.nodes.copy(), np.zeros(grid.size))}

    def get(self, key):
        return self.entries.get(key)

    def put(self, key, val):
        self.entries[key] = val


_TABLES: Dict[tuple, _FlowTable] = {}


def _table(grid: GridSpec, step: float) -> _FlowTable:
    k = (grid.flow_key(), step)
    if k not in _TABLES:
        if len(_TABLES) > 8:
            _TABLES.pop(next(iter(_TABLES)))
        _TABLES[k] = _FlowTable(grid, step)
    return _TABLES[k]


# holonomy tables per connection; transport does not see the metric
_HOLS: "weakref.WeakKeyDictionary[SmoothConnection, Dict[tuple, Dict[tuple, np.ndarray]]]" = weakref.WeakKeyDictionary()


def _hol_table(nabla: SmoothConnection, grid: GridSpec, step: float) -> Dict[tuple, np.ndarray]:
    per = _HOLS.setdefault(nabla, {})
    k = (grid.flow_key(), step)
    if k not in per:
        if len(per) > 4:
            per.pop(next(iter(per)))
        per[k] = {}
    return per[k]


def clear_caches() -> None:
    _TABLES.clear()
    _HOLS.clear()


def _mm(A, B):
    """Batched matrix product, written out for 2x2 where numpy's matmul is slow."""
    if A.shape[-1] != 2:
        return A @ B
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=complex)
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    e, f, g, h = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    out[..., 0, 0] = a * e + b * g
    out[..., 0, 1] = a * f + b * h
    out[..., 1, 0] = c * e + d * g
    out[..., 1, 1] = c * f + d * h
    return out


def _qmul(a, b):
    """Product of (a0 + i a.sigma)(b0 + i b.sigma) in quaternion coordinates."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)
    out[..., 1:] = a[..., :1] * b[..., 1:] + b[..., :1] * a[..., 1:] - np.cross(a[..., 1:], b[..., 1:])
    return out


class _MagnusTransport:
    """Integrator callback accumulating transport along the integration path.

    One fourth-order Magnus step per integrator step, with the curve at the
    two Gauss points from cubic Hermite reconstruction and the velocity from
    the field. Everything is carried in Pauli coordinates: a transport is
    exp(i phi) (q0 + i q . sigma) with q a unit quaternion (n = 2) or just
    exp(i phi) (n = 1). Only the moving points are tracked; ``result``
    scatters them back.
    """

    def __init__(self, X, nabla, domain, size):
        self.f, _ = _evaluator(X, domain)
        self.nabla, self.size, self.n = nabla, size, nabla.fiber_dim
        self.idx, self.phase, self.q = None, None, None
        self.coef = []
        for th in GAUSS:
            self.coef.append((2 * th**3 - 3 * th**2 + 1, th**3 - 2 * th**2 + th, -2 * th**3 + 3 * th**2, th**3 - th**2))

    def __call__(self, idx, x0, x1, v0, v1, dt):
        bs = []
        for h00, h10, h01, h11 in self.coef:
            p = h00 * x0 + h01 * x1 + dt * (h10 * v0 + h11 * v1)
            bs.append(self.nabla.pauli_contract(p, self.f(p)))
        b1, b2 = bs  # A(p)(v) = i (b0 + b . sigma); the generator is -A
        if self.idx is None:
            self.idx = idx
            self.phase = np.zeros(len(idx))
            if self.n == 2:
                self.q = np.zeros((len(idx), 4))
                self.q[:, 0] = 1.0
        self.phase -= 0.5 * dt * (b1[:, 0] + b2[:, 0])
        if self.n == 2:
            # [i b2.s, i b1.s] = -2i (b2 x b1).s
            w = -0.5 * dt * (b1[:, 1:] + b2[:, 1:]) - (np.sqrt(3) / 6) * dt * dt * np.cross(b2[:, 1:], b1[:, 1:])
            r = np.sqrt(np.sum(w * w, axis=1))
            step = np.empty((len(r), 4))
            step[:, 0] = np.cos(r)
            step[:, 1:] = np.sinc(r / np.pi)[:, None] * w
            self.q = _qmul(step, self.q)

    def result(self):
        n = self.n
        out = np.broadcast_to(np.eye(n, dtype=complex), (self.size, n, n)).copy()
        if self.idx is None:
            return out
        ph = np.exp(1j * self.phase)
        if n == 1:
            out[self.idx, 0, 0] = ph
            return out
        q = self.q / np.linalg.norm(self.q, axis=1, keepdims=True)
        U = np.empty((len(q), 2, 2), dtype=complex)
        U[:, 0, 0] = q[:, 0] + 1j * q[:, 3]
        U[:, 0, 1] = 1j * q[:, 1] + q[:, 2]
        U[:, 1, 0] = 1j * q[:, 1] - q[:, 2]
        U[:, 1, 1] = q[:, 0] - 1j * q[:, 3]
        out[self.idx] = ph[:, None, None] * U
        return out


class Representer:
    """Builds phi_nabla on one grid, caching flows per word prefix."""

    def __init__(self, grid: GridSpec, nabla: Optional[SmoothConnection] = None, step: float = DEFAULT_STEP):
        self.grid = grid
        self.nabla = nabla if nabla is not None else TrivialConnection(grid.domain, 1)
        self.n = self.nabla.fiber_dim
        self.step = step
        self.table = _table(grid, step)
        self.trivial = isinstance(self.nabla, TrivialConnection)
        self._hol = {} if self.trivial else _hol_table(self.nabla, grid, step)
        self._ops: Dict[tuple, RepresentationOperator] = {}

    # -- flows ---------------------------------------------------------------

    def _extend(self, prefix: tuple, letter, need_hol: bool):
        X, s = letter
        key = prefix + ((field_token(X), s),)
        q0, ld0 = self.table.get(prefix)
        cb = _MagnusTransport(X, self.nabla, self.grid.domain, self.grid.size) if need_hol else None
        q1, ld = integrate(X, q0, -float(s), self.grid.domain, self.step, with_logdet=True, callback=cb)
        if self.table.get(key) is None:
            self.table.put(key, (self.grid.domain.wrap(q1), ld0 + ld))
        if need_hol:
            # transport along the forward letter path is the inverse of the backward one
            back = dagger(cb.result())
            H0 = self._hol.get(prefix)
            self._hol[key] = back if H0 is None else _mm(H0, back)

    def inverse_flow(self, word: FlowWord):
        """(F^-1(m), log J_{F^-1}(m)) at every node."""
        prefix: tuple = ()
        for letter in word.letters:
            key = prefix + ((field_token(letter[0]), letter[1]),)
            if self.table.get(key) is None:
                self._extend(prefix, letter, need_hol=False)
            prefix = key
        return self.table.get(prefix)

    def holonomy(self, word: FlowWord) -> Optional[np.ndarray]:
        """Hol(F-path from F^-1(m) to m) at every node, or None for the trivial connection."""
        if self.trivial or not word.letters:
            return None
        prefix: tuple = ()
        for letter in word.letters:
            key = prefix + ((field_token(letter[0]), letter[1]),)
            if key not in self._hol:
                self._extend(prefix, letter, need_hol=True)
            prefix = key
        return self._hol[prefix]

    def inverse_factor(self, word: FlowWord) -> np.ndarray:
        """k_{F^-1}(m) at the nodes; its square root unitarizes the pullback."""
        q, ld = self.inverse_flow(word)
        dom = self.grid.domain
        return dom.density(q) * np.exp(ld) / self.grid.density

    # -- operators -----------------------------------------------------------

    def word(self, word: FlowWord) -> RepresentationOperator:
        key = word.key()
        if key in self._ops:
            return self._ops[key]
        n, P = self.n, self.grid.size
        if not word.letters:
            op = identity_operator(self.grid, n)
        else:
            H = self.holonomy(word)  # fills the flow table on the way
            q, _ = self.inverse_flow(word)
            c = np.sqrt(self.inverse_factor(word))
            interp = interpolation_matrix(self.grid, q).tocoo()
            if H is None:
                rows = interp.row[:, None] * n + np.arange(n)[None, :]
                cols = interp.col[:, None] * n + np.arange(n)[None, :]
                vals = np.repeat((c[interp.row] * interp.data)[:, None], n, axis=1).astype(complex)
            else:
                a = np.arange(n)
                rows = np.broadcast_to(interp.row[:, None, None] * n + a[None, :, None], (interp.nnz, n, n))
                cols = np.broadcast_to(interp.col[:, None, None] * n + a[None, None, :], (interp.nnz, n, n))
                vals = (c[interp.row] * interp.data)[:, None, None] * H[interp.row]
            M = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(P * n, P * n))
            op = RepresentationOperator(M, self.grid, n, (repr(word), self.nabla.id))
        self._ops[key] = op
        return op

    def function(self, f: TestFunction) -> RepresentationOperator:
        op = multiplication_operator(self.grid, f, self.n)
        op.provenance = (f.id, self.nabla.id)
        return op

    def element(self, a: AlgebraElement) -> RepresentationOperator:
        total = None
        for f, w in a.terms:
            term = self.function(f)
            if w.letters:
                W = self.word(w)
                term = RepresentationOperator(term.matrix @ W.matrix, self.grid, self.n, (f"{f.id}.{w!r}", self.nabla.id))
            total = term if total is None else total + term
        if total is None:
            P = self.grid.size * self.n
            return RepresentationOperator(sp.csr_matrix((P, P), dtype=complex), self.grid, self.n, ("0", self.nabla.id), np.zeros(P, complex))
        total.provenance = (repr(a), self.nabla.id)
        return total

    def measured_factor(self, word: FlowWord) -> np.ndarray:
        """||(phi(F^-1) 1)(m)||^2 for a constant unit section: the operator's reading of k_F(m)."""
        op = self.word(word.inverse())
        e = np.zeros((self.grid.size, self.n), dtype=complex)
        e[:, 0] = 1.0
        out = op.apply(e.ravel()).reshape(self.grid.size, self.n)
        return np.sum(np.abs(out) ** 2, axis=1)


def represent_word(nabla: SmoothConnection, F: FlowWord, grid: GridSpec, step: float = DEFAULT_STEP):
    return Representer(grid, nabla, step).word(F)


def represent_element(nabla: SmoothConnection, a: AlgebraElement, grid: GridSpec, step: float = DEFAULT_STEP):
    return Representer(grid, nabla, step).element(a)


def radon_nikodym_factor(metric, F: FlowWord, m, domain: ChartDomain, step: float = DEFAULT_STEP, offset=None):
    """k_F(m) = sqrt|g|(F(m)) |det DF(m)| / sqrt|g|(m), Jacobian by central differences."""
    m = np.asarray(m, dtype=float)
    if not F.letters:
        return np.ones(m.shape[:-1]) if m.ndim > 1 else 1.0
    det = flow_jacobian_det(F, m, domain, offset=offset, step=step)
    Fm = F.apply(m, domain, step)
    k = metric.density(domain.wrap(Fm)) * det / metric.density(domain.wrap(m))
    return k


# ---------------------------------------------------------------------------
# smooth subspaces and norms


def smooth_basis(grid: GridSpec, n: int, kmax: int = 2, window: Optional[TestFunction] = None) -> np.ndarray:
    """Weighted-orthonormal basis (columns) of low Fourier modes times fiber basis vectors.

    With a ``window`` the modes are multiplied by it, giving sections supported
    where the window is.
    """
    dom = grid.domain
    x = (grid.nodes - dom.lo) / dom.extent
    ks = np.array(np.meshgrid(*[np.arange(-kmax, kmax + 1)] * dom.dimension, indexing="ij")).reshape(dom.dimension, -1).T
    modes = np.exp(2j * np.pi * x @ ks.T)
    if window is not None:
        modes = modes * np.asarray(window.eval(grid.nodes, dom))[:, None]
    P = grid.size
    cols = []
    for j in range(n):
        B = np.zeros((P, n, modes.shape[1]), dtype=complex)
        B[:, j, :] = modes
        cols.append(B.reshape(P * n, -1))
    B = np.concatenate(cols, axis=1)
    sw = np.sqrt(np.repeat(grid.weights, n))
    Q, R = np.linalg.qr(sw[:, None] * B)
    keep = np.abs(np.diag(R)) > 1e-10 * np.max(np.abs(np.diag(R)))
    return Q[:, keep] / sw[:, None]


@dataclass
class NormEstimate:
    value: float
    iters: int
    last_delta: float

    def record(self, **kw) -> dict:
        return {**kw, "estimate": self.value, "iters": self.iters, "last_delta": self.last_delta}


def _power(apply_gram, dim, iters, seed, tol):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    lam, delta, k = 0.0, np.inf, 0
    for k in range(1, iters + 1):
        w = apply_gram(v)
        new = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        delta = abs(new - lam) / max(abs(new), 1e-300)
        lam = max(lam, new)
        if nw == 0.0:
            lam, delta = 0.0, 0.0
            break
        v = w / nw
        if delta < tol:
            break
    return float(np.sqrt(max(lam, 0.0))), k, float(delta)


def operator_norm_estimate(
    T: RepresentationOperator,
    iters: int = 200,
    seed: int = 0,
    basis: Optional[np.ndarray] = None,
    tol: float = 1e-13,
    compress: bool = True,
) -> NormEstimate:
    """Largest singular value of T by power iteration on T^*T (weighted adjoint).

    With ``basis`` (weighted-orthonormal columns Q) the norm of the
    compression Q^* T Q is estimated instead, i.e. T tested against resolved
    modes on both sides (``compress=False``: restriction T Q only); multiplication operators return the exact
    maximum modulus of their diagonal.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if T.diagonal is not None and basis is None:
        return NormEstimate(float(np.max(np.abs(T.diagonal), initial=0.0)), 1, 0.0)
    w = np.repeat(T.grid.weights, T.fiber_dim)
    if basis is not None:
        Y = T.matrix @ basis
        if compress:
            C = basis.conj().T @ (w[:, None] * Y)  # compression Q^* T Q
            G = C.conj().T @ C
        else:  # restriction T Q
            G = Y.conj().T @ (w[:, None] * Y)
        G = 0.5 * (G + G.conj().T)
        val, k, delta = _power(lambda v: G @ v, G.shape[0], iters, seed, tol)
        return NormEstimate(val, k, delta)
    M, MH = T.matrix, T.matrix.conj().T.tocsr()
    sw = np.sqrt(w)

    def gram(v):  # symmetric form: W^1/2 T^*T W^-1/2 in Euclidean coordinates
        return (MH @ (w * (M @ (v / sw)))) / sw

    val, k, delta = _power(gram, M.shape[1], iters, seed, tol)
    return NormEstimate(val, k, delta)


def sup_norm_over_family(
    a: AlgebraElement, family: Sequence[SmoothConnection], grid: GridSpec, iters: int = 200, seed: int = 0, basis_kmax=None
):
    """Max over the family of the operator-norm estimate; a lower bound for the C*-norm."""
    if not family:
        raise ValueError("connection family must be nonempty")
    records = []
    for nabla in family:
        T = Representer(grid, nabla).element(a)
        basis = None if basis_kmax is None else smooth_basis(grid, nabla.fiber_dim, basis_kmax)
        est = operator_norm_estimate(T, iters, seed, basis)
        records.append(est.record(element=repr(a), connection=nabla.id, grid=grid.label()))
    best = max(r["estimate"] for r in records)
    return best, records


def operator_to_json(T: RepresentationOperator) -> dict:
    return {
        "element": T.provenance[0],
        "connection": T.provenance[1],
        "grid": T.grid.label(),
        "fiber_dim": T.fiber_dim,
        "nnz": int(T.matrix.nnz),
    }


def write_norm_report(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(list(records), fh, indent=2, sort_keys=True)
