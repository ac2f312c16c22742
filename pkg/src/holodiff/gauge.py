"""Gauge transforms acting on connections, holonomies and grid representations."""
from __future__ import annotations

from typing import Callable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .connection import SIGMA, SmoothConnection, dagger, expm_antihermitian, holonomy, op_norm
from .geometry import ChartDomain, Curve
from .representation import GridSpec, Representer, RepresentationOperator, operator_norm_estimate, smooth_basis


class NonDifferentiableGaugeError(ValueError):
    """A grid-sampled gauge transform was used where derivatives are needed."""


class GaugeTransform:
    """Pointwise unitary u(m); ``derivative`` returns d_mu u with shape (..., d, n, n)."""

    id = "gauge"
    fiber_dim = 1
    smooth = True
    special = False  # values in SU(n)
    fd_offset = 1e-5

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x) -> np.ndarray:
        if not self.smooth:
            raise NonDifferentiableGaugeError(f"gauge {self.id!r} is only sampled on a grid")
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        out = []
        for mu in range(d):
            e = np.zeros(d)
            e[mu] = self.fd_offset
            out.append((self(x + e) - self(x - e)) / (2 * self.fd_offset))
        return np.stack(out, axis=-3)

    def __mul__(self, other: "GaugeTransform") -> "GaugeTransform":
        return ProductGauge(self, other)

    def inverse(self) -> "GaugeTransform":
        return InverseGauge(self)

    def unitarity_defect(self, x) -> float:
        U = self(x)
        n = U.shape[-1]
        return float(np.max(np.abs(dagger(U) @ U - np.eye(n)), initial=0.0))

    def __repr__(self):
        return f"{type(self).__name__}({self.id!r})"


class ConstantGauge(GaugeTransform):
    def __init__(self, matrix, id="constant"):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.id, self.fiber_dim = id, self.matrix.shape[-1]
        self.special = bool(abs(np.linalg.det(self.matrix) - 1) < 1e-12)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        n = self.fiber_dim
        return np.zeros(x.shape[:-1] + (x.shape[-1], n, n), dtype=complex)


def _periodic_angle(domain: ChartDomain, x, amplitude, wavevector, shift):
    """theta(x) = amplitude * sin(2 pi k . (x - lo) / L + shift) and its gradient."""
    L, lo = domain.extent, domain.lo
    k = 2 * np.pi * np.asarray(wavevector, dtype=float) / L
    arg = np.sum(k * (np.asarray(x, dtype=float) - lo), axis=-1) + shift
    return amplitude * np.sin(arg), amplitude * np.cos(arg)[..., None] * k


class AbelianPhaseGauge(GaugeTransform):
    """u(x) = exp(i theta(x)) 1_n with a periodic phase field theta."""

    def __init__(self, domain: ChartDomain, amplitude=0.7, wavevector=(1, 1), shift=0.3, fiber_dim=1, id="abelian-phase"):
        self.domain, self.amplitude, self.wavevector, self.shift = domain, amplitude, wavevector, shift
        self.id, self.fiber_dim = id, fiber_dim

    def theta(self, x):
        return _periodic_angle(self.domain, x, self.amplitude, self.wavevector, self.shift)

    def __call__(self, x):
        th, _ = self.theta(x)
        return np.exp(1j * th)[..., None, None] * np.eye(self.fiber_dim)

    def derivative(self, x):
        th, grad = self.theta(x)
        return (1j * grad * np.exp(1j * th)[..., None])[..., None, None] * np.eye(self.fiber_dim)


class SU2RotationGauge(GaugeTransform):
    """u(x) = exp(i theta(x) n . sigma) for a fixed unit axis n and periodic angle field."""

    special = True

    def __init__(self, domain: ChartDomain, amplitude=0.6, wavevector=(1, 0), shift=0.2, axis=(0.0, 0.6, 0.8), id="su2-rotation"):
        self.domain, self.amplitude, self.wavevector, self.shift = domain, amplitude, wavevector, shift
        axis = np.asarray(axis, dtype=float)
        self.axis = axis / np.linalg.norm(axis)
        self.generator = np.einsum("k,kij->ij", self.axis, SIGMA)
        self.id, self.fiber_dim = id, 2

    def __call__(self, x):
        th, _ = _periodic_angle(self.domain, x, self.amplitude, self.wavevector, self.shift)
        return expm_antihermitian(1j * th[..., None, None] * self.generator)

    def derivative(self, x):
        th, grad = _periodic_angle(self.domain, x, self.amplitude, self.wavevector, self.shift)
        u = self(x)
        # d exp(i th G) = i dth G exp(i th G)
        Gu = self.generator @ u
        return 1j * grad[..., :, None, None] * Gu[..., None, :, :]


class GridSampledGauge(GaugeTransform):
    """Arbitrary unitaries at grid nodes (a measurable gauge); nearest-node lookup off the grid."""

    smooth = False

    def __init__(self, grid: GridSpec, values, id="grid-sampled"):
        self.grid = grid
        self.values = np.asarray(values, dtype=complex)
        self.id, self.fiber_dim = id, self.values.shape[-1]

    @classmethod
    def random(cls, grid: GridSpec, n: int, seed: int = 0, id="grid-sampled"):
        from .discrete import random_unitaries

        return cls(grid, random_unitaries(grid.size, n, np.random.default_rng(seed)), id)

    def __call__(self, x):
        dom = self.grid.domain
        x = np.asarray(x, dtype=float)
        u = np.rint((dom.wrap(x) - dom.lo) / self.grid.h).astype(np.int64)
        shape = np.asarray(self.grid.shape)
        u = np.mod(u, shape) if dom.periodic else np.clip(u, 0, shape - 1)
        flat = np.ravel_multi_index(tuple(np.moveaxis(u, -1, 0)), self.grid.shape)
        return self.values[flat]


class ProductGauge(GaugeTransform):
    def __init__(self, a: GaugeTransform, b: GaugeTransform):
        self.a, self.b = a, b
        self.id = f"{a.id}*{b.id}"
        self.fiber_dim = a.fiber_dim
        self.smooth = a.smooth and b.smooth
        self.special = a.special and b.special

    def __call__(self, x):
        return self.a(x) @ self.b(x)

    def derivative(self, x):
        if not self.smooth:
            raise NonDifferentiableGaugeError(f"gauge {self.id!r} is only sampled on a grid")
        ua, ub = self.a(x)[..., None, :, :], self.b(x)[..., None, :, :]
        return self.a.derivative(x) @ ub + ua @ self.b.derivative(x)


class InverseGauge(GaugeTransform):
    def __init__(self, a: GaugeTransform):
        self.a = a
        self.id = f"{a.id}^-1"
        self.fiber_dim, self.smooth, self.special = a.fiber_dim, a.smooth, a.special

    def __call__(self, x):
        return dagger(self.a(x))

    def derivative(self, x):
        if not self.smooth:
            raise NonDifferentiableGaugeError(f"gauge {self.id!r} is only sampled on a grid")
        return dagger(self.a.derivative(x))


class GaugedConnection(SmoothConnection):
    """A' = u A u^* + u d(u^*), projected onto anti-Hermitian matrices."""

    def __init__(self, u: GaugeTransform, base: SmoothConnection, id=None):
        group = base.group if (u.special or base.group == "u2") else ("u1" if base.fiber_dim == 1 else "u2")
        super().__init__(id or f"{u.id}.{base.id}", base.domain, base.fiber_dim, group)
        self.u, self.base = u, base

    def _components(self, x):
        U = self.u(x)[..., None, :, :]
        dU = self.u.derivative(x)
        A = self.base._components(x)
        out = U @ A @ dagger(U) + U @ dagger(dU)
        return 0.5 * (out - dagger(out))


def gauge_transform_connection(u: GaugeTransform, nabla: SmoothConnection) -> SmoothConnection:
    if not u.smooth:
        raise NonDifferentiableGaugeError(f"gauge {u.id!r} has no derivative; only grid-level use is supported")
    if u.fiber_dim != nabla.fiber_dim:
        raise ValueError("gauge and connection fiber dimensions differ")
    return GaugedConnection(u, nabla)


def holonomy_covariance_check(u: GaugeTransform, nabla: SmoothConnection, gamma: Curve, refine: int = 4) -> float:
    """|| Hol(gamma, u.nabla) - u(end) Hol(gamma, nabla) u(start)^* ||."""
    gauged = gauge_transform_connection(u, nabla)
    H1 = holonomy(gauged, gamma, refine).matrix
    H2 = holonomy(nabla, gamma, refine).matrix
    return op_norm(H1 - u(gamma.end) @ H2 @ dagger(u(gamma.start)))


def gauge_operator(u: GaugeTransform, grid: GridSpec) -> RepresentationOperator:
    """Pointwise multiplication by u(m) on grid sections."""
    blocks = u(grid.nodes)
    n = blocks.shape[-1]
    P = grid.size
    rows = np.repeat(np.arange(P * n).reshape(P, n, 1), n, axis=2)
    cols = np.repeat(np.arange(P * n).reshape(P, 1, n), n, axis=1)
    M = sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(P * n, P * n))
    return RepresentationOperator(M, grid, n, (u.id, ""))


def intertwiner_residual(
    u: GaugeTransform,
    nabla1: SmoothConnection,
    nabla2: SmoothConnection,
    test_elements: Sequence,
    grid: GridSpec,
    kmax: int = 2,
    iters: int = 200,
) -> float:
    """max over test elements of || U phi_2(a) U^* - phi_1(a) || on resolved modes."""
    U = gauge_operator(u, grid)
    Ustar = RepresentationOperator(U.matrix.conj().T, grid, U.fiber_dim, (f"{u.id}^*", ""))
    r1, r2 = Representer(grid, nabla1), Representer(grid, nabla2)
    basis = smooth_basis(grid, nabla1.fiber_dim, kmax)
    worst = 0.0
    for a in test_elements:
        D = U @ r2.element(a) @ Ustar - r1.element(a)
        worst = max(worst, operator_norm_estimate(D, iters, basis=basis).value)
    return worst


def wilson_traces(nabla: SmoothConnection, loops: Sequence[Curve], refine: int = 16) -> np.ndarray:
    """Traces of loop holonomies; gauge invariant for loops sharing a basepoint."""
    return np.array([np.trace(holonomy(nabla, g, refine).matrix) for g in loops])


def wilson_invariance(u: GaugeTransform, nabla: SmoothConnection, loops: Sequence[Curve], refine: int = 16) -> float:
    t1 = wilson_traces(nabla, loops, refine)
    t2 = wilson_traces(gauge_transform_connection(u, nabla), loops, refine)
    return float(np.max(np.abs(t1 - t2), initial=0.0))
