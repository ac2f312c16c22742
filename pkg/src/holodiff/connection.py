"""Unitary connections as matrix-valued 1-forms and their holonomies.

Convention: nabla = d + A, so parallel transport along gamma solves
U'(t) = -A(gamma(t))(gamma'(t)) U(t), U(0) = I, and for gamma2 traversed
first, Hol(gamma1 . gamma2) = Hol(gamma1) Hol(gamma2).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import ChartDomain, Curve

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
GROUPS = ("u1", "su2", "u2")


class EndpointMismatchError(ValueError):
    pass


class OpenCurveError(ValueError):
    pass


# ---------------------------------------------------------------------------
# batched matrix helpers


def expm_antihermitian(M: np.ndarray) -> np.ndarray:
    """exp of a batch of anti-Hermitian 1x1 or 2x2 matrices, in closed form."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[-1]
    if n == 1:
        return np.exp(M)
    if n != 2:
        from scipy.linalg import expm

        flat = M.reshape(-1, n, n)
        return np.stack([expm(m) for m in flat]).reshape(M.shape)
    H = -1j * M  # Hermitian, = alpha I + a . sigma
    alpha = 0.5 * np.real(H[..., 0, 0] + H[..., 1, 1])
    a1, a2 = np.real(H[..., 0, 1]), -np.imag(H[..., 0, 1])
    a3 = 0.5 * np.real(H[..., 0, 0] - H[..., 1, 1])
    r = np.sqrt(a1 * a1 + a2 * a2 + a3 * a3)
    c, s = np.cos(r), np.sinc(r / np.pi)  # sin(r) / r
    ph = np.exp(1j * alpha)
    out = np.empty(M.shape, dtype=complex)
    out[..., 0, 0] = ph * (c + 1j * s * a3)
    out[..., 1, 1] = ph * (c - 1j * s * a3)
    out[..., 0, 1] = ph * (1j * s * (a1 - 1j * a2))
    out[..., 1, 0] = ph * (1j * s * (a1 + 1j * a2))
    return out


def polar_unitary(U: np.ndarray) -> np.ndarray:
    """Nearest unitary (polar factor) of each matrix in a batch."""
    U = np.asarray(U, dtype=complex)
    if U.shape[-1] == 1:
        return U / np.abs(U)
    W, _, Vh = np.linalg.svd(U)
    return W @ Vh


def dagger(U):
    return np.conj(np.swapaxes(U, -1, -2))


def unitarity_defect(U) -> float:
    U = np.asarray(U, dtype=complex)
    eye = np.eye(U.shape[-1])
    return float(np.max(np.linalg.norm(dagger(U) @ U - eye, ord=2, axis=(-2, -1)), initial=0.0))


def op_norm(M) -> float:
    M = np.asarray(M, dtype=complex)
    return float(np.max(np.linalg.norm(M, ord=2, axis=(-2, -1)), initial=0.0))


# ---------------------------------------------------------------------------
# connections


def pauli_coefficients(A: np.ndarray) -> np.ndarray:
    """Real c with A = i c0 (n = 1) or A = i (c0 I + c . sigma) (n = 2)."""
    H = -1j * np.asarray(A, dtype=complex)
    if H.shape[-1] == 1:
        return np.real(H[..., 0, 0])[..., None]
    if H.shape[-1] != 2:
        raise ValueError("Pauli coefficients exist for n <= 2 only")
    return np.stack(
        [
            0.5 * np.real(H[..., 0, 0] + H[..., 1, 1]),
            np.real(H[..., 0, 1]),
            -np.imag(H[..., 0, 1]),
            0.5 * np.real(H[..., 0, 0] - H[..., 1, 1]),
        ],
        axis=-1,
    )


class SmoothConnection:
    """A u(n)-valued 1-form on a chart.

    Subclasses implement ``_components(x)`` returning shape ``(..., d, n, n)``
    at points already reduced into the chart.
    """

    id = "connection"
    fiber_dim = 1
    group = "u1"
    fd_offset = 1e-5

    def __init__(self, id: str, domain: ChartDomain, fiber_dim: int, group: Optional[str] = None):
        if fiber_dim not in (1, 2):
            raise ValueError("fiber dimension must be 1 or 2")
        self.id, self.domain, self.fiber_dim = id, domain, fiber_dim
        self.group = group or ("u1" if fiber_dim == 1 else "su2")
        if self.group not in GROUPS:
            raise ValueError(f"unknown group {self.group!r}")

    def components(self, x) -> np.ndarray:
        x = self.domain.wrap(np.asarray(x, dtype=float))
        return self._components(x)

    def _components(self, x):
        raise NotImplementedError

    def contract(self, x, v) -> np.ndarray:
        """A(x)(v) for tangent vectors ``v`` at ``x``."""
        v = np.asarray(v, dtype=float)
        A = self.components(x)
        out = v[..., 0, None, None] * A[..., 0, :, :]
        for k in range(1, v.shape[-1]):
            out = out + v[..., k, None, None] * A[..., k, :, :]
        return out

    def pauli(self, x) -> np.ndarray:
        """Pauli coefficients of every component, shape (..., d, 1 or 4)."""
        x = self.domain.wrap(np.asarray(x, dtype=float))
        return self._pauli(x)

    def _pauli(self, x):
        return pauli_coefficients(self._components(x))

    def pauli_contract(self, x, v) -> np.ndarray:
        """Pauli coefficients of A(x)(v)."""
        v = np.asarray(v, dtype=float)
        const = getattr(self, "_pauli_const", None)
        if const is not None:
            return v @ const
        c = self.pauli(x)
        out = v[..., 0, None] * c[..., 0, :]
        for k in range(1, v.shape[-1]):
            out = out + v[..., k, None] * c[..., k, :]
        return out

    def curvature(self, x) -> np.ndarray:
        """F_{mu nu} = d_mu A_nu - d_nu A_mu + [A_mu, A_nu], shape (..., d, d, n, n)."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        A = self.components(x)
        dA = np.empty(x.shape[:-1] + (d, d, self.fiber_dim, self.fiber_dim), dtype=complex)
        for mu in range(d):
            e = np.zeros(d)
            e[mu] = self.fd_offset
            dA[..., mu, :, :, :] = (self.components(x + e) - self.components(x - e)) / (2 * self.fd_offset)
        F = dA - np.swapaxes(dA, -4, -3)
        F = F + np.einsum("...aij,...bjk->...abik", A, A) - np.einsum("...bij,...ajk->...abik", A, A)
        return F

    def check_invariants(self, x, tol=1e-12) -> bool:
        A = self.components(x)
        ok = np.max(np.abs(A + dagger(A)), initial=0.0) <= tol
        if self.group == "su2":
            ok = ok and np.max(np.abs(np.trace(A, axis1=-2, axis2=-1)), initial=0.0) <= tol
        return bool(ok)

    def __repr__(self):
        return f"{type(self).__name__}({self.id!r}, n={self.fiber_dim})"


class TrivialConnection(SmoothConnection):
    def __init__(self, domain, fiber_dim=2, id="trivial"):
        super().__init__(id, domain, fiber_dim)
        self._pauli_const = np.zeros((domain.dimension, 1 if fiber_dim == 1 else 4))

    def _components(self, x):
        d, n = x.shape[-1], self.fiber_dim
        return np.zeros(x.shape[:-1] + (d, n, n), dtype=complex)


class ConstantConnection(SmoothConnection):
    """A_mu = constant anti-Hermitian matrices."""

    def __init__(self, domain, matrices, id="constant", group=None):
        mats = np.asarray(matrices, dtype=complex)
        if mats.ndim == 1:
            mats = mats[:, None, None]
        super().__init__(id, domain, mats.shape[-1], group)
        self.matrices = mats
        if mats.shape[-1] <= 2:
            self._pauli_const = pauli_coefficients(mats)

    def _components(self, x):
        return np.broadcast_to(self.matrices, x.shape[:-1] + self.matrices.shape).copy()


class LinearCoefficientConnection(SmoothConnection):
    """A_mu(x) = i * (sum_nu C[mu, nu] (x_nu - c_nu)) * T with T Hermitian."""

    def __init__(self, domain, coefficients, generator=None, center=None, id="linear-coefficient", group=None):
        C = np.asarray(coefficients, dtype=float)
        T = np.eye(1) if generator is None else np.asarray(generator, dtype=complex)
        if np.max(np.abs(T - T.conj().T)) > 1e-14:
            raise ValueError("generator must be Hermitian")
        super().__init__(id, domain, T.shape[0], group)
        self.C, self.T = C, T
        self.center = np.zeros(C.shape[1]) if center is None else np.asarray(center, dtype=float)

    def _components(self, x):
        coeff = (x - self.center) @ self.C.T
        return 1j * coeff[..., None, None] * self.T

    def _pauli(self, x):
        coeff = (x - self.center) @ self.C.T
        return coeff[..., None] * pauli_coefficients(1j * self.T)


class ConstantCurvatureAbelian(LinearCoefficientConnection):
    """A = (i B / 2)(-(y - cy) dx + (x - cx) dy) times a Hermitian generator; dA = i B dx^dy."""

    def __init__(self, domain, B, center=(0.0, 0.0), generator=None, id="constant-curvature-abelian", group=None):
        d = domain.dimension
        C = np.zeros((d, d))
        C[0, 1], C[1, 0] = -B / 2, B / 2
        c = np.zeros(d)
        c[:2] = center
        super().__init__(domain, C, generator, c, id=id, group=group or ("u1" if generator is None else "u2"))
        self.B = B


class SU2TwoAxis(SmoothConnection):
    """A = i (a sigma1 dx + b sigma2 dy)."""

    def __init__(self, domain, a, b, id="su2-two-axis"):
        super().__init__(id, domain, 2, "su2")
        self.a, self.b = a, b
        mats = np.zeros((domain.dimension, 2, 2), dtype=complex)
        mats[0], mats[1] = 1j * a * SIGMA[0], 1j * b * SIGMA[1]
        self.matrices = mats
        self._pauli_const = pauli_coefficients(mats)

    def _components(self, x):
        return np.broadcast_to(self.matrices, x.shape[:-1] + self.matrices.shape).copy()


class PeriodicSU2(SmoothConnection):
    """A = i (a sin(2 pi y / Ly) sigma1 dx + b cos(2 pi x / Lx) sigma2 dy + c sigma3 dx): periodic, non-flat."""

    def __init__(self, domain, a, b, c=0.0, id="periodic-su2"):
        super().__init__(id, domain, 2, "su2")
        self.a, self.b, self.c = a, b, c

    def _components(self, x):
        L, lo = self.domain.extent, self.domain.lo
        out = np.zeros(x.shape[:-1] + (x.shape[-1], 2, 2), dtype=complex)
        sy = np.sin(2 * np.pi * (x[..., 1] - lo[1]) / L[1])
        cx = np.cos(2 * np.pi * (x[..., 0] - lo[0]) / L[0])
        out[..., 0, :, :] = 1j * (self.a * sy)[..., None, None] * SIGMA[0] + 1j * self.c * SIGMA[2]
        out[..., 1, :, :] = 1j * (self.b * cx)[..., None, None] * SIGMA[1]
        return out

    def _pauli(self, x):
        L, lo = self.domain.extent, self.domain.lo
        out = np.zeros(x.shape[:-1] + (x.shape[-1], 4))
        out[..., 0, 1] = self.a * np.sin(2 * np.pi * (x[..., 1] - lo[1]) / L[1])
        out[..., 0, 3] = self.c
        out[..., 1, 2] = self.b * np.cos(2 * np.pi * (x[..., 0] - lo[0]) / L[0])
        return out


class PeriodicAbelian(SmoothConnection):
    """A = i (a sin(2 pi y / Ly) dx + b cos(2 pi x / Lx) dy)."""

    def __init__(self, domain, a, b, id="periodic-u1"):
        super().__init__(id, domain, 1, "u1")
        self.a, self.b = a, b

    def _components(self, x):
        L, lo = self.domain.extent, self.domain.lo
        out = np.zeros(x.shape[:-1] + (x.shape[-1], 1, 1), dtype=complex)
        out[..., 0, 0, 0] = 1j * self.a * np.sin(2 * np.pi * (x[..., 1] - lo[1]) / L[1])
        out[..., 1, 0, 0] = 1j * self.b * np.cos(2 * np.pi * (x[..., 0] - lo[0]) / L[0])
        return out

    def _pauli(self, x):
        L, lo = self.domain.extent, self.domain.lo
        out = np.zeros(x.shape[:-1] + (x.shape[-1], 1))
        out[..., 0, 0] = self.a * np.sin(2 * np.pi * (x[..., 1] - lo[1]) / L[1])
        out[..., 1, 0] = self.b * np.cos(2 * np.pi * (x[..., 0] - lo[0]) / L[0])
        return out


class DiagonalAbelian(SmoothConnection):
    """diag(A1, A2) built from two u(1) connections."""

    def __init__(self, first: SmoothConnection, second: SmoothConnection, id=None):
        if first.fiber_dim != 1 or second.fiber_dim != 1:
            raise ValueError("DiagonalAbelian needs two u(1) connections")
        super().__init__(id or f"diag({first.id},{second.id})", first.domain, 2, "u2")
        self.parts = (first, second)

    def _components(self, x):
        a1 = self.parts[0]._components(x)[..., 0, 0]
        a2 = self.parts[1]._components(x)[..., 0, 0]
        out = np.zeros(a1.shape + (2, 2), dtype=complex)
        out[..., 0, 0], out[..., 1, 1] = a1, a2
        return out

    def _pauli(self, x):
        a = self.parts[0]._pauli(x)[..., 0]
        b = self.parts[1]._pauli(x)[..., 0]
        z = np.zeros_like(a)
        return np.stack([0.5 * (a + b), z, z, 0.5 * (a - b)], axis=-1)


class FrameProjectedConnection(SmoothConnection):
    """The u(1) connection A_jj in a constant unitary frame V: (V^dag A V)_{jj}."""

    def __init__(self, base: SmoothConnection, frame, index: int, id=None):
        super().__init__(id or f"{base.id}[{index}]", base.domain, 1, "u1")
        self.base, self.frame, self.index = base, np.asarray(frame, dtype=complex), index

    def _components(self, x):
        A = self.base._components(x)
        v = self.frame[:, self.index]
        a = np.einsum("i,...ij,j->...", v.conj(), A, v)
        a = 1j * np.imag(a)  # anti-Hermitian projection of a scalar
        return a[..., None, None]


# ---------------------------------------------------------------------------
# holonomy


@dataclass(frozen=True)
class HolonomyResult:
    matrix: np.ndarray
    curve_id: str
    connection_id: str


def transport_step(nabla: SmoothConnection, x0, x1) -> np.ndarray:
    """exp(-A(midpoint)(x1 - x0)) for batches of chords."""
    x0, x1 = np.asarray(x0, dtype=float), np.asarray(x1, dtype=float)
    M = -nabla.contract(0.5 * (x0 + x1), x1 - x0)
    return expm_antihermitian(M)


def path_product(nabla: SmoothConnection, points: np.ndarray, refine: int = 1) -> np.ndarray:
    """Path-ordered product over a polyline (samples along axis 0), later chords on the left.

    ``points`` may carry extra batch axes after the sample axis: shape (S, ..., d).
    """
    points = np.asarray(points, dtype=float)
    n = nabla.fiber_dim
    U = np.broadcast_to(np.eye(n, dtype=complex), points.shape[1:-1] + (n, n)).copy()
    for k in range(points.shape[0] - 1):
        a, b = points[k], points[k + 1]
        for j in range(refine):
            p = a + (b - a) * (j / refine)
            q = a + (b - a) * ((j + 1) / refine)
            U = transport_step(nabla, p, q) @ U
    return U


def holonomy(nabla: SmoothConnection, gamma: Curve, refine: int = 1) -> HolonomyResult:
    """Parallel transport from gamma's start to its end, re-unitarized."""
    if gamma.points.shape[-1] != nabla.domain.dimension:
        raise ValueError("curve and connection live on charts of different dimension")
    U = polar_unitary(path_product(nabla, gamma.points, refine))
    return HolonomyResult(U, gamma.id, nabla.id)


def holonomy_compose_check(nabla: SmoothConnection, gamma1: Curve, gamma2: Curve, tol: float = 1e-9) -> float:
    """|| Hol(gamma1 . gamma2) - Hol(gamma1) Hol(gamma2) || with gamma2 traversed first."""
    if np.linalg.norm(nabla.domain.displacement(gamma2.end, gamma1.start)) > tol:
        raise EndpointMismatchError("gamma2 must end where gamma1 starts")
    g1 = gamma1
    if not np.allclose(gamma2.end, gamma1.start, atol=tol):
        # torus: shift gamma1 by the lattice vector so the polyline is continuous
        shift = gamma2.end - gamma1.start
        g1 = Curve(gamma1.t, gamma1.points + shift, gamma1.id)
    joined = gamma2.then(g1, tol=tol)
    H = holonomy(nabla, joined).matrix
    H1, H2 = holonomy(nabla, gamma1).matrix, holonomy(nabla, gamma2).matrix
    return op_norm(H - H1 @ H2)


def _triangle_rule():
    # degree-5 Dunavant rule; weights sum to 1 (multiply by the triangle area)
    a, b = 0.059715871789770, 0.470142064105115
    c, d = 0.797426985353087, 0.101286507323456
    pts = np.array(
        [
            [1 / 3, 1 / 3],
            [b, b], [a, b], [b, a],
            [d, d], [c, d], [d, c],
        ]
    )
    w = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
    return pts, w


def enclosed_flux(nabla: SmoothConnection, loop: Curve) -> complex:
    """Integral of the abelian curvature F_xy over the region bounded by ``loop``.

    Fan triangulation from the vertex centroid with signed areas, so the
    orientation of the loop carries through. Exact for star-shaped regions.
    """
    pts = loop.points[:, :2]
    c = pts[:-1].mean(axis=0)
    ref, w = _triangle_rule()
    total = 0.0 + 0.0j
    p, q = pts[:-1], pts[1:]
    e1, e2 = p - c, q - c
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]  # twice signed area
    for (s, t), wk in zip(ref, w):
        x = c + s * e1 + t * e2
        full = np.zeros((len(x), nabla.domain.dimension))
        full[:, :2] = x
        if nabla.domain.dimension > 2:
            full[:, 2:] = loop.points[0, 2:]
        F = nabla.curvature(full)[..., 0, 1, 0, 0]
        total += np.sum(wk * F * 0.5 * area2)
    return total


def _wrap_phase(p):
    return float(np.angle(np.exp(1j * p)))


def loop_phase_stokes_check(nabla: SmoothConnection, loop: Curve, tol: float = 1e-9):
    """(arg Hol(loop), oracle phase from the enclosed curvature flux), both in (-pi, pi]."""
    if nabla.fiber_dim != 1:
        raise ValueError("Stokes check needs a u(1) connection")
    if not loop.is_closed(tol):
        raise OpenCurveError("loop is not closed")
    phase = float(np.angle(holonomy(nabla, loop).matrix[0, 0]))
    flux = enclosed_flux(nabla, loop)
    # Hol = exp(-oint A) = exp(-flux)
    return phase, _wrap_phase(-np.imag(flux))


def rectangle_loop(base, width, height, samples_per_edge=256, id=None) -> Curve:
    """Counter-clockwise (for positive width*height) coordinate rectangle based at ``base``."""
    base = np.asarray(base, dtype=float)
    d = base.size
    ex, ey = np.zeros(d), np.zeros(d)
    ex[0], ey[1] = width, height
    verts = [base, base + ex, base + ex + ey, base + ey, base]
    return Curve.polygon(verts, samples_per_edge, id=id or f"rect({width:g},{height:g})")
