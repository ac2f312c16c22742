"""Holonomy-group commutants, reducible splittings and the counting vs L^2 norm probe."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import null_space

from .connection import FrameProjectedConnection, SmoothConnection, dagger, holonomy, rectangle_loop, unitarity_defect
from .flow_algebra import Bump, FlowWord
from .geometry import BOX, ChartDomain, Curve
from .representation import (
    GridSpec,
    Representer,
    RepresentationOperator,
    interpolation_matrix,
    operator_norm_estimate,
    smooth_basis,
)

IRREDUCIBLE = "irreducible"
REDUCIBLE = "reducible-with-splitting"
INCONCLUSIVE = "inconclusive"


class SupportLeakageWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    """The transported test support spans too few grid cells for a trustworthy estimate."""


MIN_CELLS = 7.0


@dataclass
class HolonomySample:
    basepoint: np.ndarray
    loops: List[Curve]
    matrices: List[np.ndarray]

    def max_defect(self) -> float:
        return max((unitarity_defect(U) for U in self.matrices), default=0.0)


def holonomy_group_sample(
    nabla: SmoothConnection, basepoint, loop_family_size: int = 8, seed: int = 0, samples_per_edge: int = 128, refine: int = 2
) -> HolonomySample:
    """Holonomies of random coordinate rectangles at the basepoint plus products of random pairs."""
    rng = np.random.default_rng(seed)
    base = np.asarray(basepoint, dtype=float)
    ext = nabla.domain.extent
    loops, mats = [], []
    for k in range(loop_family_size):
        w, h = rng.uniform(0.1, 0.4, size=2) * ext[:2] * rng.choice([-1.0, 1.0], size=2)
        if not nabla.domain.periodic:
            # keep the rectangle inside a box chart
            w = np.clip(base[0] + w, nabla.domain.lo[0], nabla.domain.hi[0]) - base[0]
            h = np.clip(base[1] + h, nabla.domain.lo[1], nabla.domain.hi[1]) - base[1]
        loop = rectangle_loop(base, w, h, samples_per_edge, id=f"loop{k}")
        loops.append(loop)
        mats.append(holonomy(nabla, loop, refine).matrix)
    m = len(loops)
    for k in range(m):
        i, j = rng.integers(0, m, size=2)
        loops.append(loops[i].then(loops[j]))
        mats.append(mats[j] @ mats[i])
    return HolonomySample(base, loops, mats)


def _commutant_system(matrices) -> np.ndarray:
    n = matrices[0].shape[-1]
    I = np.eye(n)
    # row-major vec: vec(U M - M U) = (U (x) I - I (x) U^T) vec(M)
    return np.vstack([np.kron(U, I) - np.kron(I, U.T) for U in matrices])


def commutant_dimension(matrices: Sequence[np.ndarray], cutoff: float = 1e-8) -> int:
    """Complex dimension of {M : M U = U M for all U}."""
    if len(matrices) == 0:
        raise ValueError("commutant of an empty set is undefined here")
    A = _commutant_system([np.asarray(U, dtype=complex) for U in matrices])
    s = np.linalg.svd(A, compute_uv=False)
    n2 = A.shape[1]
    rank = int(np.sum(s > cutoff))
    return n2 - rank


def commutant_basis(matrices, cutoff: float = 1e-8) -> List[np.ndarray]:
    A = _commutant_system([np.asarray(U, dtype=complex) for U in matrices])
    n = int(round(np.sqrt(A.shape[1])))
    N = null_space(A, rcond=cutoff / max(np.linalg.norm(A, 2), 1e-300))
    return [N[:, k].reshape(n, n) for k in range(N.shape[1])]


@dataclass
class IrreducibilityResult:
    verdict: str
    commutant_dim: int
    sample: HolonomySample
    frame: Optional[np.ndarray] = None
    split: List[SmoothConnection] = field(default_factory=list)
    leakage: float = 0.0
    notes: str = ""

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "commutant_dim": self.commutant_dim, "leakage": self.leakage, "notes": self.notes}
        if self.frame is not None:
            out["frame"] = [[[z.real, z.imag] for z in row] for row in self.frame]
            out["split"] = [c.id for c in self.split]
        return out


def irreducibility_verdict(
    nabla: SmoothConnection, basepoint, budget: int = 8, seed: int = 0, probe_points: int = 256, frame_tol: float = 1e-6
) -> IrreducibilityResult:
    """Schur test on a sampled holonomy group, with a splitting when it looks reducible.

    A one-dimensional commutant certifies irreducibility. Otherwise a common
    eigenframe V is taken from a random self-adjoint element of the commutant;
    the split is accepted only when V diagonalizes every sampled holonomy and
    the connection itself at random probe points.
    """
    sample = holonomy_group_sample(nabla, basepoint, budget, seed)
    dim = commutant_dimension(sample.matrices)
    if dim == 1:
        return IrreducibilityResult(IRREDUCIBLE, dim, sample)
    rng = np.random.default_rng(seed + 1)
    basis = commutant_basis(sample.matrices)
    M = sum((rng.standard_normal() + 1j * rng.standard_normal()) * B for B in basis)
    H = M + dagger(M)
    _, V = np.linalg.eigh(H)
    off = max(float(np.max(np.abs(_offdiag(dagger(V) @ U @ V)))) for U in sample.matrices)
    if off > 1e-8:
        return IrreducibilityResult(INCONCLUSIVE, dim, sample, V, notes=f"holonomies not simultaneously diagonal ({off:.2e})")
    dom = nabla.domain
    x = dom.lo + rng.random((probe_points, dom.dimension)) * dom.extent
    A = nabla.components(x)
    leak = float(np.max(np.abs(_offdiag(dagger(V) @ A @ V))))
    if leak > frame_tol:
        return IrreducibilityResult(
            INCONCLUSIVE, dim, sample, V, leakage=leak, notes="sample looks reducible but no constant splitting frame"
        )
    split = [FrameProjectedConnection(nabla, V, j) for j in range(nabla.fiber_dim)]
    return IrreducibilityResult(REDUCIBLE, dim, sample, V, split, leak)


def _offdiag(M):
    n = M.shape[-1]
    return M * (1 - np.eye(n))


def splitting_reconstruction_residual(
    nabla: SmoothConnection, result: IrreducibilityResult, words: Sequence[FlowWord], grid: GridSpec, iters: int = 100
) -> float:
    """max_F || V^* phi_nabla(F) V - (phi_1(F) (+) phi_2(F)) || with V the constant splitting frame."""
    if result.verdict != REDUCIBLE:
        raise ValueError("no splitting to reconstruct")
    n, P = nabla.fiber_dim, grid.size
    Vb = sp.kron(sp.identity(P), sp.csr_matrix(result.frame), format="csr")
    full = Representer(grid, nabla)
    parts = [Representer(grid, c) for c in result.split]
    worst = 0.0
    for F in words:
        lhs = Vb.conj().T @ full.word(F).matrix @ Vb
        # interleave the scalar blocks into node * n + j ordering
        rhs = sp.csr_matrix((P * n, P * n), dtype=complex)
        for j, rep in enumerate(parts):
            S = sp.csr_matrix(([1.0] * P, (np.arange(P) * n + j, np.arange(P))), shape=(P * n, P))
            rhs = rhs + S @ rep.word(F).matrix @ S.T
        D = RepresentationOperator(lhs - rhs, grid, n, (repr(F), nabla.id))
        worst = max(worst, operator_norm_estimate(D, iters).value)
    return worst


# ---------------------------------------------------------------------------
# counting vs L^2 norm probe


@dataclass
class NormGapProbeConfig:
    coefficients: Sequence[float]
    matrices: Sequence[np.ndarray]
    resolution: int = 64
    half_width: float = 2.0
    iters: int = 200
    kmax: int = 2
    support_radius: float = 0.9

    def __post_init__(self):
        self.coefficients = [float(a) for a in self.coefficients]
        self.matrices = [np.asarray(g, dtype=float).reshape(2, 2) for g in self.matrices]
        if len(self.coefficients) != len(self.matrices) or not self.coefficients:
            raise ValueError("need one positive coefficient per group element")
        if any(a <= 0 for a in self.coefficients):
            raise ValueError("coefficients must be positive")
        if any(np.linalg.det(g) <= 0 for g in self.matrices):
            raise ValueError("group elements must have positive determinant")
        if self.support_radius > 0.5 * self.half_width:
            raise ValueError("test sections must live in the inner half of the box")

    def grid(self) -> GridSpec:
        L = self.half_width
        return GridSpec(ChartDomain((-L, -L), (L, L), BOX), (self.resolution, self.resolution))


def counting_norm(cfg: NormGapProbeConfig) -> float:
    """Norm of sum a_i psi(g_i) on the invariant line C 1_0; every g_i fixes the origin."""
    origin = np.zeros(2)
    for g in cfg.matrices:
        if np.any(origin @ g != 0):
            raise ValueError("group element does not fix the origin")
    return math.fsum(cfg.coefficients)


def l2_operator(cfg: NormGapProbeConfig, grid: GridSpec) -> RepresentationOperator:
    """sum a_i pi(g_i), (pi(g) xi)(x) = |det g|^{-1/2} xi(x g^{-1}), zero outside the box."""
    x = grid.nodes
    M = None
    for a, g in zip(cfg.coefficients, cfg.matrices):
        term = (a / np.sqrt(np.linalg.det(g))) * interpolation_matrix(grid, x @ np.linalg.inv(g), mode="zero")
        M = term if M is None else M + term
    return RepresentationOperator(M.astype(complex), grid, 1, ("sum a_i pi(g_i)", "l2"))


def norm_gap_probe(cfg: NormGapProbeConfig, seed: int = 0) -> dict:
    grid = cfg.grid()
    L = cfg.half_width
    r = cfg.support_radius
    for g in cfg.matrices:
        # the section support {|x| <= r} is carried to {x g}; it must stay inside the box
        reach = r * np.linalg.norm(g, 2)
        if reach >= L:
            warnings.warn(f"group element {g.tolist()} pushes the test support outside the grid", SupportLeakageWarning)
    # below ~7 cells across the squeezed support, cubic interpolation inflates the estimate
    h = 2 * L / cfg.resolution
    cells = min(r * np.linalg.svd(g, compute_uv=False)[-1] for g in cfg.matrices) / h
    if cells < MIN_CELLS:
        warnings.warn(f"squeezed test support spans only {cells:.1f} grid cells; refine the grid", ResolutionWarning)
    window = Bump("window", (0.0, 0.0), r, plateau=0.5 * r)
    basis = smooth_basis(grid, 1, cfg.kmax, window=window)
    T = l2_operator(cfg, grid)
    est = operator_norm_estimate(T, cfg.iters, seed, basis=basis, compress=False)
    total = counting_norm(cfg)
    return {
        "counting_norm": total,
        "l2_estimate": est.value,
        "gap": total - est.value,
        "iters": est.iters,
        "last_delta": est.last_delta,
        "grid": grid.label(),
        "support_cells": float(cells),
    }
