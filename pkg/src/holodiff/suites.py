"""Experiment suites run by the command line tool.

Each suite reads its options (merged over ``DEFAULT_OPTIONS``), records hard
checks, free-form records and plot-ready series on a ``SuiteContext``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np

from .catalogue import Registry
from .connection import (
    ConstantConnection,
    ConstantCurvatureAbelian,
    SU2TwoAxis,
    expm_antihermitian,
    holonomy,
    holonomy_compose_check,
    loop_phase_stokes_check,
    op_norm,
    rectangle_loop,
)
from .discrete import (
    build_orbit,
    discrete_represent,
    generalized_gauge_solve,
    point_gauge_transform,
    point_projection,
    random_generalized_connection,
    random_unitaries,
)
from .flow_algebra import AlgebraElement, FlowWord, Scaled, is_local_reparametrization, ideal_residual
from .gauge import gauge_transform_connection, holonomy_covariance_check, intertwiner_residual, wilson_invariance, wilson_traces
from .geometry import BOX, ChartDomain, Curve, LinearField, flow_at, flow_trajectory
from .representation import GridSection, GridSpec, Representer, operator_norm_estimate, radon_nikodym_factor, smooth_basis
from .spectrum import (
    IRREDUCIBLE,
    REDUCIBLE,
    NormGapProbeConfig,
    irreducibility_verdict,
    norm_gap_probe,
    splitting_reconstruction_residual,
)

ROUNDOFF_FLOOR = 1e-11


@dataclass
class SuiteContext:
    registry: Registry
    options: Dict[str, Any]
    seed: int
    threads: int = 1
    checks: List[dict] = field(default_factory=list)
    records: List[dict] = field(default_factory=list)
    series: List[tuple] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    log: List[str] = field(default_factory=list)

    def check(self, name: str, value: float, tol: float, op: str = "<") -> bool:
        value = float(value)
        ok = {"<": value < tol, "<=": value <= tol, ">=": value >= tol, "==": value == tol}[op]
        self.checks.append({"name": name, "value": value, "tolerance": float(tol), "op": op, "passed": bool(ok)})
        self.log.append(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} {op} {tol:.3e}")
        return ok

    def flag(self, name: str, ok: bool, detail: str = "") -> bool:
        self.checks.append({"name": name, "value": float(bool(ok)), "tolerance": 1.0, "op": "==", "passed": bool(ok)})
        self.log.append(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}")
        return bool(ok)

    def record(self, **kw) -> None:
        self.records.append(kw)

    def point(self, series: str, x, y) -> None:
        self.series.append((series, float(x), float(y)))

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)
        self.log.append(f"WARN {msg}")

    def map(self, fn: Callable, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as ex:
            return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# helpers


def smooth_sections(grid: GridSpec, n: int) -> List[GridSection]:
    """A fixed family of smooth sections used as unitarity probes."""
    x = (grid.nodes - grid.domain.lo) / grid.domain.extent
    X, Y = 2 * np.pi * x[:, 0], 2 * np.pi * x[:, 1]
    a = np.stack([np.exp(np.sin(X) + np.cos(Y)), np.cos(X + Y) + 0.3j], axis=1)
    b = np.stack([np.exp(1j * X) * (1.5 + np.sin(Y)), 0.5 * np.exp(-1j * Y) + np.cos(X - 2 * Y)], axis=1)
    if not grid.domain.periodic:
        r2 = np.sum((x - 0.5) ** 2, axis=1)
        win = np.where(r2 < 0.16, np.exp(-1.0 / np.maximum(0.16 - r2, 1e-300) + 1.0 / 0.16), 0.0)
        a, b = a * win[:, None], b * win[:, None]
    return [GridSection(grid, a[:, :n]), GridSection(grid, b[:, :n])]


def _word_label(letters) -> str:
    return "".join(f"{fid}{'' if int(s) > 0 else '^-1'}" for fid, s in letters) or "I"


def _grid(ctx: SuiteContext, N: int, metric_id=None) -> GridSpec:
    dom = ctx.registry.domain if metric_id is None else ctx.registry.domain_with_metric(metric_id)
    return GridSpec.square(dom, int(N))


def _random_element(rng, reg: Registry, functions, letters, terms=2) -> AlgebraElement:
    words = [FlowWord()] + [FlowWord.of(reg.field(l), s) for l in letters for s in (1, -1)]
    out = []
    for _ in range(terms):
        f = reg.function(functions[rng.integers(len(functions))])
        c = complex(rng.normal(), rng.normal()) / math.sqrt(2)
        out.append((Scaled(f, c), words[rng.integers(len(words))]))
    return AlgebraElement(out)


# ---------------------------------------------------------------------------
# suites


def suite_unitarity(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    lo_N, hi_N = o["resolutions"]

    def one(conn_id):
        nabla = reg.connection(conn_id)
        out = []
        for metric_id in o["metrics"]:
            errs = {}
            for N in (lo_N, hi_N):
                grid = _grid(ctx, N, metric_id)
                rep = Representer(grid, nabla)
                secs = smooth_sections(grid, nabla.fiber_dim)
                for letters in o["words"]:
                    w = reg.word(letters)
                    op = rep.word(w)
                    errs[(N, _word_label(letters))] = max(abs(op.norm_ratio(s) - 1.0) for s in secs)
            out.append((metric_id, errs))
        return conn_id, out

    for conn_id, per_metric in ctx.map(one, o["connections"]):
        for metric_id, errs in per_metric:
            for letters in o["words"]:
                wl = _word_label(letters)
                e_lo, e_hi = errs[(lo_N, wl)], errs[(hi_N, wl)]
                tag = f"{metric_id}/{conn_id}/{wl}"
                ctx.check(f"unitarity {tag} @{lo_N}", e_lo, o["tolerance"])
                floor = e_lo <= o["floor"] and e_hi <= o["floor"]
                ratio = o["shrink"] if floor else e_lo / max(e_hi, 1e-300)
                ctx.check(f"unitarity shrink {tag} {lo_N}->{hi_N}", ratio, o["shrink"], ">=")
                ctx.record(kind="unitarity", metric=metric_id, connection=conn_id, word=wl, errors={str(lo_N): e_lo, str(hi_N): e_hi}, roundoff_floor=floor)
                ctx.point(f"unitarity:{tag}", lo_N, e_lo)
                ctx.point(f"unitarity:{tag}", hi_N, e_hi)


def suite_homomorphism(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    rng = np.random.default_rng(ctx.seed)
    pairs = []
    for k in range(o["pairs"]):
        a = _random_element(rng, reg, o["functions"], o["letters"])
        b = _random_element(rng, reg, o["functions"], o["letters"])
        pairs.append((k, o["connections"][k % len(o["connections"])], a, b))
    res = {}
    for N in o["resolutions"]:
        grid = _grid(ctx, N, o["metric"])
        bases = {}
        for k, cid, a, b in pairs:
            nabla = reg.connection(cid)
            rep = Representer(grid, nabla)
            if nabla.fiber_dim not in bases:
                bases[nabla.fiber_dim] = smooth_basis(grid, nabla.fiber_dim, o["kmax"])
            Q = bases[nabla.fiber_dim]
            A, B = rep.element(a), rep.element(b)
            hom = operator_norm_estimate(rep.element(a * b) - A @ B, basis=Q).value
            adj = operator_norm_estimate(rep.element(a.adjoint()) - A.adjoint(), basis=Q).value
            res[(k, N)] = (hom, adj)
            ctx.point(f"homomorphism:pair{k}", N, hom)
            ctx.point(f"adjoint:pair{k}", N, adj)
    lo_N, hi_N = o["resolutions"][0], o["resolutions"][-1]
    hom_hi = max(res[(k, hi_N)][0] for k, *_ in pairs)
    adj_hi = max(res[(k, hi_N)][1] for k, *_ in pairs)
    ctx.check(f"homomorphism max over {len(pairs)} pairs @{hi_N}", hom_hi, o["tolerance"])
    ctx.check(f"adjoint max over {len(pairs)} pairs @{hi_N}", adj_hi, o["tolerance"])
    worst_h = worst_a = 0.0
    for k, cid, a, b in pairs:
        (h0, a0), (h1, a1) = res[(k, lo_N)], res[(k, hi_N)]
        # ratio hi/lo; pairs already at roundoff count as shrinking
        worst_h = max(worst_h, 0.0 if h1 <= o["floor"] else h1 / max(h0, 1e-300))
        worst_a = max(worst_a, 0.0 if a1 <= o["floor"] else a1 / max(a0, 1e-300))
        ctx.record(kind="homomorphism", pair=k, connection=cid, a=repr(a), b=repr(b), residuals={str(lo_N): [h0, a0], str(hi_N): [h1, a1]})
    ctx.check(f"homomorphism residual ratio {hi_N}/{lo_N} (worst pair)", worst_h, 1.0)
    ctx.check(f"adjoint residual ratio {hi_N}/{lo_N} (worst pair)", worst_a, 1.0)


def suite_ideal(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    grid = _grid(ctx, o["resolution"])
    for k, (l1, l2, fid) in enumerate(o["pairs"]):
        F1, F2, f = reg.word(l1), reg.word(l2), reg.function(fid)
        cert = is_local_reparametrization(F1, F2, f.support, o["samples"], grid.domain, seed=ctx.seed + k)
        tag = f"{_word_label(l1)}~{_word_label(l2)}.{fid}"
        ctx.flag(f"reparametrization certificate {tag}", cert.holds, "" if cert.holds else str(cert.violation))
        for cid in o["connections"]:
            r = ideal_residual(F1, F2, f, reg.connection(cid), grid)
            ctx.check(f"ideal residual {tag} [{cid}]", r, o["tolerance"])
            ctx.record(kind="ideal", pair=tag, connection=cid, residual=r)
    for l1, l2, fid in o.get("contrast", []):
        F1, F2, f = reg.word(l1), reg.word(l2), reg.function(fid)
        cert = is_local_reparametrization(F1, F2, f.support, o["samples"], grid.domain, seed=ctx.seed)
        for cid in o["connections"]:
            r = ideal_residual(F1, F2, f, reg.connection(cid), grid)
            ctx.record(kind="ideal-contrast", pair=f"{_word_label(l1)} vs {_word_label(l2)}.{fid}", connection=cid, residual=r, reparametrization=cert.holds)


def suite_radon_nikodym(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    for metric_id in o["metrics"]:
        grid = _grid(ctx, o["resolution"], metric_id)
        rep = Representer(grid)
        for letters in o["words"]:
            w = reg.word(letters)
            measured = rep.measured_factor(w)
            analytic = radon_nikodym_factor(grid.domain.metric, w, grid.nodes, grid.domain)
            diff = float(np.max(np.abs(np.sqrt(measured) - np.sqrt(analytic))))
            tag = f"{metric_id}/{_word_label(letters)}"
            ctx.check(f"sqrt k_F operator vs analytic {tag}", diff, o["tolerance"])
            ctx.flag(f"k_F > 0 at every node {tag}", bool(np.all(measured > 0) and np.all(analytic > 0)))
            ctx.record(kind="radon-nikodym", metric=metric_id, word=_word_label(letters), max_diff=diff, k_min=float(np.min(analytic)), k_max=float(np.max(analytic)))


def suite_holonomy(ctx: SuiteContext) -> None:
    o = ctx.options
    dom = ctx.registry.domain
    rng = np.random.default_rng(ctx.seed)
    # constant connections: straight segments have closed-form transport exp(-A(dx))
    consts = [SU2TwoAxis(dom, 1.0, 0.7), ConstantConnection(dom, np.array([[[0.4j]], [[-0.9j]]]))]
    worst = 0.0
    for nabla in consts:
        for _ in range(4):
            x0, dx = rng.random(2), rng.uniform(-0.4, 0.4, 2)
            seg = Curve.polygon([x0, x0 + dx], o["samples"])
            H = holonomy(nabla, seg).matrix
            exact = expm_antihermitian(-nabla.contract(x0, dx))
            worst = max(worst, op_norm(H - exact))
    ctx.check("constant-connection closed forms", worst, o["closed_form_tol"])
    # abelian Stokes on a box chart
    box = ChartDomain((-1.0, -1.0), (1.0, 1.0), BOX)
    B = o["B"]
    cc = ConstantCurvatureAbelian(box, B, (0.1, -0.2))
    worst = 0.0
    for w, h in [(0.5, 0.4), (-0.3, 0.6), (0.7, -0.2)]:
        loop = rectangle_loop((-0.3, -0.1), w, h, o["samples"])
        phase = float(np.angle(holonomy(cc, loop).matrix[0, 0]))
        expected = -B * w * h  # signed area; positive orientation gives -B * area
        worst = max(worst, abs(np.angle(np.exp(1j * (phase - expected)))))
        ctx.record(kind="stokes", width=w, height=h, phase=phase, expected=expected)
    t = np.linspace(0, 2 * np.pi, 4 * o["samples"] + 1)
    ellipse = Curve(t / t[-1], np.stack([0.2 + 0.5 * np.cos(t), -0.1 + 0.3 * np.sin(t) + 0.1 * np.sin(2 * t)], axis=1))
    arg, flux = loop_phase_stokes_check(cc, ellipse)
    worst = max(worst, abs(np.angle(np.exp(1j * (arg - flux)))))
    ctx.check("abelian Stokes phase vs B * area", worst, o["stokes_tol"])
    # reparametrization invariance on a non-abelian connection
    nabla = ctx.registry.connection(o["connection"])
    s = np.linspace(0.0, 1.0, o["samples"] * 8 + 1)
    path = lambda u: np.stack([0.2 + 0.5 * u + 0.1 * np.sin(3 * u), 0.3 + 0.4 * u**2], axis=-1)
    g1 = Curve(s, path(s))
    g2 = Curve(s, path(np.sin(0.5 * np.pi * s) ** 2))  # monotone time change
    H1, H2 = holonomy(nabla, g1, o["refine"]).matrix, holonomy(nabla, g2, o["refine"]).matrix
    ctx.check("holonomy reparametrization invariance", op_norm(H1 - H2), o["reparam_tol"])
    # composition convention
    a = Curve(s, path(s))
    b = Curve(s, a.points[-1] + np.stack([0.3 * s, -0.2 * s**2], axis=-1))
    ctx.check("holonomy composition law", holonomy_compose_check(nabla, b, a), o["closed_form_tol"])


def suite_gauge(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    dom = reg.domain
    loops = [rectangle_loop(o["basepoint"], w, h, o["samples"]) for w, h in o["loops"]]
    R = reg.field(o["trajectory_field"])
    curves = loops + [flow_trajectory(R, (0.45, 0.3), o["samples"] + 1, dom)]
    worst_cov = worst_w = 0.0
    for gid, cid in o["pairs"]:
        u, nabla = reg.gauge(gid), reg.connection(cid)
        for c in curves:
            worst_cov = max(worst_cov, holonomy_covariance_check(u, nabla, c, o["refine"]))
        worst_w = max(worst_w, wilson_invariance(u, nabla, loops))
    ctx.check("holonomy gauge covariance", worst_cov, o["covariance_tol"])
    ctx.check("Wilson-loop trace invariance", worst_w, o["wilson_tol"])
    grid = _grid(ctx, o["resolution"])
    rng = np.random.default_rng(ctx.seed)
    for gid, cid in o["intertwiner_pairs"]:
        u, nabla2 = reg.gauge(gid), reg.connection(cid)
        nabla1 = gauge_transform_connection(u, nabla2)
        els = [_random_element(rng, reg, o["functions"], o["letters"]) for _ in range(o["elements"])]
        r = intertwiner_residual(u, nabla1, nabla2, els, grid, o["kmax"])
        ctx.check(f"intertwiner residual {gid}.{cid} @{o['resolution']}", r, o["intertwiner_tol"])
        ctx.record(kind="intertwiner", gauge=gid, connection=cid, residual=r, elements=[repr(e) for e in els])
    for c1, c2 in o.get("inequivalent", []):
        t1 = wilson_traces(reg.connection(c1), loops)
        t2 = wilson_traces(reg.connection(c2), loops)
        ctx.record(kind="inequivalent", connections=[c1, c2], max_trace_difference=float(np.max(np.abs(t1 - t2))))


def suite_discrete(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    dom = reg.domain
    gens = [reg.word(l) for l in o["generators"]]
    pts = build_orbit(o["seeds"], gens, dom, cap=o["cap"])
    ctx.record(kind="orbit", points=pts.size, edges=len(pts.edges))
    cyc = build_orbit(o["seeds"][:1], [reg.word(o["cyclic_generator"])], dom, cap=o["cap"])
    ctx.check("cyclic orbit length", abs(cyc.size - o["cyclic_length"]), 0, "==")
    n = o["fiber_dim"]
    nabla = random_generalized_connection(pts, n, ctx.seed)
    words = [FlowWord()] + gens + [g.inverse() for g in gens]
    reps = {w.key(): discrete_represent(nabla, w) for w in words}
    worst_h = worst_u = worst_p = 0.0
    for w1 in words:
        for w2 in words:
            prod = discrete_represent(nabla, w1 * w2)
            worst_h = max(worst_h, float(np.max(np.abs(prod - reps[w1.key()] @ reps[w2.key()]))))
    I = np.eye(pts.size * n)
    for w in words:
        psi = reps[w.key()]
        worst_u = max(worst_u, float(np.max(np.abs(psi.conj().T @ psi - I))))
        for m in range(pts.size):
            t, _ = nabla.transport(w, m)
            lhs = psi @ point_projection(pts, m, n) @ psi.conj().T
            worst_p = max(worst_p, float(np.max(np.abs(lhs - point_projection(pts, t, n)))))
    ctx.check("psi(F1 F2) = psi(F1) psi(F2)", worst_h, o["tolerance"])
    ctx.check("psi(F) unitary", worst_u, o["tolerance"])
    ctx.check("F 1_m F^-1 = 1_F(m)", worst_p, o["tolerance"])
    U0 = random_unitaries(pts.size, n, np.random.default_rng(ctx.seed + 1))
    res = generalized_gauge_solve(nabla, point_gauge_transform(nabla, U0))
    ctx.flag("round-trip gauge solve succeeds", res.success)
    ctx.check("round-trip recovered-U edge residual", res.residual if res.success else 1.0, o["tolerance"])
    res_same = generalized_gauge_solve(nabla, nabla)
    ctx.check("identical connections give U = I", float(np.max(np.abs(res_same.U - np.eye(n)))) if res_same.success else 1.0, o["tolerance"])
    other = random_generalized_connection(pts, n, ctx.seed + 2)
    bad = generalized_gauge_solve(nabla, other)
    ok = (not bad.success) and bad.certificate is not None
    if ok:
        t1, t2 = complex(*bad.certificate["trace1"]), complex(*bad.certificate["trace2"])
        ok = abs(t1 - t2) > 1e-6
    ctx.flag("non-equivalent pair rejected with a cycle certificate", ok)
    ctx.record(kind="certificate", **(bad.certificate or {}))


def suite_irreducibility(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    grid = _grid(ctx, o["resolution"])
    words = [reg.word(l) for l in o["words"]]
    for cid, expected in o["expect"].items():
        nabla = reg.connection(cid)
        res = irreducibility_verdict(nabla, o["basepoint"], o["budget"], ctx.seed)
        ctx.flag(f"verdict {cid} = {expected}", res.verdict == expected, f"got {res.verdict} (commutant dim {res.commutant_dim})")
        if res.verdict == "inconclusive":
            ctx.warn(f"{cid}: inconclusive verdict ({res.notes})")
        ctx.record(kind="irreducibility", connection=cid, **res.to_json())
        if res.verdict == REDUCIBLE:
            r = splitting_reconstruction_residual(nabla, res, words, grid)
            ctx.check(f"block-diagonal reconstruction {cid}", r, o["reconstruction_tol"])
            # the split 1-forms against the diagonal of A (up to ordering)
            x = np.random.default_rng(ctx.seed).random((64, 2)) * reg.domain.extent + reg.domain.lo
            A = nabla.components(x)
            split = np.stack([c.components(x)[..., 0, 0] for c in res.split], axis=-1)
            if np.max(np.abs(A - A * np.eye(nabla.fiber_dim))) == 0.0:
                diag = np.stack([A[..., j, j] for j in range(nabla.fiber_dim)], axis=-1)
                err = min(float(np.max(np.abs(split - diag[..., p]))) for p in ([0, 1], [1, 0]))
                ctx.check(f"split 1-forms recover diagonal of {cid}", err, o["split_tol"])
    for gid, cid in o.get("gauged", []):
        nabla = gauge_transform_connection(reg.gauge(gid), reg.connection(cid))
        base = irreducibility_verdict(reg.connection(cid), o["basepoint"], o["budget"], ctx.seed).verdict
        res = irreducibility_verdict(nabla, o["basepoint"], o["budget"], ctx.seed)
        ctx.flag(f"verdict gauge invariant {gid}.{cid}", res.verdict == base, f"{base} vs {res.verdict}")


def suite_norm_gap(ctx: SuiteContext) -> None:
    o = ctx.options
    for k, case in enumerate(o["cases"]):
        a = case["coefficients"]
        mats = [np.asarray(g, dtype=float) for g in case["matrices"]]
        for N in o["resolutions"]:
            cfg = NormGapProbeConfig(a, mats, N, iters=o["iters"], kmax=o["kmax"])
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                out = norm_gap_probe(cfg, ctx.seed)
            for w in caught:
                ctx.warn(str(w.message))
            total = math.fsum(cfg.coefficients)
            ctx.check(f"case{k} counting norm = sum a_i @{N}", abs(out["counting_norm"] - total), 0.0, "==")
            ctx.check(f"case{k} l2 estimate <= sum a_i + slack @{N}", out["l2_estimate"] - total, o["slack"], "<=")
            if case.get("exact") is not None:
                ctx.check(f"case{k} l2 estimate exact value @{N}", abs(out["l2_estimate"] - case["exact"]), 1e-6)
            ctx.record(kind="norm-gap", case=k, resolution=N, **out)
            ctx.point(f"norm-gap:case{k}", N, out["gap"])


def suite_convergence(ctx: SuiteContext) -> None:
    o = ctx.options
    reg = ctx.registry
    dom = reg.domain
    # integrator order on the linear-field oracle
    from scipy.linalg import expm

    A = np.array([[0.3, -1.1], [0.8, -0.2]])
    X = LinearField("lin", A)
    m = np.array([[0.3, -0.2]])
    plane = ChartDomain((-10.0, -10.0), (10.0, 10.0), BOX)
    exact = (expm(A) @ m.T).T
    errs = []
    for step in o["steps"]:
        errs.append(float(np.max(np.abs(flow_at(X, m, 1.0, plane, step) - exact))))
        ctx.point("flow error vs step", step, errs[-1])
    ctx.check("integrator order (error ratio per halving)", min(e0 / e1 for e0, e1 in zip(errs, errs[1:])), 8.0, ">=")
    # holonomy substep order against an 8x reference
    nabla = reg.connection(o["connection"])
    t = np.linspace(0.0, 2 * np.pi, 33)
    loop = Curve(t / t[-1], np.stack([0.5 + 0.3 * np.cos(t), 0.5 + 0.2 * np.sin(t) + 0.05 * np.sin(2 * t)], axis=1))
    ref = holonomy(nabla, loop, 64).matrix
    e = []
    for r in (1, 2, 4):
        e.append(op_norm(holonomy(nabla, loop, r).matrix - ref))
        ctx.point("holonomy error vs refine", r, e[-1])
    ctx.check("holonomy substep order (error ratio per doubling)", min(a / b for a, b in zip(e, e[1:])), 4.0 - 1e-9, ">=")
    # unitarity error under grid refinement
    w = reg.word(o["word"])
    prev = None
    for N in o["resolutions"]:
        grid = _grid(ctx, N)
        op = Representer(grid, nabla).word(w)
        err = max(abs(op.norm_ratio(s) - 1.0) for s in smooth_sections(grid, nabla.fiber_dim))
        ctx.point("unitarity error vs resolution", N, err)
        if prev is not None:
            ctx.check(f"unitarity error ratio {N // 2}->{N}", prev / err, 4.0, ">=")
        prev = err


SUITES: Dict[str, Callable[[SuiteContext], None]] = {
    "unitarity": suite_unitarity,
    "homomorphism": suite_homomorphism,
    "ideal": suite_ideal,
    "radon-nikodym": suite_radon_nikodym,
    "holonomy": suite_holonomy,
    "gauge-equivalence": suite_gauge,
    "discrete-lqg": suite_discrete,
    "irreducibility": suite_irreducibility,
    "norm-gap": suite_norm_gap,
    "convergence": suite_convergence,
}


ROT1 = [[math.cos(1.0), -math.sin(1.0)], [math.sin(1.0), math.cos(1.0)]]
STRETCH = [[2.0, 0.0], [0.0, 0.5]]

DEFAULT_OPTIONS: Dict[str, Dict[str, Any]] = {
    "unitarity": {
        "metrics": ["flat", "conformal"],
        "connections": ["trivial", "su2", "psu2", "pu1"],
        "words": [[["R", 1]], [["S", 1]], [["E", 1], ["R", -1]]],
        "resolutions": [128, 256],
        "tolerance": 1e-2,
        "shrink": 4.0,
        "floor": ROUNDOFF_FLOOR,
    },
    "homomorphism": {
        "connections": ["psu2", "su2", "pu1"],
        "metric": "conformal",
        "letters": ["R", "S"],
        "functions": ["f", "g", "q", "q2", "one"],
        "pairs": 20,
        "resolutions": [64, 128],
        "tolerance": 5e-2,
        "kmax": 2,
        "floor": 1e-10,
    },
    "ideal": {
        "connections": ["trivial", "su2", "psu2", "pu1", "cu1", "diag"],
        "resolution": 32,
        "samples": 4,
        "tolerance": 1e-6,
        "pairs": [
            [[["R", 1]], [["Rh", 1], ["Rh", 1]], "f"],
            [[["S", 1]], [["Sh", 1], ["Sh", 1]], "g"],
            [[["E", 1]], [["Eh", 1], ["Eh", 1]], "q"],
            [[["R", 1]], [["R23", 1], ["R3", 1]], "f"],
            [[["S", 1], ["R", 1]], [["S", 1], ["Rh", 1], ["Rh", 1]], "f"],
            [[["R", 1], ["E", 1]], [["Rh", 1], ["Rh", 1], ["E", 1]], "g"],
            [[["E", 1], ["S", 1]], [["Eh", 1], ["Eh", 1], ["S", 1]], "f"],
            [[["R", -1]], [["Rh", -1], ["Rh", -1]], "g"],
            [[["S", -1], ["R", 1]], [["S", -1], ["R3", 1], ["R23", 1]], "f"],
            [[["E", 1]], [["Eh", 1], ["Eh", 1]], "f"],
        ],
        "contrast": [[[["R", 1]], [["S", 1]], "f"]],
    },
    "radon-nikodym": {
        "metrics": ["flat", "conformal"],
        "words": [[["R", 1]], [["S", 1]], [["E", 1], ["R", -1]], [["S", 1], ["E", 1]]],
        "resolution": 128,
        "tolerance": 1e-3,
    },
    "holonomy": {
        "samples": 256,
        "B": 1.3,
        "connection": "psu2",
        "refine": 4,
        "closed_form_tol": 1e-8,
        "stokes_tol": 1e-6,
        "reparam_tol": 1e-7,
    },
    "gauge-equivalence": {
        "pairs": [["grot", "psu2"], ["gphase", "su2"], ["gconst", "psu2"], ["gphase1", "pu1"]],
        "intertwiner_pairs": [["grot", "psu2"], ["gphase1", "pu1"]],
        "inequivalent": [["su2", "psu2"]],
        "basepoint": [0.3, 0.25],
        "loops": [[0.4, 0.3], [-0.3, 0.5], [0.25, -0.35]],
        "trajectory_field": "R",
        "samples": 256,
        "refine": 4,
        "resolution": 128,
        "letters": ["R", "S"],
        "functions": ["f", "q", "one"],
        "elements": 2,
        "kmax": 2,
        "covariance_tol": 1e-5,
        "intertwiner_tol": 1e-3,
        "wilson_tol": 1e-6,
    },
    "discrete-lqg": {
        "generators": [[["A", 1]], [["B", 1]]],
        "seeds": [[0.1, 0.2]],
        "cyclic_generator": [["C", 1]],
        "cyclic_length": 5,
        "fiber_dim": 2,
        "cap": 10000,
        "tolerance": 1e-12,
    },
    "irreducibility": {
        "expect": {"su2": IRREDUCIBLE, "psu2": IRREDUCIBLE, "trivial": REDUCIBLE, "diag": REDUCIBLE},
        "gauged": [["grot", "psu2"], ["gphase", "diag"]],
        "basepoint": [0.3, 0.4],
        "budget": 8,
        "resolution": 64,
        "words": [[["R", 1]], [["E", 1], ["R", -1]]],
        "reconstruction_tol": 1e-4,
        "split_tol": 1e-6,
    },
    "norm-gap": {
        "cases": [
            {"coefficients": [1.0], "matrices": [[[1.0, 0.0], [0.0, 1.0]]], "exact": 1.0},
            {"coefficients": [1.0, 1.0], "matrices": [STRETCH, (np.array(ROT1) @ np.array(STRETCH)).tolist()]},
        ],
        "resolutions": [64, 128],
        "iters": 200,
        "kmax": 2,
        "slack": 1e-3,
    },
    "convergence": {
        "steps": [1 / 8, 1 / 16, 1 / 32],
        "connection": "psu2",
        "word": [["R", 1]],
        "resolutions": [32, 64, 128],
    },
}


DEFAULT_CATALOGUE: Dict[str, List[dict]] = {
    "metrics": [
        {"id": "flat", "family": "flat"},
        {"id": "conformal", "family": "conformal", "amplitude": 0.2},
    ],
    "fields": [
        {"id": "R", "family": "rotation-field", "center": [0.5, 0.5], "rate": 2.0, "radius": 0.4},
        {"id": "S", "family": "linear-field", "matrix": [[0.3, 0.8], [0.1, -0.2]], "center": [0.4, 0.5], "radius": 0.35},
        {"id": "E", "family": "constant-field", "vector": [0.25, 0.1]},
        {"id": "Rh", "family": "scaled-field", "base": "R", "factor": 0.5},
        {"id": "R3", "family": "scaled-field", "base": "R", "factor": 1 / 3},
        {"id": "R23", "family": "scaled-field", "base": "R", "factor": 2 / 3},
        {"id": "Sh", "family": "scaled-field", "base": "S", "factor": 0.5},
        {"id": "Eh", "family": "scaled-field", "base": "E", "factor": 0.5},
        {"id": "A", "family": "constant-field", "vector": [0.25, 0.0]},
        {"id": "B", "family": "constant-field", "vector": [0.1, 1 / 3]},
        {"id": "C", "family": "constant-field", "vector": [0.2, 0.0]},
    ],
    "connections": [
        {"id": "trivial", "family": "trivial", "fiber_dim": 2},
        {"id": "su2", "family": "su2-two-axis", "a": 1.0, "b": 0.7},
        {"id": "psu2", "family": "periodic-su2", "a": 0.8, "b": 0.5, "c": 0.3},
        {"id": "pu1", "family": "periodic-u1", "a": 0.7, "b": 0.4},
        {"id": "cu1", "family": "constant", "coefficients": [[0.4], [-0.9]]},
        {"id": "diag", "family": "diagonal-abelian", "first": "pu1", "second": "cu1"},
    ],
    "gauges": [
        {"id": "gphase", "family": "abelian-phase", "fiber_dim": 2},
        {"id": "gphase1", "family": "abelian-phase", "fiber_dim": 1},
        {"id": "grot", "family": "su2-rotation"},
        {"id": "gconst", "family": "constant-gauge", "angle": 0.7, "axis": [0.0, 0.6, 0.8]},
    ],
    "functions": [
        {"id": "f", "family": "bump", "center": [0.5, 0.5], "radius": 0.3},
        {"id": "g", "family": "bump", "center": [0.35, 0.55], "radius": 0.25, "plateau": 0.05},
        {"id": "q", "family": "fourier", "k": [1, 0]},
        {"id": "q2", "family": "fourier", "k": [0, 1]},
        {"id": "one", "family": "constant", "value": 1.0},
    ],
}
