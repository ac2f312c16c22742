"""Flow words, the cross product with test functions, and the reparametrization ideal.

A ``FlowWord`` is a free-group word over time-1 flows; letters are
``(field, sign)`` pairs and the rightmost letter acts first on points.
Only adjacent inverse pairs are cancelled: whether two different words give
the same element of the quotient algebra is decided semantically by
``is_local_reparametrization``, never by rewriting.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DEFAULT_STEP, ChartDomain, Curve, VectorField, _n_steps, field_token, flow_cache, integrate

Letter = Tuple[VectorField, int]


# ---------------------------------------------------------------------------
# flow words


def _normalize(letters: Sequence[Letter]) -> Tuple[Letter, ...]:
    out: List[Letter] = []
    for X, s in letters:
        if s not in (1, -1):
            raise ValueError("letter signs must be +1 or -1")
        if out and out[-1][0].id == X.id and out[-1][1] == -s:
            out.pop()
        else:
            out.append((X, s))
    return tuple(out)


class FlowWord:
    """Element of the flow group as a reduced word of time-1 flows."""

    __slots__ = ("letters",)

    def __init__(self, letters: Iterable[Letter] = ()):
        self.letters = _normalize(list(letters))

    @classmethod
    def identity(cls) -> "FlowWord":
        return cls()

    @classmethod
    def of(cls, X: VectorField, sign: int = 1) -> "FlowWord":
        return cls([(X, sign)])

    @property
    def normalized(self) -> bool:
        return True

    def key(self) -> tuple:
        return tuple((X.id, s) for X, s in self.letters)

    def sort_key(self):
        return (len(self.letters), self.key())

    def __len__(self):
        return len(self.letters)

    def __eq__(self, other):
        return isinstance(other, FlowWord) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __mul__(self, other: "FlowWord") -> "FlowWord":
        return word_multiply(self, other)

    def inverse(self) -> "FlowWord":
        return word_inverse(self)

    def __repr__(self):
        if not self.letters:
            return "I"
        return "".join(f"e^{'' if s > 0 else '-'}{X.id}" for X, s in self.letters)

    def fields(self) -> Dict[str, VectorField]:
        return {X.id: X for X, _ in self.letters}

    def apply(self, x, domain: ChartDomain, step: float = DEFAULT_STEP, wrap: bool = True):
        """Act on points: time-1 flows applied right to left."""
        x = np.asarray(x, dtype=float)
        big = x.ndim == 2 and x.shape[0] >= 256
        if big:
            ck = flow_cache.key(("apply", tuple((field_token(X), s) for X, s in self.letters), domain.key(), step), x)
            hit = flow_cache.get(ck)
            if hit is not None:
                return domain.wrap(hit) if wrap else hit.copy()
        y = x
        for X, s in reversed(self.letters):
            y, _ = integrate(X, y, float(s), domain, step)
        if big:
            flow_cache.put(ck, y.copy())
        return domain.wrap(y) if wrap else y


def word_multiply(w1: FlowWord, w2: FlowWord) -> FlowWord:
    return FlowWord(w1.letters + w2.letters)


def word_inverse(w: FlowWord) -> FlowWord:
    return FlowWord((X, -s) for X, s in reversed(w.letters))


def word_apply(w: FlowWord, m, domain: ChartDomain, step: float = DEFAULT_STEP):
    return w.apply(m, domain, step)


def word_traces(w: FlowWord, starts, domain: ChartDomain, step: float = DEFAULT_STEP):
    """Traces t -> F(a, t) for a batch of start points, letter by letter.

    Each letter occupies an equal share of [0, 1]. Returns (t, points,
    velocities) with points and velocities of shape (S, T, d), unwrapped and
    continuous. Letter junctions appear twice (same t, same point) so each
    copy carries its one-sided velocity.
    """
    cur = np.array(starts, dtype=float).reshape(-1, domain.dimension)
    S = len(cur)
    if not w.letters:
        pts = np.stack([cur, cur], axis=1)
        return np.array([0.0, 1.0]), pts, np.zeros_like(pts)
    k = len(w.letters)
    ts, pts, vels = [], [], []
    for j, (X, s) in enumerate(reversed(w.letters)):
        rec = [cur.copy()]
        offset = {}

        def cb(idx, x0, x1, v0, v1, dt, rec=rec, offset=offset):
            if "d" not in offset:
                # integrate may re-image start points on a torus; undo that shift
                offset["d"] = rec[0][idx] - x0
            snap = rec[-1].copy()
            snap[idx] = x1 + offset["d"]
            rec.append(snap)

        integrate(X, cur, float(s), domain, step, callback=cb)
        if len(rec) == 1:  # nothing in the support: the letter acts trivially
            rec = rec * (_n_steps(1.0, step) + 1)
        seg = np.stack(rec, axis=1)  # (S, T, d)
        v = s * X(domain.wrap(seg.reshape(-1, seg.shape[-1]))).reshape(seg.shape)
        ts.append((j + np.linspace(0.0, 1.0, seg.shape[1])) / k)
        pts.append(seg)
        vels.append(v * k)  # d/dt with the letter squeezed into 1/k of the parameter range
        cur = seg[:, -1].copy()
    return np.concatenate(ts), np.concatenate(pts, axis=1), np.concatenate(vels, axis=1)


def word_trace(w: FlowWord, a, domain: ChartDomain, step: float = DEFAULT_STEP):
    """Single-point version of ``word_traces``: (t, points (T, d), velocities (T, d))."""
    t, p, v = word_traces(w, np.asarray(a, dtype=float)[None, :], domain, step)
    return t, p[0], v[0]


# ---------------------------------------------------------------------------
# supports


class Support:
    def sample(self, n: int, rng: np.random.Generator, domain: ChartDomain) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, domain: ChartDomain) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Everywhere(Support):
    def sample(self, n, rng, domain):
        return domain.lo + rng.random((n, domain.dimension)) * domain.extent

    def contains(self, x, domain):
        return np.ones(np.asarray(x).shape[:-1], dtype=bool)


@dataclass(frozen=True)
class BoxSupport(Support):
    lower: tuple
    upper: tuple

    def sample(self, n, rng, domain):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        return lo + rng.random((n, lo.size)) * (hi - lo)

    def contains(self, x, domain):
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lower)) & (x <= np.asarray(self.upper)), axis=-1)


@dataclass(frozen=True)
class BallSupport(Support):
    center: tuple
    radius: float

    def sample(self, n, rng, domain):
        c = np.asarray(self.center, float)
        v = rng.normal(size=(n, c.size))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / c.size)
        return domain.wrap(c + r[:, None] * v)

    def contains(self, x, domain):
        d = domain.displacement(np.asarray(self.center, float), x)
        return np.linalg.norm(d, axis=-1) <= self.radius


@dataclass(frozen=True)
class UnionSupport(Support):
    parts: tuple

    def sample(self, n, rng, domain):
        picks = rng.integers(0, len(self.parts), size=n)
        out = np.empty((n, domain.dimension))
        for i, part in enumerate(self.parts):
            sel = picks == i
            if np.any(sel):
                out[sel] = part.sample(int(sel.sum()), rng, domain)
        return out

    def contains(self, x, domain):
        return np.any([p.contains(x, domain) for p in self.parts], axis=0)


@dataclass(frozen=True)
class TransportedSupport(Support):
    """The image w(S) of a support S."""

    base: Support
    word: FlowWord

    def sample(self, n, rng, domain):
        return self.word.apply(self.base.sample(n, rng, domain), domain)

    def contains(self, x, domain):
        return self.base.contains(self.word.inverse().apply(x, domain), domain)


# ---------------------------------------------------------------------------
# test functions


class TestFunction:
    """Smooth complex function on the chart; ``eval(x, domain)`` is vectorized."""

    __test__ = False  # not a pytest class
    id = "f"
    support: Support = Everywhere()

    def eval(self, x, domain: ChartDomain) -> np.ndarray:
        raise NotImplementedError

    # arithmetic sugar used by the cross product
    def __mul__(self, other):
        if isinstance(other, TestFunction):
            return Product(self, other)
        return Scaled(self, complex(other))

    __rmul__ = __mul__

    def __add__(self, other):
        return Sum(self, other)

    def conj(self):
        return Conjugate(self)

    def __repr__(self):
        return self.id


class Bump(TestFunction):
    """Smooth bump: amplitude inside ``plateau``, zero beyond ``radius`` (minimal image on a torus)."""

    def __init__(self, id, center, radius, plateau=0.0, amplitude=1.0):
        from .geometry import radial_bump

        self._bump = radial_bump
        self.id = id
        self.center = np.asarray(center, dtype=float)
        self.radius, self.plateau, self.amplitude = float(radius), float(plateau), complex(amplitude)
        self.support = BallSupport(tuple(self.center), self.radius)

    def eval(self, x, domain):
        disp = domain.displacement(self.center, np.asarray(x, dtype=float))
        val, _ = self._bump(disp, np.zeros_like(self.center), self.radius, self.plateau)
        return self.amplitude * val


class Gaussian(TestFunction):
    def __init__(self, id, center, width, amplitude=1.0):
        self.id = id
        self.center = np.asarray(center, dtype=float)
        self.width, self.amplitude = float(width), complex(amplitude)

    def eval(self, x, domain):
        disp = domain.displacement(self.center, np.asarray(x, dtype=float))
        return self.amplitude * np.exp(-np.sum(disp**2, axis=-1) / (2 * self.width**2))


class FourierMode(TestFunction):
    """amplitude * exp(2 pi i k . (x - lo) / L); periodic on the torus."""

    def __init__(self, id, k, amplitude=1.0):
        self.id, self.k, self.amplitude = id, np.asarray(k, dtype=float), complex(amplitude)

    def eval(self, x, domain):
        phase = 2 * np.pi * np.sum(self.k * (np.asarray(x, float) - domain.lo) / domain.extent, axis=-1)
        return self.amplitude * np.exp(1j * phase)


class ConstantFunction(TestFunction):
    def __init__(self, id="one", value=1.0):
        self.id, self.value = id, complex(value)

    def eval(self, x, domain):
        return np.full(np.asarray(x).shape[:-1], self.value, dtype=complex)


class Scaled(TestFunction):
    def __init__(self, f: TestFunction, c: complex):
        self.f, self.c = f, complex(c)
        self.id = f"{self.c:g}*{f.id}"
        self.support = f.support

    def eval(self, x, domain):
        return self.c * self.f.eval(x, domain)


class Product(TestFunction):
    def __init__(self, f: TestFunction, g: TestFunction):
        self.f, self.g = f, g
        self.id = f"({f.id})({g.id})"
        self.support = g.support if isinstance(f.support, Everywhere) else f.support

    def eval(self, x, domain):
        return self.f.eval(x, domain) * self.g.eval(x, domain)


class Sum(TestFunction):
    def __init__(self, f: TestFunction, g: TestFunction):
        self.f, self.g = f, g
        self.id = f"{f.id}+{g.id}"
        if isinstance(f.support, Everywhere) or isinstance(g.support, Everywhere):
            self.support = Everywhere()
        else:
            self.support = UnionSupport((f.support, g.support))

    def eval(self, x, domain):
        return self.f.eval(x, domain) + self.g.eval(x, domain)


class Conjugate(TestFunction):
    def __init__(self, f: TestFunction):
        self.f = f
        self.id = f"conj({f.id})"
        self.support = f.support

    def eval(self, x, domain):
        return np.conj(self.f.eval(x, domain))


class Transported(TestFunction):
    """w(f)(m) = f(w^{-1}(m))."""

    def __init__(self, f: TestFunction, word: FlowWord, step: float = DEFAULT_STEP):
        self.f, self.word, self.step = f, word, step
        self.id = f"{word!r}({f.id})"
        self.support = f.support if not word.letters else TransportedSupport(f.support, word)

    def eval(self, x, domain):
        if not self.word.letters:
            return self.f.eval(x, domain)
        return self.f.eval(self.word.inverse().apply(x, domain, self.step), domain)


def word_action_on_function(w: FlowWord, f: TestFunction, step: float = DEFAULT_STEP) -> TestFunction:
    if not w.letters:
        return f
    if isinstance(f, Transported):
        return Transported(f.f, w * f.word, step)
    return Transported(f, w, step)


# ---------------------------------------------------------------------------
# the cross product


class AlgebraElement:
    """Finite sum of terms f F; terms are kept ordered by word with like words merged."""

    __slots__ = ("terms",)

    def __init__(self, terms: Iterable[Tuple[TestFunction, FlowWord]] = ()):
        merged: Dict[FlowWord, TestFunction] = {}
        for f, w in terms:
            merged[w] = merged[w] + f if w in merged else f
        self.terms: Tuple[Tuple[TestFunction, FlowWord], ...] = tuple(
            (merged[w], w) for w in sorted(merged, key=FlowWord.sort_key)
        )

    @classmethod
    def function(cls, f: TestFunction) -> "AlgebraElement":
        return cls([(f, FlowWord())])

    @classmethod
    def flow(cls, w: FlowWord, f: Optional[TestFunction] = None) -> "AlgebraElement":
        return cls([(f or ConstantFunction(), w)])

    def words(self) -> List[FlowWord]:
        return [w for _, w in self.terms]

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.terms + other.terms)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return self + other.scale(-1.0)

    def scale(self, c: complex) -> "AlgebraElement":
        return AlgebraElement((Scaled(f, c), w) for f, w in self.terms)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return algebra_multiply(self, other)
        return self.scale(other)

    def adjoint(self) -> "AlgebraElement":
        return algebra_adjoint(self)

    def sample(self, x, domain) -> Dict[tuple, np.ndarray]:
        """Function values of every term at the points ``x``, keyed by word."""
        return {w.key(): f.eval(x, domain) for f, w in self.terms}

    def grid_distance(self, other: "AlgebraElement", x, domain) -> float:
        """Max pointwise difference of the term functions, word by word."""
        a, b = self.sample(x, domain), other.sample(x, domain)
        worst = 0.0
        for k in set(a) | set(b):
            va = a.get(k, 0.0)
            vb = b.get(k, 0.0)
            worst = max(worst, float(np.max(np.abs(np.asarray(va) - np.asarray(vb)), initial=0.0)))
        return worst

    def __repr__(self):
        return " + ".join(f"{f.id}.{w!r}" for f, w in self.terms) or "0"

    # serialization -----------------------------------------------------------

    def to_json(self) -> list:
        out = []
        for f, w in self.terms:
            for coeff, base in _linear_parts(f):
                out.append(
                    {
                        "function_id": base.id,
                        "coefficients": [coeff.real, coeff.imag],
                        "word": [[X.id, s] for X, s in w.letters],
                    }
                )
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data, functions: Dict[str, TestFunction], fields: Dict[str, VectorField]) -> "AlgebraElement":
        if isinstance(data, str):
            data = json.loads(data)
        terms = []
        for item in data:
            f = functions[item["function_id"]]
            re, im = item.get("coefficients", [1.0, 0.0])
            word = FlowWord((fields[fid], int(s)) for fid, s in item["word"])
            terms.append((Scaled(f, complex(re, im)), word))
        return cls(terms)


def _linear_parts(f: TestFunction):
    if isinstance(f, Scaled):
        return [(f.c * c, b) for c, b in _linear_parts(f.f)]
    if isinstance(f, Sum):
        return _linear_parts(f.f) + _linear_parts(f.g)
    if isinstance(f, (Product, Conjugate, Transported)):
        raise ValueError(f"function {f.id} is not a linear combination of catalogue functions")
    return [(1.0 + 0.0j, f)]


def algebra_multiply(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    """(f1 F1)(f2 F2) = (f1 . F1(f2)) F1 F2, extended bilinearly."""
    terms = []
    for f1, w1 in a.terms:
        for f2, w2 in b.terms:
            terms.append((Product(f1, word_action_on_function(w1, f2)), w1 * w2))
    return AlgebraElement(terms)


def algebra_adjoint(a: AlgebraElement) -> AlgebraElement:
    """(f F)* = F^{-1}(conj f) F^{-1}, extended antilinearly."""
    terms = []
    for f, w in a.terms:
        winv = w.inverse()
        terms.append((word_action_on_function(winv, Conjugate(f)), winv))
    return AlgebraElement(terms)


# ---------------------------------------------------------------------------
# the reparametrization ideal


@dataclass
class ReparametrizationCertificate:
    holds: bool
    points: np.ndarray
    maps: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    violation: Optional[dict] = None


def _densify(t, pts, vel, factor):
    """Cubic Hermite refinement of a sampled trajectory."""
    if factor <= 1:
        return t, pts
    s = np.linspace(0.0, 1.0, factor + 1)[:-1]
    h = np.diff(t)[:, None, None]
    p0, p1 = pts[:-1, None, :], pts[1:, None, :]
    v0, v1 = vel[:-1, None, :], vel[1:, None, :]
    ss = s[None, :, None]
    h00 = 2 * ss**3 - 3 * ss**2 + 1
    h10 = ss**3 - 2 * ss**2 + ss
    h01 = -2 * ss**3 + 3 * ss**2
    h11 = ss**3 - ss**2
    dense = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1
    tt = t[:-1, None] + np.diff(t)[:, None] * s[None, :]
    keep = np.diff(t) > 0  # zero-length intervals sit at letter junctions
    return np.append(tt[keep].ravel(), t[-1]), np.vstack([dense[keep].reshape(-1, pts.shape[1]), pts[-1:]])


def _arclength(pts):
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _segment_distance(p, a, b):
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    lam = np.clip(np.sum((p - a) * ab, axis=1) / denom, 0.0, 1.0)
    return np.linalg.norm(p - (a + lam[:, None] * ab), axis=1)


def _point_polyline_distance(p, poly, reach: float):
    """Distance from each point in p to the polyline ``poly``, exact up to ``reach``.

    A segment of length L within distance r of p has its midpoint within
    r + L/2. Segments are bucketed by length scale so clusters of very short
    segments get a correspondingly small search ball. Points farther than
    ``reach`` from everything get an upper bound (distance to the nearest vertex).
    """
    if len(poly) < 2:
        return np.linalg.norm(p - poly[0], axis=1)
    a, b = poly[:-1], poly[1:]
    ln = np.linalg.norm(b - a, axis=1)
    level = np.floor(np.log2(np.maximum(ln, max(1e-3 * reach, 1e-14))))
    best = np.full(len(p), np.inf)
    tp = cKDTree(p)
    for lv in np.unique(level):
        sel = np.flatnonzero(level == lv)
        r = reach + 0.5 * float(ln[sel].max()) + 1e-15
        near = tp.sparse_distance_matrix(cKDTree(0.5 * (a[sel] + b[sel])), r, output_type="ndarray")
        if len(near) == 0:
            continue
        rows, cols = near["i"], sel[near["j"]]
        np.minimum.at(best, rows, _segment_distance(p[rows], a[cols], b[cols]))
    far = ~np.isfinite(best)
    if np.any(far):
        best[far] = cKDTree(poly).query(p[far])[0]
    return best


def is_local_reparametrization(
    F1: FlowWord,
    F2: FlowWord,
    support: Support,
    samples: int,
    domain: ChartDomain,
    seed: int = 0,
    tol: Optional[float] = None,
    step: float = DEFAULT_STEP,
    density: int = 4,
) -> ReparametrizationCertificate:
    """Decide whether F1 is, over ``support``, a monotone reparametrization of F2.

    For every sampled point a the two traces must share their end point,
    coincide as point sets (Hausdorff distance below ``tol``) and match
    pointwise under arc-length alignment; the alignment phi_a = s2^-1 o s1 is
    returned as the certificate.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    tol = 1e-5 * float(np.max(domain.extent)) if tol is None else tol
    rng = np.random.default_rng(seed)
    pts = support.sample(samples, rng, domain)
    maps = []
    t1, P1, V1 = word_traces(F1, pts, domain, step)
    t2, P2, V2 = word_traces(F2, pts, domain, step)
    for i, a in enumerate(pts):
        t1d, d1 = _densify(t1, P1[i], V1[i], density)
        t2d, d2 = _densify(t2, P2[i], V2[i], density)
        end_gap = float(np.linalg.norm(domain.displacement(d1[-1], d2[-1])))
        if end_gap > tol:
            return ReparametrizationCertificate(False, pts, maps, {"point": a, "reason": "endpoint", "gap": end_gap})
        # both traces start at a; make the second one continuous with the first image
        s1, s2 = _arclength(d1), _arclength(d2)
        if s1[-1] <= tol and s2[-1] <= tol:
            maps.append((t1d, t1d.copy()))
            continue
        haus = max(
            float(np.max(_point_polyline_distance(d1, d2, tol))),
            float(np.max(_point_polyline_distance(d2, d1, tol))),
        )
        if haus > tol:
            return ReparametrizationCertificate(False, pts, maps, {"point": a, "reason": "hausdorff", "gap": haus})
        if abs(s1[-1] - s2[-1]) > tol:
            return ReparametrizationCertificate(
                False, pts, maps, {"point": a, "reason": "length", "gap": abs(s1[-1] - s2[-1])}
            )
        # align at equal normalized arc length
        u1, u2 = s1 / s1[-1], s2 / s2[-1]
        matched = np.stack([np.interp(u1, u2, d2[:, i]) for i in range(d2.shape[1])], axis=1)
        gap = float(np.max(np.linalg.norm(matched - d1, axis=1)))
        if gap > tol:
            return ReparametrizationCertificate(False, pts, maps, {"point": a, "reason": "matching", "gap": gap})
        phi = np.interp(u1, u2, t2d)
        if np.any(np.diff(phi) < -1e-12):
            return ReparametrizationCertificate(False, pts, maps, {"point": a, "reason": "monotone", "gap": 0.0})
        maps.append((t1d, phi))
    return ReparametrizationCertificate(True, pts, maps)


def ideal_residual(F1: FlowWord, F2: FlowWord, f: TestFunction, nabla, grid, iters: int = 60) -> float:
    """Norm estimate of phi_nabla(F1 f - F2 f) on the grid."""
    from .representation import Representer, operator_norm_estimate

    if F1 == F2:
        return 0.0
    elem = AlgebraElement.flow(F1) * AlgebraElement.function(f) - AlgebraElement.flow(F2) * AlgebraElement.function(f)
    rep = Representer(grid, nabla)
    return operator_norm_estimate(rep.element(elem), iters).value
