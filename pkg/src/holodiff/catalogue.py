"""Named parameterized families and their construction from config tables."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping

import numpy as np

from .connection import (
    SIGMA,
    ConstantConnection,
    ConstantCurvatureAbelian,
    DiagonalAbelian,
    PeriodicAbelian,
    PeriodicSU2,
    SU2TwoAxis,
    TrivialConnection,
    expm_antihermitian,
)
from .flow_algebra import Bump, ConstantFunction, FlowWord, FourierMode, Gaussian
from .gauge import AbelianPhaseGauge, ConstantGauge, SU2RotationGauge
from .geometry import (
    BOX,
    TORUS,
    BumpModulatedField,
    ChartDomain,
    ConformalMetric,
    ConstantField,
    FlatMetric,
    LinearField,
    RotationField,
    ZeroField,
)


class CatalogueError(KeyError):
    """Unknown family, unresolved id or unusable parameters."""

    def __str__(self):
        return str(self.args[0]) if self.args else "catalogue error"


@dataclass(frozen=True)
class Family:
    kind: str
    name: str
    params: Mapping[str, Any]  # parameter -> default (None: required)
    doc: str
    build: Callable


def _req(p, key, family):
    if p.get(key) is None:
        raise CatalogueError(f"{family}: missing parameter {key!r}")
    return p[key]


def _bumped(field, p, domain, family):
    r = p.get("radius")
    if r is None:
        if domain.periodic:
            raise CatalogueError(f"{family}: needs a support radius on a torus")
        return field
    return BumpModulatedField(p["id"], field, p.get("center", [0.5, 0.5]), float(r), float(p.get("plateau", 0.0)))


def _rotation(p, domain, reg):
    c = p.get("center", list(domain.lo + 0.5 * domain.extent))
    base = RotationField(p["id"] + ".base", c, float(p.get("rate", 1.0)), domain.dimension)
    return _bumped(base, {**p, "center": c}, domain, "rotation-field")


def _linear(p, domain, reg):
    c = p.get("center", list(domain.lo + 0.5 * domain.extent))
    base = LinearField(p["id"] + ".base", _req(p, "matrix", "linear-field"), c)
    return _bumped(base, {**p, "center": c}, domain, "linear-field")


def _scaled(p, domain, reg):
    base = reg.field(_req(p, "base", "scaled-field"))
    f = base.scaled(float(_req(p, "factor", "scaled-field")))
    f.id = p["id"]
    return f


def _pauli_matrices(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] == 1:
        return 1j * c[..., None]
    if c.shape[-1] != 4:
        raise CatalogueError("constant: coefficients need 1 or 4 entries per axis")
    basis = np.concatenate([np.eye(2)[None], SIGMA])
    return 1j * np.einsum("...k,kij->...ij", c, basis)


def _constant_connection(p, domain, reg):
    mats = _pauli_matrices(_req(p, "coefficients", "constant"))
    if mats.shape[0] != domain.dimension:
        raise CatalogueError("constant: one coefficient vector per axis is required")
    return ConstantConnection(domain, mats, id=p["id"])


def _ccurv(p, domain, reg):
    if domain.periodic:
        raise CatalogueError("constant-curvature-abelian: not periodic, use a box chart")
    gen = None if p.get("embed", "u1") == "u1" else np.diag([1.0, -1.0]).astype(complex)
    return ConstantCurvatureAbelian(domain, float(p.get("B", 1.0)), p.get("center", [0.0, 0.0]), gen, id=p["id"])


def _diag(p, domain, reg):
    a, b = reg.connection(_req(p, "first", "diagonal-abelian")), reg.connection(_req(p, "second", "diagonal-abelian"))
    try:
        return DiagonalAbelian(a, b, id=p["id"])
    except ValueError as exc:
        raise CatalogueError(f"diagonal-abelian: {exc}") from None


def _const_gauge(p, domain, reg):
    n = int(p.get("fiber_dim", 2))
    angle = float(p.get("angle", 0.7))
    if n == 1:
        return ConstantGauge(np.exp(1j * angle) * np.eye(1), id=p["id"])
    axis = np.asarray(p.get("axis", [0.0, 0.0, 1.0]), dtype=float)
    axis = axis / np.linalg.norm(axis)
    return ConstantGauge(expm_antihermitian(1j * angle * np.einsum("k,kij->ij", axis, SIGMA)), id=p["id"])


FAMILIES: Dict[str, Dict[str, Family]] = {
    "metrics": {
        "flat": Family("metrics", "flat", {}, "Euclidean metric", lambda p, d, r: FlatMetric(p["id"])),
        "conformal": Family(
            "metrics",
            "conformal",
            {"amplitude": 0.2, "wavenumber": 1},
            "exp(2 phi) delta with a periodic cosine potential phi",
            lambda p, d, r: ConformalMetric(float(p.get("amplitude", 0.2)), tuple(d.extent), tuple(d.lo), int(p.get("wavenumber", 1)), p["id"]),
        ),
    },
    "fields": {
        "constant-field": Family(
            "fields", "constant-field", {"vector": None}, "translation", lambda p, d, r: ConstantField(p["id"], _req(p, "vector", "constant-field"))
        ),
        "rotation-field": Family(
            "fields",
            "rotation-field",
            {"center": "chart center", "rate": 1.0, "radius": None, "plateau": 0.0},
            "rigid rotation cut off by a smooth bump",
            _rotation,
        ),
        "linear-field": Family(
            "fields",
            "linear-field",
            {"matrix": None, "center": "chart center", "radius": None, "plateau": 0.0},
            "linear field A (x - c) cut off by a smooth bump",
            _linear,
        ),
        "scaled-field": Family("fields", "scaled-field", {"base": None, "factor": None}, "c X for a declared field X", _scaled),
        "zero-field": Family("fields", "zero-field", {}, "X = 0", lambda p, d, r: ZeroField(p["id"], d.dimension)),
    },
    "connections": {
        "trivial": Family(
            "connections", "trivial", {"fiber_dim": 2}, "A = 0", lambda p, d, r: TrivialConnection(d, int(p.get("fiber_dim", 2)), id=p["id"])
        ),
        "constant": Family(
            "connections", "constant", {"coefficients": None}, "A_mu = i (c0 + c . sigma), one [c0(,c1,c2,c3)] per axis", _constant_connection
        ),
        "su2-two-axis": Family(
            "connections",
            "su2-two-axis",
            {"a": 1.0, "b": 0.7},
            "A = i (a sigma1 dx + b sigma2 dy)",
            lambda p, d, r: SU2TwoAxis(d, float(p.get("a", 1.0)), float(p.get("b", 0.7)), id=p["id"]),
        ),
        "periodic-su2": Family(
            "connections",
            "periodic-su2",
            {"a": 0.8, "b": 0.5, "c": 0.3},
            "A = i (a sin(2 pi y) sigma1 dx + b cos(2 pi x) sigma2 dy + c sigma3 dx)",
            lambda p, d, r: PeriodicSU2(d, float(p.get("a", 0.8)), float(p.get("b", 0.5)), float(p.get("c", 0.3)), id=p["id"]),
        ),
        "periodic-u1": Family(
            "connections",
            "periodic-u1",
            {"a": 0.7, "b": 0.4},
            "A = i (a sin(2 pi y) dx + b cos(2 pi x) dy)",
            lambda p, d, r: PeriodicAbelian(d, float(p.get("a", 0.7)), float(p.get("b", 0.4)), id=p["id"]),
        ),
        "constant-curvature-abelian": Family(
            "connections",
            "constant-curvature-abelian",
            {"B": 1.0, "center": [0.0, 0.0], "embed": "u1"},
            "symmetric gauge of constant field strength B (box charts)",
            _ccurv,
        ),
        "diagonal-abelian": Family(
            "connections", "diagonal-abelian", {"first": None, "second": None}, "diag(A1, A2) of two declared u(1) connections", _diag
        ),
    },
    "gauges": {
        "constant-gauge": Family(
            "gauges", "constant-gauge", {"angle": 0.7, "axis": [0.0, 0.0, 1.0], "fiber_dim": 2}, "exp(i angle n . sigma)", _const_gauge
        ),
        "abelian-phase": Family(
            "gauges",
            "abelian-phase",
            {"amplitude": 0.7, "wavevector": [1, 1], "shift": 0.3, "fiber_dim": 2},
            "exp(i theta(x)) with a periodic phase field",
            lambda p, d, r: AbelianPhaseGauge(
                d, float(p.get("amplitude", 0.7)), p.get("wavevector", [1, 1]), float(p.get("shift", 0.3)), int(p.get("fiber_dim", 2)), id=p["id"]
            ),
        ),
        "su2-rotation": Family(
            "gauges",
            "su2-rotation",
            {"amplitude": 0.6, "wavevector": [1, 0], "shift": 0.2, "axis": [0.0, 0.6, 0.8]},
            "exp(i theta(x) n . sigma) with a periodic angle field",
            lambda p, d, r: SU2RotationGauge(
                d, float(p.get("amplitude", 0.6)), p.get("wavevector", [1, 0]), float(p.get("shift", 0.2)), p.get("axis", [0.0, 0.6, 0.8]), id=p["id"]
            ),
        ),
    },
    "functions": {
        "bump": Family(
            "functions",
            "bump",
            {"center": None, "radius": None, "plateau": 0.0, "amplitude": 1.0},
            "smooth compactly supported bump",
            lambda p, d, r: Bump(p["id"], _req(p, "center", "bump"), float(_req(p, "radius", "bump")), float(p.get("plateau", 0.0)), float(p.get("amplitude", 1.0))),
        ),
        "gaussian": Family(
            "functions",
            "gaussian",
            {"center": None, "width": None, "amplitude": 1.0},
            "Gaussian (minimal image on a torus)",
            lambda p, d, r: Gaussian(p["id"], _req(p, "center", "gaussian"), float(_req(p, "width", "gaussian")), float(p.get("amplitude", 1.0))),
        ),
        "fourier": Family(
            "functions",
            "fourier",
            {"k": None, "amplitude": 1.0},
            "Fourier mode exp(2 pi i k . x / L)",
            lambda p, d, r: FourierMode(p["id"], _req(p, "k", "fourier"), float(p.get("amplitude", 1.0))),
        ),
        "constant": Family(
            "functions", "constant", {"value": 1.0}, "constant function", lambda p, d, r: ConstantFunction(p["id"], float(p.get("value", 1.0)))
        ),
    },
}

KINDS = tuple(FAMILIES)


class Registry:
    """Resolves the declared catalogue entries of one config against a chart."""

    def __init__(self, domain: ChartDomain, entries: Mapping[str, List[dict]]):
        self.domain = domain
        self.entries = {k: {e["id"]: e for e in entries.get(k, [])} for k in KINDS}
        self.built: Dict[tuple, Any] = {}

    def _get(self, kind, id):
        key = (kind, id)
        if key in self.built:
            return self.built[key]
        spec = self.entries[kind].get(id)
        if spec is None:
            raise CatalogueError(f"unknown {kind[:-1]} id {id!r}")
        fam = FAMILIES[kind].get(spec.get("family"))
        if fam is None:
            raise CatalogueError(f"unknown {kind[:-1]} family {spec.get('family')!r}")
        domain = self.domain
        if kind == "metrics":
            obj = fam.build(spec, domain, self)
        else:
            try:
                obj = fam.build(spec, domain, self)
            except CatalogueError:
                raise
            except (TypeError, ValueError) as exc:
                raise CatalogueError(f"{fam.name} {id!r}: {exc}") from None
        self.built[key] = obj
        return obj

    def field(self, id):
        return self._get("fields", id)

    def connection(self, id):
        return self._get("connections", id)

    def gauge(self, id):
        return self._get("gauges", id)

    def function(self, id):
        return self._get("functions", id)

    def metric(self, id):
        return self._get("metrics", id)

    def ids(self, kind) -> List[str]:
        return list(self.entries[kind])

    def domain_with_metric(self, id) -> ChartDomain:
        d = self.domain
        return ChartDomain(d.lower, d.upper, d.topology, self.metric(id))

    def word(self, letters) -> FlowWord:
        try:
            return FlowWord((self.field(fid), int(s)) for fid, s in letters)
        except (TypeError, ValueError) as exc:
            raise CatalogueError(f"bad word {letters!r}: {exc}") from None

    def resolve_all(self) -> None:
        for kind in KINDS:
            for id in self.entries[kind]:
                self._get(kind, id)


def make_domain(spec: Mapping[str, Any]) -> ChartDomain:
    topo = spec.get("topology", TORUS)
    if topo not in (TORUS, BOX):
        raise CatalogueError(f"unknown topology {topo!r}")
    return ChartDomain(tuple(spec.get("lower", [0.0, 0.0])), tuple(spec.get("upper", [1.0, 1.0])), topo)


def list_catalogue(entries: Mapping[str, List[dict]] | None = None) -> str:
    """Families with parameter schemas in a fixed order, then any declared entries."""
    lines = []
    for kind in KINDS:
        lines.append(f"[{kind}]")
        for name in sorted(FAMILIES[kind]):
            fam = FAMILIES[kind][name]
            params = ", ".join(f"{k}={'<required>' if v is None else v}" for k, v in fam.params.items())
            lines.append(f"  {name}({params})  {fam.doc}")
    declared = [(k, e) for k in KINDS for e in (entries or {}).get(k, [])]
    if declared:
        lines.append("[declared]")
        for kind, e in declared:
            lines.append(f"  {kind[:-1]} {e['id']}: {e.get('family')}")
    return "\n".join(lines) + "\n"
