"""Acceptance criteria 1-10, each run through the command line suites.

Every test prints one ``PASS``/``FAIL`` line. Run alone with

    pytest tests/test_acceptance.py -s

The whole module takes roughly six minutes single-threaded.
"""
import json
import math

import pytest

from holodiff.cli import main

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(suite, tag="", *extra):
        key = (suite, tag)
        if key not in cache:
            out = root / f"{suite}{tag}"
            code = main(["run", "--suite", suite, "--out", str(out), *extra])
            cache[key] = (code, out, json.loads((out / "report.json").read_text()))
        return cache[key]

    return get


def checks(report, prefix=""):
    return [c for c in report["checks"] if c["name"].startswith(prefix)]


def worst(report, prefix):
    found = checks(report, prefix)
    assert found, f"no checks named {prefix!r}"
    return max(c["value"] for c in found)


def least(report, prefix):
    found = checks(report, prefix)
    assert found, f"no checks named {prefix!r}"
    return min(c["value"] for c in found)


def verdict(capsys, number, title, conditions):
    """conditions: list of (label, value, bound, op)."""
    fails = []
    parts = []
    for label, value, bound, op in conditions:
        ok = {"<": value < bound, "<=": value <= bound, ">=": value >= bound, "==": value == bound}[op]
        parts.append(f"{label} {value:.3g} {op} {bound:.3g}")
        if not ok:
            fails.append(label)
    line = f"{'PASS' if not fails else 'FAIL'} criterion {number:2d} {title}: " + "; ".join(parts)
    with capsys.disabled():
        print("\n" + line)
    assert not fails, line


def test_criterion_01_unitarity(runs, capsys):
    code, _, rep = runs("unitarity")
    verdict(capsys, 1, "unitarity", [
        ("exit code", code, 0, "=="),
        ("max |ratio-1| @128", max(worst(rep, f"unitarity {m}/") for m in ("flat", "conformal")), 1e-2, "<"),
        ("min shrink 128->256", least(rep, "unitarity shrink"), 4.0, ">="),
    ])


def test_criterion_02_homomorphism(runs, capsys):
    code, _, rep = runs("homomorphism")
    verdict(capsys, 2, "homomorphism", [
        ("exit code", code, 0, "=="),
        ("hom @128", worst(rep, "homomorphism max"), 5e-2, "<"),
        ("adj @128", worst(rep, "adjoint max"), 5e-2, "<"),
        ("hom ratio 128/64", worst(rep, "homomorphism residual ratio"), 1.0, "<"),
        ("adj ratio 128/64", worst(rep, "adjoint residual ratio"), 1.0, "<"),
    ])


def test_criterion_03_ideal(runs, capsys):
    code, _, rep = runs("ideal")
    residuals = checks(rep, "ideal residual")
    pairs = {c["name"].split(" [")[0] for c in residuals}
    conns = {c["name"].split(" [")[1] for c in residuals}
    verdict(capsys, 3, "ideal", [
        ("exit code", code, 0, "=="),
        ("pairs", len(pairs), 10, ">="),
        ("connections", len(conns), 6, ">="),
        ("max residual", worst(rep, "ideal residual"), 1e-6, "<"),
        ("certificates", least(rep, "reparametrization certificate"), 1.0, "=="),
    ])


def test_criterion_04_radon_nikodym(runs, capsys):
    code, _, rep = runs("radon-nikodym")
    verdict(capsys, 4, "radon-nikodym", [
        ("exit code", code, 0, "=="),
        ("max |sqrt k diff|", worst(rep, "sqrt k_F operator vs analytic"), 1e-3, "<"),
        ("k_F > 0 flags", least(rep, "k_F > 0"), 1.0, "=="),
    ])


def test_criterion_05_holonomy(runs, capsys):
    code, _, rep = runs("holonomy")
    verdict(capsys, 5, "holonomy oracles", [
        ("exit code", code, 0, "=="),
        ("closed forms", worst(rep, "constant-connection closed forms"), 1e-8, "<"),
        ("Stokes", worst(rep, "abelian Stokes"), 1e-6, "<"),
        ("reparametrization", worst(rep, "holonomy reparametrization"), 1e-7, "<"),
    ])


def test_criterion_06_gauge(runs, capsys):
    code, _, rep = runs("gauge-equivalence")
    verdict(capsys, 6, "gauge", [
        ("exit code", code, 0, "=="),
        ("covariance", worst(rep, "holonomy gauge covariance"), 1e-5, "<"),
        ("intertwiner @128", worst(rep, "intertwiner residual"), 1e-3, "<"),
        ("Wilson traces", worst(rep, "Wilson-loop trace invariance"), 1e-6, "<"),
    ])


def test_criterion_07_discrete(runs, capsys):
    code, _, rep = runs("discrete-lqg")
    verdict(capsys, 7, "discrete LQG", [
        ("exit code", code, 0, "=="),
        ("psi homomorphism", worst(rep, "psi(F1 F2)"), 1e-12, "<"),
        ("projection covariance", worst(rep, "F 1_m F^-1"), 1e-12, "<"),
        ("round trip", worst(rep, "round-trip recovered-U"), 1e-12, "<"),
        ("rejected with certificate", least(rep, "non-equivalent pair rejected"), 1.0, "=="),
    ])


def test_criterion_08_irreducibility(runs, capsys):
    code, _, rep = runs("irreducibility")
    verdict(capsys, 8, "irreducibility", [
        ("exit code", code, 0, "=="),
        ("su2 irreducible", least(rep, "verdict su2 = irreducible"), 1.0, "=="),
        ("trivial splits", least(rep, "verdict trivial = reducible-with-splitting"), 1.0, "=="),
        ("diag splits", least(rep, "verdict diag = reducible-with-splitting"), 1.0, "=="),
        ("reconstruction", worst(rep, "block-diagonal reconstruction"), 1e-4, "<"),
    ])


def test_criterion_09_norm_gap(runs, capsys):
    code, _, rep = runs("norm-gap")
    recs = [r for r in rep["records"] if r.get("kind") == "norm-gap"]
    excess = max(r["l2_estimate"] - math.fsum(rep["options"]["cases"][r["case"]]["coefficients"]) for r in recs)
    verdict(capsys, 9, "norm-gap probe", [
        ("exit code", code, 0, "=="),
        ("counting - sum a_i", max(abs(r["counting_norm"] - math.fsum(rep["options"]["cases"][r["case"]]["coefficients"])) for r in recs), 0.0, "=="),
        ("l2 - sum a_i", excess, 1e-3, "<="),
        ("resolutions", len({r["resolution"] for r in recs}), 2, ">="),
    ])
    with capsys.disabled():
        for r in recs:
            print(f"  reported gap case{r['case']} @{r['resolution']}: {r['gap']:.4g}")


def test_criterion_10_determinism(runs, capsys):
    results = []
    for suite in ("discrete-lqg", "norm-gap", "holonomy"):
        _, out_a, _ = runs(suite)
        _, out_b, _ = runs(suite, "-again")
        results.append((out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes())
    verdict(capsys, 10, "determinism", [("identical report.json", float(sum(results)), float(len(results)), "==")])
