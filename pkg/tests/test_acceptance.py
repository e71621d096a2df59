"""End-to-end acceptance checks, one test per criterion.

Each test runs the corresponding bundle item at the default grid scale,
checks the stated tolerance and runtime budget, and logs one verdict line
(collected in the ``acceptance criteria`` section of the pytest summary).
"""

import time

import numpy as np

from resolvent_kit import bundles, cli
from resolvent_kit.extension import extend
from resolvent_kit.families import Generator, make_family
from resolvent_kit.kernels import Grid


def _run(name):
    rep, dt = bundles.run_item(name, 1.0)
    return rep, dt


def _detail(rep, dt, budget):
    return f"{rep.name}: max={rep.max:.3e} runtime={dt:.2f}s (budget {budget:g}s)"


def test_c1_scalar_inversion(criterion_log):
    rep, dt = _run("inversion_scalar")
    errors = {k: p.metadata.get("shown_value", p.max) for k, p in rep.parts.items()}
    orders = {k: p.metadata["order"] for k, p in rep.parts.items()}
    ok = rep.passed and dt <= 10 and all(e <= 1e-3 for e in errors.values())
    ok &= all(o is None or o >= 0.5 for o in orders.values())
    criterion_log(1, ok, _detail(rep, dt, 10) + f" orders={orders}")
    assert ok, rep.summary()


def test_c2_transform_suite(criterion_log):
    rep, dt = _run("transform_suite")
    ok = rep.passed and dt <= 5 and len(rep.parts) == 6 * 14 + 1
    criterion_log(2, ok, _detail(rep, dt, 5))
    assert ok, rep.summary()


def test_c3_volterra_families(criterion_log):
    rep, dt = _run("volterra_families")
    exact = max(rep.parts[p].max for p in ("semigroup", "cosine"))
    frac = {p: rep.parts[p].metadata["order"] for p in ("frac(0.5,0)", "frac_aa(0.5)")}
    ok = rep.passed and dt <= 10 and exact <= 1e-10
    criterion_log(3, ok, _detail(rep, dt, 10) + f" exact={exact:.1e} orders={frac}")
    assert ok, rep.summary()


def test_c4_nojump_extension(criterion_log):
    rep, dt = _run("nojump_extension")
    dev = {k: p.max for k, p in rep.parts.items()}
    ok = rep.passed and dt <= 30 and dev["n=128"] <= 1e-2 and dev["n=256"] <= 3e-3
    criterion_log(4, ok, _detail(rep, dt, 30) + f" deviations={dev}")
    assert ok, rep.summary()


def test_c5_general_and_sharp_extension(criterion_log):
    rep, dt = _run("general_extension")
    # pinned closed form: (g_2 * e^{tA})(1.5) for the nilpotent generator
    fam = make_family("semigroup", Generator.dense([[0, 1], [0, 0]]), Grid(1.0, 64))
    out = extend(fam, "general", 1)
    i = int(np.argmin(np.abs(out.nodes - 1.5)))
    pinned = np.abs(out.values[i] - np.array([[1.125, 0.5625], [0.0, 1.125]])).max()
    ok = rep.passed and dt <= 60 and pinned <= 1e-6 and rep.parts["sharp"].metadata["k_out_is_g15"]
    criterion_log(5, ok, _detail(rep, dt, 60) + f" S(1.5) error={pinned:.1e}")
    assert ok, rep.summary()


def test_c6_functional_equations(criterion_log):
    rep, dt = _run("functional_equations")
    p = rep.parts
    ok = rep.passed and dt <= 60
    ok &= p["cauchy"].max <= 1e-12 and p["dalembert"].max <= 1e-12
    ok &= p["superdiff_tk"].max <= 1e-2
    ok &= all(p[f"perturbed {eq}"].metadata["perturbed_residual"] >= 0.5e-2
              for eq in ("cauchy", "dalembert", "translation_aa"))
    criterion_log(6, ok, _detail(rep, dt, 60))
    assert ok, rep.summary()


def test_c7_divergent_moment_flag(criterion_log):
    rep, dt = _run("divergence_guard")
    flags = rep.parts["alpha=1.5"].metadata["flags"]
    ok = rep.passed and "divergent-moment" in flags
    criterion_log(7, ok, f"{rep.name}: flags={flags} runtime={dt:.2f}s")
    assert ok, rep.summary()


def test_c8_sequence_boundary(criterion_log):
    rep, dt = _run("sequence_boundary")
    var = rep.parts["t=0.9"].max
    growth = rep.parts["t=1.5"].metadata["growth"]
    ok = rep.passed and var <= 0.05 and growth >= 2.0
    criterion_log(8, ok, f"{rep.name}: variation(t=0.9)={var:.2e} growth(t=1.5)={growth:.3g}")
    assert ok, rep.summary()


def test_c9_block_family(criterion_log):
    rep, dt = _run("block_family")
    ok = rep.passed and rep.max <= 1e-2
    criterion_log(9, ok, _detail(rep, dt, 10))
    assert ok, rep.summary()


def test_c10_coarse_suite(criterion_log, capsys):
    t0 = time.perf_counter()
    code = cli.run(["suite", "all", "--tier", "coarse"])
    dt = time.perf_counter() - t0
    table = capsys.readouterr().out
    ok = code == 0 and dt <= 600
    criterion_log(10, ok, f"suite all --tier coarse: exit={code} runtime={dt:.1f}s (budget 600s)")
    assert ok, table
