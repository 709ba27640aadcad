"""Acceptance criteria, one test each.  Every test records a single
PASS/FAIL line that is printed in the terminal summary."""

import json
import math
import os
import subprocess
import sys
import time

import pytest

from horolab import ConstantCurvature, PerturbedAxial, Point, UnitTangent, flow
from horolab.besov import growth_preconditions
from horolab.cli import ExperimentConfig
from horolab.experiments import RUNNERS, default_isometry

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

_CACHE = {}


def outcome(experiment, model="constant", **kw):
    key = (experiment, model, tuple(sorted(kw.items())))
    if key not in _CACHE:
        cfg = ExperimentConfig(experiment=experiment, model=model, **kw)
        _CACHE[key] = RUNNERS[experiment](cfg.model.build(), cfg)
    return _CACHE[key]


def metric(out, name):
    return next(m for m in out.metrics if m["name"] == name)


def record(n, title, ok, detail):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def test_01_riccati_oracle():
    c = ConstantCurvature()
    v = UnitTangent(Point(0.3, 0.1), 0.7)
    val = flow.riccati_mean_curvature(c, v, 10.0).value
    t0 = time.perf_counter()
    for i in range(100):
        flow.riccati_mean_curvature(c, UnitTangent(Point(0.3, 0.1), 0.06 * i), 10.0)
    dt = time.perf_counter() - t0
    ok = abs(val - 1.0) <= 1e-6 and dt < 1.0
    record(1, "Riccati oracle", ok, f"m_10 = {val:.10f}, 100 evaluations in {dt:.3f} s")


def test_02_truncation_law():
    rc = metric(outcome("riccati", "constant"), "truncation_rate")
    rp = metric(outcome("riccati", "perturbed_axial"), "truncation_monotone")
    ok = 1.0 <= rc["value"] <= 4.0 and rp["pass"]
    record(2, "truncation law", ok, f"constant rate {rc['value']:.4f} (2a = 2), perturbed monotone {rp['pass']}")


def test_03_busemann_gromov_oracle():
    out = outcome("boundary-products", "constant", n_checks=100)
    q, g = metric(out, "q_closed_form"), metric(out, "gromov_closed_form")
    ok = q["value"] <= 1e-3 and g["value"] <= 1e-3
    record(3, "Busemann/Gromov oracle", ok, f"max q error {q['value']:.2e}, max Gromov error {g['value']:.2e}")


def test_04_cross_ratio_invariance():
    vals = {}
    ok = True
    for model, tol in (("constant", 1e-3), ("perturbed_axial", 1e-2)):
        out = outcome("boundary-products", model, n_checks=100)
        b, i = metric(out, "cross_ratio_base_spread"), metric(out, "cross_ratio_invariance")
        ok &= b["value"] <= tol and i["value"] <= tol
        vals[model] = (b["value"], i["value"])
    detail = ", ".join(f"{m}: spread {b:.1e} invariance {i:.1e}" for m, (b, i) in vals.items())
    record(4, "cross-ratio invariances", ok, detail)


def test_05_quasimetric_constant():
    kc = metric(outcome("quasimetric", "constant", epsilon=1.0, n_triples=100_000), "K_hat")["value"]
    kp = metric(outcome("quasimetric", "perturbed_axial", epsilon=0.25, n_triples=100_000), "K_hat")["value"]
    ok = kc <= 1 + 1e-9 and kp <= 2.0
    record(5, "quasimetric constant", ok, f"constant eps=1 K = {kc:.9f}, perturbed eps=0.25 K = {kp:.4f}")


def test_06_ahlfors_dimension():
    parts, ok = [], True
    for model, eps, tol in (("constant", 1.0, 0.05), ("constant", 0.5, 0.05), ("perturbed_axial", 0.25, 0.15)):
        out = outcome("ahlfors", model, epsilon=eps)
        d, c = metric(out, "dimension"), metric(out, "C_hat_stability")
        ok &= abs(d["value"] * eps - 1.0) <= tol and c["value"] <= 0.2
        parts.append(f"{model} eps={eps}: slope {d['value']:.4f}, C change {c['value']:.3f}")
    record(6, "Ahlfors dimension", ok, "; ".join(parts))


def test_07_derivative_identity():
    parts, ok = [], True
    for model, tol in (("constant", 1e-4), ("perturbed_axial", 1e-2)):
        out = outcome("derivative", model, n_instances=1000)
        i, c = metric(out, "derivative_identity"), metric(out, "chain_rule")
        ok &= i["value"] <= tol and c["value"] <= tol
        parts.append(f"{model}: identity {i['value']:.1e}, chain {c['value']:.1e}")
    a = metric(outcome("derivative", "constant", n_instances=1000), "attracting_fixed_point")
    ok &= a["pass"]
    parts.append(f"|g'| at attracting point {a['value']:.6f}")
    record(7, "derivative identity and chain rule", ok, "; ".join(parts))


def test_08_rn_power_bounds():
    parts, ok = [], True
    for model, eps, ell in ((ConstantCurvature(), 1.0, 1.0), (PerturbedAxial(), 0.25, 4.0)):
        pre = growth_preconditions(model, default_isometry(model, ell), eps, n_pairs=1000, seed=0)
        lo, hi = pre["rn_trend_ci95"]
        ok &= lo <= 0.0 <= hi and math.isfinite(pre["rn_C"])
        parts.append(f"{model.kind.value}: C = {pre['rn_C']:.3f}, trend CI [{lo:.2e}, {hi:.2e}]")
    record(8, "RN_nu power bounds", ok, "; ".join(parts))


def test_09_cocycle_growth():
    parts, ok = [], True
    for model in ("constant", "perturbed_axial"):
        t0 = time.perf_counter()
        out = outcome("cocycle-growth", model)
        dt = time.perf_counter() - t0
        good = all(metric(out, n)["pass"] for n in ("increasing", "slope", "fit_r2", "ci_separated"))
        ok &= good and dt <= 300.0
        d = out.details
        parts.append(f"{model}: slope {d['slope']:.3g}, r2 {d['r2']:.3f}, {dt:.0f} s")
    record(9, "cocycle growth", ok, "; ".join(parts))


def test_10_holder_positivity():
    p = outcome("holder", "perturbed_axial")
    c = outcome("holder", "constant")
    lo = p.details["ci95"][0]
    ok = metric(p, "exponent_positive")["pass"] and metric(c, "degenerate_flag")["pass"]
    record(10, "Hoelder positivity", ok,
           f"perturbed exponent {p.details['exponent_estimate']:.3f} (CI low {lo:.3f}), constant degenerate {c.details['degenerate']}")


def test_11_symmetry_defect():
    out = outcome("symmetry-defect", "perturbed_axial", n_geodesics=50)
    m = metric(out, "no_growth_p_value")
    record(11, "symmetry defect", m["pass"],
           f"one-sided p = {m['value']:.3f}, ensemble bound {out.details['ensemble_bound']:.4f}")


def _cli_results(tmp_path, name, threads, *args):
    out = tmp_path / name
    env = dict(os.environ, HOROLAB_THREADS=str(threads))
    env.pop("NUMBA_NUM_THREADS", None)
    res = subprocess.run([sys.executable, "-m", "horolab.cli", "run", *args, "--out", str(out)],
                         env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    rep = json.loads((out / "report.json").read_text())
    return json.dumps(rep["results"], sort_keys=True).encode(), (out / "cocycle_series.csv").read_bytes()


def test_12_determinism(tmp_path):
    args = ("cocycle-growth", "--model", "perturbed", "--n-samples", "20000", "--kmax", "5", "--seed", "3")
    a = _cli_results(tmp_path, "a", 1, *args)
    b = _cli_results(tmp_path, "b", 1, *args)
    c = _cli_results(tmp_path, "c", 4, *args)
    ok = a == b == c
    record(12, "determinism", ok, f"report payload {len(a[0])} bytes identical across reruns and 1/4 threads: {ok}")
