"""Acceptance suite. Each criterion prints one PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` (or plain
``python tests/test_acceptance.py``).
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from simstudy.engine import continue_study, rerun_repetition, run_study
from simstudy.estimators import fit_cox_ph, fit_exponential_ph, fit_weibull_ph
from simstudy.perf import bias, coverage_under_bias, empse, mse, required_nsim
from simstudy.pipeline import (
    conditional_coverage_config, conditional_coverage_table, run_pipeline, survival_example_config,
)
from simstudy.report import decimals_for, render_zip_plot
from svgcheck import class_of, elements_by_id
from test_estimators import small_datasets

GOLDEN = Path(__file__).parent / "golden"


def report(capsys, label, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}")
    return ok


def cells(perf):
    return {(p.measure, p.dgm_id, p.method_id): p for p in perf}


@pytest.fixture(scope="module")
def survival_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("survival")
    cfg = survival_example_config(censor_time=3.0, n_sim=1600)
    t0 = time.perf_counter()
    result, perf = run_pipeline(cfg, out)
    return cfg, result, perf, out, time.perf_counter() - t0


def test_criterion_1_conditional_coverage(capsys):
    t0 = time.perf_counter()
    result, _ = run_pipeline(conditional_coverage_config(n_sim=30000), None, analyze_results=False)
    rows = conditional_coverage_table(result)
    elapsed = time.perf_counter() - t0
    targets = [(95.0, 0.4), (91.5, 0.9), (95.5, 0.6), (98.0, 0.5)]
    checks = [abs(r["coverage"] - want) <= tol for r, (want, tol) in zip(rows, targets)]
    ok = all(checks) and elapsed < 60
    detail = ", ".join(f"{r['group']}={r['coverage']:.2f}%" for r in rows) + f"; {elapsed:.1f}s"
    assert report(capsys, "1 (conditional coverage)", ok, detail)


def test_criterion_2a_exponential_baseline(capsys, survival_run):
    _, result, perf, _, elapsed = survival_run
    c = cells(perf)
    methods = ("exponential", "weibull", "cox")
    biases = [c[("bias", "1", m)] for m in methods]
    emp = [c[("empse", "1", m)].estimate for m in methods]
    cov = [c[("coverage", "1", m)].estimate for m in methods]
    ok_bias = all(abs(b.estimate) <= 3 * b.mcse for b in biases)
    ok_emp = max(emp) / min(emp) - 1 <= 0.02
    ok_cov = all(93.5 <= v <= 96.9 for v in cov)
    ok_size = len(result.estimates) == 9600 and len(result.states) == 3202
    ok = ok_bias and ok_emp and ok_cov and ok_size and elapsed < 120
    detail = (f"bias {[round(b.estimate, 4) for b in biases]} (3*MCSE {3 * biases[0].mcse:.4f}); "
              f"EmpSE {[round(e, 4) for e in emp]}; coverage {[round(v, 2) for v in cov]}; {elapsed:.1f}s")
    assert report(capsys, "2(a) (gamma=1)", ok, detail)


def test_criterion_2b_weibull_baseline(capsys, survival_run):
    _, result, perf, _, elapsed = survival_run
    c = cells(perf)
    exp_bias = c[("bias", "2", "exponential")].estimate
    wc = [c[("bias", "2", m)] for m in ("weibull", "cox")]
    rel_err = c[("rel_err_modse", "2", "exponential")].estimate
    rel_prec = c[("rel_precision", "2", "exponential")].estimate
    th = {m: np.array([r.theta_hat for r in result.estimates if r.dgm_id == "2" and r.method_id == m])
          for m in ("weibull", "cox")}
    corr = float(np.corrcoef(th["weibull"], th["cox"])[0, 1])
    parts = {
        "exp bias in [0.03, 0.07]": 0.03 <= exp_bias <= 0.07,
        "weibull/cox |bias| <= 3 MCSE": all(abs(b.estimate) <= 3 * b.mcse for b in wc),
        "exp rel err ModSE > 5%": rel_err > 5,
        "exp rel precision in [10, 30]%": 10 <= rel_prec <= 30,
        "weibull-cox corr > 0.99": corr > 0.99,
        "runtime < 120 s": elapsed < 120,
    }
    failed = [k for k, v in parts.items() if not v]
    detail = (f"exp bias {exp_bias:.4f}, rel err {rel_err:.2f}%, rel prec {rel_prec:.2f}%, corr {corr:.4f}"
              + (f"; failing: {'; '.join(failed)}" if failed else ""))
    assert report(capsys, "2(b) (gamma=1.5)", not failed, detail)


def test_criterion_3_nsim(capsys):
    got = (required_nsim("coverage_or_power", 95, 0.5), required_nsim("coverage_or_power", 50, 0.5),
           required_nsim("bias", target_mcse=0.005, var_theta=0.04))
    assert report(capsys, "3 (n_sim calculator)", got == (1900, 10000, 1600), str(got))


def test_criterion_4_mse_identity(capsys):
    rng = np.random.default_rng(20240)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(rng.normal(0, 2), rng.uniform(0.01, 5), int(rng.integers(2, 2000)))
        theta = float(rng.normal())
        n = x.size
        worst = max(worst, abs(mse(x, theta)[0] - (bias(x, theta)[0] ** 2 + (n - 1) / n * empse(x)[0] ** 2)))
    assert report(capsys, "4 (MSE identity)", worst <= 1e-12, f"max abs diff {worst:.2e}")


def test_criterion_5_coverage_under_bias(capsys):
    z = 1.959963984540054
    oracle = oracles.normal_cdf(1 + z) - oracles.normal_cdf(1 - z)
    v1, v0 = coverage_under_bias(1, 0.05), coverage_under_bias(0, 0.05)
    ok = abs(v1 - 0.8300) <= 1e-4 and abs(v1 - oracle) <= 1e-12 and round(v0, 4) == 0.95
    assert report(capsys, "5 (coverage under bias)", ok, f"b=1: {v1:.6f} (oracle {oracle:.6f}); b=0: {v0:.6f}")


def test_criterion_6_oracles(capsys):
    data = small_datasets(50)
    worst = {}
    for name, fit, oracle in (("exponential", fit_exponential_ph, oracles.exponential_oracle),
                              ("weibull", fit_weibull_ph, oracles.weibull_oracle),
                              ("cox", fit_cox_ph, oracles.cox_oracle)):
        worst[name] = max(abs(fit(d).theta_hat - oracle(d.x, d.time, d.event)) for d in data)
    ok = worst["exponential"] <= 1e-8 and worst["weibull"] <= 1e-6 and worst["cox"] <= 1e-6
    assert report(capsys, "6 (oracle equivalence)", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_7_reproducibility(capsys, survival_run, tmp_path):
    cfg, result, _, out, _ = survival_run
    names = ("estimates.csv", "states.csv")
    again = run_study(cfg, tmp_path / "again")
    same_rerun = all((out / n).read_bytes() == (tmp_path / "again" / n).read_bytes() for n in names)

    continue_study(cfg, again.states, 400, again.estimates, out_dir=tmp_path / "again")
    single = survival_example_config(censor_time=3.0, n_sim=2000)
    run_study(single, tmp_path / "single")
    same_continue = all((tmp_path / "again" / n).read_bytes() == (tmp_path / "single" / n).read_bytes()
                        for n in names)

    picks = [("1", 1), ("1", 800), ("2", 1234), ("2", 1600)]
    same_hash = all(rerun_repetition(cfg, result.states, d, i)[0].digest() == result.digests[(d, i)]
                    for d, i in picks)
    ok = same_rerun and same_continue and same_hash
    detail = f"full re-run {same_rerun}; 1600+400 == 2000 {same_continue}; rerun hashes {same_hash}"
    assert report(capsys, "7 (reproducibility)", ok, detail)


def test_criterion_8_zip_structure(capsys, survival_run):
    _, result, perf, _, _ = survival_run
    c = cells(perf)
    fig = render_zip_plot(result.estimates, {"1": -0.5, "2": -0.5})
    els = elements_by_id(fig.svg)
    bad = []
    for d in ("1", "2"):
        for m in ("exponential", "weibull", "cox"):
            prefix = f"zip-{d}-{m}-"
            segs = [el for k, el in els.items() if k.startswith(prefix) and k[len(prefix):].isdigit()]
            non = sum(class_of(el) == "noncover" for el in segs)
            cov = c[("coverage", d, m)]
            if non != cov.n_used - round(cov.estimate / 100 * cov.n_used) or \
                    abs(non / len(segs) - (1 - cov.estimate / 100)) > 1e-12:
                bad.append(f"{d}/{m}")
    assert report(capsys, "8 (zip plot coverage)", not bad, "all 6 facets match" if not bad else f"mismatch {bad}")


def test_criterion_9_table_rounding(capsys, survival_run):
    _, _, perf, out, _ = survival_run
    import csv

    with open(out / "table.csv", newline="") as fh:
        side = list(csv.DictReader(fh))
    violations = []
    for r in side:
        if r["mcse"] == "":
            continue
        mcse = float(r["mcse"])
        d = int(r["decimals"])
        frac = r["estimate_text"].rstrip("%").split(".")
        printed = len(frac[1]) if len(frac) == 2 else 0
        if printed != d or d != decimals_for(mcse) or (mcse > 0 and 10.0 ** -d > mcse and d < 6):
            violations.append(r["measure"])
    table = (out / "table.txt").read_text()
    golden = (GOLDEN / "survival_table.txt").read_text()
    ok = not violations and table == golden
    detail = f"{len(side)} cells, {len(violations)} rounding violations, golden match {table == golden}"
    assert report(capsys, "9 (table rounding)", ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
