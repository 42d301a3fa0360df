"""Behaviour of the built-in survival study beyond the acceptance checks."""

import pytest

from simstudy.engine import run_study, truth_from_manifest
from simstudy.pipeline import TABLE_MEASURES, analyze, dgm_labels, survival_example_config


@pytest.fixture(scope="module")
def long_follow_up():
    cfg = survival_example_config(n_sim=400, censor_time=5.3)
    res = run_study(cfg)
    perf = analyze(res.estimates, truth_from_manifest(res.manifest), cfg)
    return res, {(p.measure, p.dgm_id, p.method_id): p for p in perf}


def test_misspecified_exponential_biased_toward_null(long_follow_up):
    _, c = long_follow_up
    assert 0.03 <= c[("bias", "2", "exponential")].estimate <= 0.07
    assert 10 <= c[("rel_precision", "2", "exponential")].estimate <= 30


def test_flexible_fits_unbiased(long_follow_up):
    _, c = long_follow_up
    for dgm in ("1", "2"):
        for m in ("weibull", "cox"):
            b = c[("bias", dgm, m)]
            assert abs(b.estimate) <= 3 * b.mcse


def test_no_missing_estimates(long_follow_up):
    res, _ = long_follow_up
    assert all(r.converged for r in res.estimates)


def test_example_layout():
    cfg = survival_example_config()
    assert cfg.seed == 72789 and cfg.n_sim == 1600
    assert [m.id for m in cfg.methods] == ["exponential", "weibull", "cox"]
    assert cfg.measures == TABLE_MEASURES and cfg.comparator == "weibull"
    manifest = run_study(survival_example_config(n_sim=1)).manifest
    assert dgm_labels(manifest) == {"1": "gamma=1", "2": "gamma=1.5"}
