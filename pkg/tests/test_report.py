import math

import numpy as np
import pytest

from simstudy.errors import InsufficientMethods, NonFactorialGrid
from simstudy.records import EstimatesRecord, PerformanceEstimate
from simstudy.report import (
    decimals_for, format_cell, render_diff_vs_mean, render_lollipop, render_nested_loop, render_scatter_matrix,
    render_strip, render_table, render_zip_plot,
)
from simstudy.report.plots import nested_loop_order
from svgcheck import axis, class_of, elements_by_id, sidecar_rows, tag

TOL = 1e-9


def records(n=60, methods=("a", "b"), dgms=("1", "2"), seed=0, spread=1.0):
    rng = np.random.default_rng(seed)
    out = []
    for dgm in dgms:
        base = rng.normal(0, 0.2, n)
        base_se = rng.uniform(0.15, 0.25, n)
        for k, m in enumerate(methods):
            th = base + spread * k * rng.normal(0, 0.05, n)
            se = base_se * (1 + spread * 0.1 * k * rng.uniform(0, 1, n))
            for i in range(n):
                lo, hi = th[i] - 1.96 * se[i], th[i] + 1.96 * se[i]
                out.append(EstimatesRecord(dgm, i + 1, m, "theta", float(th[i]), float(se[i]), math.inf,
                                           float(lo), float(hi), 0.5, True, "none"))
    return out


def perf_rows(dgms=("1", "2"), methods=("a", "b"), measures=("bias", "coverage")):
    out = []
    for measure in measures:
        for d in dgms:
            for j, m in enumerate(methods):
                est = 95.0 - j if measure == "coverage" else 0.01 * (j + int(d))
                out.append(PerformanceEstimate(d, m, "theta", measure, est, 0.5 if measure == "coverage" else 0.004,
                                               100))
    return out


# --- rounding -------------------------------------------------------------

@pytest.mark.parametrize("mcse,d", [(0.0034, 3), (0.001, 3), (0.0099, 3), (0.01, 2), (0.5, 1), (2.0, 0),
                                    (11.0, 0), (1e-9, 6), (None, 3), (0.0, 3)])
def test_decimals_for(mcse, d):
    assert decimals_for(mcse) == d


def test_format_cell_examples():
    assert format_cell(0.0492, 0.0034)[:2] == ("0.049", "(0.003)")
    assert format_cell(0.123456, 0.0)[0] == "0.123"
    assert format_cell(0.2001, 0.0003)[1] == "(<0.001)"
    assert format_cell(94.61, 0.56, percent=True)[:2] == ("94.6%", "(0.6)")


def test_last_digit_never_finer_than_mcse():
    rng = np.random.default_rng(4)
    for mcse in 10 ** rng.uniform(-5, 2, 500):
        d = decimals_for(mcse)
        if d < 6:
            assert 10.0 ** -d <= mcse * (1 + 1e-12)
        if d > 0:
            assert 10.0 ** -(d - 1) > mcse


def test_table_layout_and_sidecar():
    text, side = render_table(perf_rows(), {"1": "gamma=1", "2": "gamma=1.5"})
    assert "gamma=1.5" in text and "95.0% (0.5)" in text
    assert text == render_table(perf_rows(), {"1": "gamma=1", "2": "gamma=1.5"})[0]
    rows = sidecar_rows(side)
    assert len(rows) == 8
    for r in rows:
        if r["mcse"]:
            assert 10.0 ** -int(r["decimals"]) <= float(r["mcse"]) or r["mcse_text"] == "(<0.001)"


# --- sidecar coordinates -----------------------------------------------------

def check_coordinates(fig):
    els = elements_by_id(fig.svg)
    rows = sidecar_rows(fig.sidecar)
    checked = 0
    for r in rows:
        el = els.get(r["element_id"])
        kind = r["kind"]
        if kind == "interval":
            xa, ya = axis(r, "x"), axis(r, "y")
            got = [float(el.get(k)) for k in ("x1", "x2", "y1")]
            want = [xa(r["ci_low"]), xa(r["ci_high"]), ya(r["centile"])]
        elif kind == "mcse_rule":
            got, want = [float(el.get("y1"))], [axis(r, "y")(r["value"])]
        elif kind == "reference" and "x_d0" in r and r["x_d0"]:
            got, want = [float(el.get("x1"))], [axis(r, "x")(r["value"])]
        elif kind == "lollipop":
            xa = axis(r, "x")
            point = els[r["element_id"] + "-point"]
            got = [float(point.get("cx")), float(point.get("cy"))]
            want = [xa(r["estimate"]), float(r["y"])]
            if r["mcse"]:
                got += [float(els[r["element_id"] + "-lo"].get("x")), float(els[r["element_id"] + "-hi"].get("x"))]
                want += [xa(r["mc_low"]), xa(r["mc_high"])]
        elif kind == "point" and "value" in r and r.get("value"):
            got = [float(el.get("cx")), float(el.get("cy"))]
            want = [axis(r, "x")(r["value"]), axis(r, "y")(r["repetition"])]
        elif kind == "point":
            got = [float(el.get("cx")), float(el.get("cy"))]
            want = [axis(r, "x")(r["x"]), axis(r, "y")(r["y"])]
        elif kind in ("zero", "limit"):
            got, want = [float(el.get("y1"))], [axis(r, "y")(r["y"])]
        elif kind == "mean":
            got, want = [float(el.get("x1"))], [axis(r, "x")(r["value"])]
        elif kind == "equality":
            got = [float(el.get(k)) for k in ("x1", "y1", "x2", "y2")]
            want = [axis(r, "x")(r["x"]), axis(r, "y")(r["y"]), axis(r, "x")(r["x2"]), axis(r, "y")(r["y2"])]
        elif kind == "step":
            # each step contributes one horizontal segment to the method's polyline
            xa, ya = axis(r, "x"), axis(r, "y")
            pos = int(r["position"])
            pts = [tuple(map(float, p.split(","))) for p in el.get("points").split()]
            seg = next(k for k in range(0, len(pts), 2) if abs(pts[k][0] - xa(pos - 0.5)) < TOL)
            got = [*pts[seg], *pts[seg + 1]]
            want = [xa(pos - 0.5), ya(r["value"]), xa(pos + 0.5), ya(r["value"])]
        elif kind == "band":
            xa = axis(r, "x")
            got = [float(el.get("x")), float(el.get("width"))]
            a, b = int(r["first_position"]), int(r["last_position"])
            want = [xa(a - 0.5), xa(b + 0.5) - xa(a - 0.5)]
        else:
            continue
        assert np.allclose(got, want, rtol=0, atol=TOL), (r["element_id"], got, want)
        checked += 1
    return checked


def test_zip_plot_coordinates_and_counts():
    recs = records()
    fig = render_zip_plot(recs, {"1": 0.0, "2": 0.0})
    assert check_coordinates(fig) > 4 * 60
    els = elements_by_id(fig.svg)
    for dgm in ("1", "2"):
        for m in ("a", "b"):
            rows = [r for r in recs if r.dgm_id == dgm and r.method_id == m]
            cov = sum(r.ci_low <= 0 <= r.ci_high for r in rows) / len(rows)
            ids = [k for k in els if k.startswith(f"zip-{dgm}-{m}-") and k.split("-")[-1].isdigit()]
            non = sum(class_of(els[k]) == "noncover" for k in ids)
            assert len(ids) == len(rows)
            assert non / len(ids) == 1 - cov or abs(non / len(ids) - (1 - cov)) < 1e-15


def test_zip_all_cover_single_class():
    recs = [EstimatesRecord("1", i, "a", "theta", 0.0, 1.0, math.inf, -1.0, 1.0, 1.0, True, "none")
            for i in range(1, 11)]
    fig = render_zip_plot(recs, {"1": 0.0})
    classes = {class_of(el) for k, el in elements_by_id(fig.svg).items() if k.split("-")[-1].isdigit()}
    assert classes == {"cover"}
    rows = sidecar_rows(fig.sidecar)
    assert {float(r["value"]) for r in rows if r["kind"] == "mcse_rule"} == {100.0}


def test_zip_zoom_keeps_top_fifth():
    fig = render_zip_plot(records(n=50), {"1": 0.0, "2": 0.0}, zoom=True)
    rows = [r for r in sidecar_rows(fig.sidecar) if r["kind"] == "interval"]
    assert len(rows) == 4 * 11 and all(float(r["centile"]) >= 80 for r in rows)


def test_lollipop_half_width_and_coordinates():
    fig = render_lollipop(perf_rows())
    assert check_coordinates(fig) == 8 + 4
    for r in sidecar_rows(fig.sidecar):
        if r["kind"] == "lollipop":
            half = (float(r["mc_high"]) - float(r["mc_low"])) / 2
            assert half == pytest.approx(1.959963984540054 * float(r["mcse"]), rel=1e-12)


def test_lollipop_single_stem():
    fig = render_lollipop([PerformanceEstimate("1", "a", "theta", "bias", 0.1, 0.01, 10)])
    els = elements_by_id(fig.svg)
    assert sum(class_of(e) == "stem" for e in els.values()) == 1
    assert sum(class_of(e) == "paren" for e in els.values()) == 2


FACTORS = {str(k + 1): {"gamma": g, "n_obs": n} for k, (g, n) in enumerate(
    [(g, n) for g in (1, 1.5) for n in (50, 100, 200)])}


def test_nested_loop_positions():
    perf = [PerformanceEstimate(d, m, "theta", "bias", 0.01 * int(d) + 0.1 * j, 0.001, 100)
            for d in FACTORS for j, m in enumerate(("a", "b"))]
    fig = render_nested_loop(perf, FACTORS, ["gamma", "n_obs"], "bias")
    rows = sidecar_rows(fig.sidecar)
    assert sorted({int(r["position"]) for r in rows if r["kind"] == "step"}) == [1, 2, 3, 4, 5, 6]
    assert len({r["element_id"] for r in rows if r["kind"] == "step"}) == 2
    assert check_coordinates(fig) > 0


def test_nested_loop_order_permutation():
    assert nested_loop_order(FACTORS, ["gamma", "n_obs"]) == ["1", "2", "3", "4", "5", "6"]
    assert nested_loop_order(FACTORS, ["n_obs", "gamma"]) == ["1", "4", "2", "5", "3", "6"]


def test_nested_loop_rejects_non_factorial():
    partial = {k: v for k, v in FACTORS.items() if k != "6"}
    with pytest.raises(NonFactorialGrid):
        nested_loop_order(partial, ["gamma", "n_obs"])


def test_strip_coordinates():
    assert check_coordinates(render_strip(records(n=20))) > 0


def test_scatter_matrix_and_diff_coordinates():
    recs = records(n=30, methods=("a", "b", "c"))
    assert check_coordinates(render_scatter_matrix(recs, "1")) > 0
    assert check_coordinates(render_diff_vs_mean(recs, "a")) > 0


def test_identical_methods_collapse():
    recs = records(n=25, methods=("a", "b"), spread=0.0)
    for r in sidecar_rows(render_scatter_matrix(recs, "1").sidecar):
        if r["kind"] == "point":
            assert float(r["x"]) == float(r["y"])
    for r in sidecar_rows(render_diff_vs_mean(recs, "a").sidecar):
        if r["kind"] in ("point", "limit"):
            assert float(r["y"]) == 0.0


def test_comparison_plots_need_two_methods():
    recs = records(n=5, methods=("a",))
    with pytest.raises(InsufficientMethods):
        render_scatter_matrix(recs, "1")
    with pytest.raises(InsufficientMethods):
        render_diff_vs_mean(recs, "a")


def test_emitters_deterministic():
    recs = records(n=15)
    for make in (lambda: render_zip_plot(recs, {"1": 0.0, "2": 0.0}), lambda: render_strip(recs),
                 lambda: render_lollipop(perf_rows()), lambda: render_diff_vs_mean(recs, "a")):
        a, b = make(), make()
        assert a.svg == b.svg and a.sidecar == b.sidecar
