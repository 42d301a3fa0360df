"""SVG figures for exploring estimates and presenting performance.

Every renderer returns a :class:`Figure` holding the SVG text and a CSV
sidecar. Each plotted element carries an ``id`` that matches the sidecar's
``element_id`` column, and the sidecar stores both the data values and the
axis maps, so all coordinates can be recomputed.
"""

from __future__ import annotations

import itertools
import math
from typing import Mapping, Sequence

import numpy as np

from ..errors import InsufficientMethods, NonFactorialGrid
from ..perf import covers, proportion_pct
from ..records import EstimatesRecord, PerformanceEstimate
from .svg import Axis, Figure, Svg, padded, sidecar_csv
from .table import LABELS

PANEL_W = 260
PANEL_H = 220
MARGIN_L = 70
MARGIN_T = 40
GAP = 50

METHOD_COLORS = ("#1f5fbf", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#16a085", "#7f8c8d")


def _ordered(values):
    return list(dict.fromkeys(values))


def _cells(records: Sequence[EstimatesRecord]):
    out: dict[tuple[str, str], list[EstimatesRecord]] = {}
    for r in records:
        out.setdefault((r.dgm_id, r.method_id), []).append(r)
    return out


def _slug(*parts) -> str:
    return "-".join(str(p).replace(" ", "_") for p in parts)


def zip_ranks(rows: Sequence[EstimatesRecord], theta: float):
    """Fractional centile (0, 100] of |z| per row; ties broken by repetition."""
    z = [(r.theta_hat - theta) / r.se_hat if r.se_hat else (math.inf if r.theta_hat != theta else 0.0)
         for r in rows]
    order = sorted(range(len(rows)), key=lambda k: (abs(z[k]), rows[k].repetition))
    n = len(rows)
    centile = [0.0] * n
    for rank, k in enumerate(order, start=1):
        centile[k] = 100.0 * rank / n
    return z, centile


def render_zip_plot(
    records: Sequence[EstimatesRecord],
    theta: Mapping[str, float],
    alpha: float = 0.05,
    zoom: bool = False,
) -> Figure:
    """One panel per (dgm, method): CIs ranked by |z|, coloured by coverage.

    ``theta`` maps dgm_id to the true value. With ``zoom`` only the top 20% of
    ranks are shown.
    """
    cells = _cells(records)
    dgms = _ordered(r.dgm_id for r in records)
    methods = _ordered(r.method_id for r in records)
    y_lo = 80.0 if zoom else 0.0
    svg = Svg(MARGIN_L + len(methods) * (PANEL_W + GAP), MARGIN_T + len(dgms) * (PANEL_H + GAP), "Zip plot")
    side = []
    z_crit = 1.959963984540054
    for row_i, dgm in enumerate(dgms):
        for col_i, method in enumerate(methods):
            left = MARGIN_L + col_i * (PANEL_W + GAP)
            top = MARGIN_T + row_i * (PANEL_H + GAP)
            facet = _slug("zip", dgm, method)
            svg.group_open(id_=facet)
            svg.text(left, top - 6, f"DGM {dgm}, {method}", "label")
            rows = [r for r in cells.get((dgm, method), [])
                    if r.converged and r.ci_low is not None and r.ci_high is not None]
            th = theta.get(dgm)
            if not rows or th is None:
                svg.text(left + PANEL_W / 2, top + PANEL_H / 2, "no converged intervals", "note", anchor="middle")
                svg.group_close()
                continue
            lo = min(min(r.ci_low for r in rows), th)
            hi = max(max(r.ci_high for r in rows), th)
            xa = Axis(*padded(lo, hi), left, left + PANEL_W)
            ya = Axis(y_lo, 100.0, top + PANEL_H, top)
            svg.line(left, top + PANEL_H, left + PANEL_W, top + PANEL_H, "axis")
            z, cent = zip_ranks(rows, th)
            cov = covers([r.ci_low for r in rows], [r.ci_high for r in rows], th)
            est, mc = proportion_pct(cov)
            for r, zz, c, ok in zip(rows, z, cent, cov):
                if c < y_lo:
                    continue
                eid = _slug(facet, r.repetition)
                svg.line(xa(r.ci_low), ya(c), xa(r.ci_high), ya(c), "cover" if ok else "noncover", eid)
                side.append({
                    "element_id": eid, "kind": "interval", "dgm_id": dgm, "method_id": method,
                    "repetition": r.repetition, "theta_hat": r.theta_hat, "se_hat": r.se_hat,
                    "ci_low": r.ci_low, "ci_high": r.ci_high, "z": zz, "centile": c, "covers": bool(ok),
                    **xa.columns("x"), **ya.columns("y"),
                })
            for tag, val in (("lower", est - z_crit * mc), ("upper", est + z_crit * mc)):
                val = min(max(val, y_lo), 100.0)
                eid = _slug(facet, "mcse", tag)
                svg.line(left, ya(val), left + PANEL_W, ya(val), "mcse", eid)
                side.append({"element_id": eid, "kind": "mcse_rule", "dgm_id": dgm, "method_id": method,
                             "value": val, "coverage": est, "mcse": mc, **ya.columns("y")})
            eid = _slug(facet, "theta")
            svg.line(xa(th), top, xa(th), top + PANEL_H, "reference", eid)
            side.append({"element_id": eid, "kind": "reference", "dgm_id": dgm, "method_id": method,
                         "value": th, **xa.columns("x")})
            svg.text(left + PANEL_W, top + PANEL_H + 16, f"coverage {est:.1f}%", "note", anchor="end")
            svg.group_close()
    return Figure(svg.render(), sidecar_csv(side))


NULL_REFERENCE = {
    "bias": 0.0, "empse": 0.0, "mse": 0.0, "avg_modse": 0.0, "rel_precision": 0.0,
    "rel_err_modse": 0.0, "convergence_pct": 100.0, "mean": 0.0,
}


def reference_value(measure: str, alpha: float = 0.05) -> float:
    if measure in ("coverage", "be_coverage"):
        return 100.0 * (1 - alpha)
    if measure == "rejection_pct":
        return 100.0 * alpha
    return NULL_REFERENCE.get(measure, 0.0)


def render_lollipop(
    perf: Sequence[PerformanceEstimate],
    measures: Sequence[str] | None = None,
    alpha: float = 0.05,
    dgm_labels: Mapping[str, str] | None = None,
) -> Figure:
    """Measures stacked vertically, DGMs across columns, one row per method.

    Parentheses mark estimate +/- 1.96 MCSE.
    """
    dgm_labels = dict(dgm_labels or {})
    measures = list(measures or _ordered(p.measure for p in perf))
    dgms = _ordered(p.dgm_id for p in perf)
    methods = _ordered(p.method_id for p in perf)
    index = {(p.measure, p.dgm_id, p.method_id): p for p in perf}
    row_h = 22
    panel_h = row_h * (len(methods) + 1)
    svg = Svg(MARGIN_L + 60 + len(dgms) * (PANEL_W + GAP), MARGIN_T + len(measures) * (panel_h + GAP),
              "Performance")
    side = []
    half_mult = 1.959963984540054
    for mi, measure in enumerate(measures):
        ref = reference_value(measure, alpha)
        vals = [ref]
        for p in perf:
            if p.measure == measure:
                h = half_mult * (p.mcse or 0.0)
                vals += [p.estimate - h, p.estimate + h]
        lo, hi = padded(min(vals), max(vals), 0.1)
        top = MARGIN_T + mi * (panel_h + GAP)
        svg.text(10, top + panel_h / 2, LABELS.get(measure, measure), "label")
        for di, dgm in enumerate(dgms):
            left = MARGIN_L + 60 + di * (PANEL_W + GAP)
            xa = Axis(lo, hi, left, left + PANEL_W)
            facet = _slug("lolly", measure, dgm)
            svg.group_open(id_=facet)
            if mi == 0:
                svg.text(left + PANEL_W / 2, top - 8, f"DGM {dgm_labels.get(dgm, dgm)}", "label", anchor="middle")
            eid = _slug(facet, "reference")
            svg.line(xa(ref), top, xa(ref), top + panel_h, "reference", eid)
            side.append({"element_id": eid, "kind": "reference", "measure": measure, "dgm_id": dgm,
                         "value": ref, **xa.columns("x")})
            for k, method in enumerate(methods):
                p = index.get((measure, dgm, method))
                y = top + row_h * (k + 1)
                if di == 0:
                    svg.text(left - 6, y + 4, method, "label", anchor="end")
                if p is None:
                    continue
                base = _slug(facet, method)
                svg.line(xa(ref), y, xa(p.estimate), y, "stem", base + "-stem")
                svg.circle(xa(p.estimate), y, 3.5, "point", base + "-point")
                row = {"element_id": base, "kind": "lollipop", "measure": measure, "dgm_id": dgm,
                       "method_id": method, "estimate": p.estimate, "mcse": p.mcse if p.mcse is not None else "",
                       "reference": ref, "y": y, **xa.columns("x")}
                if p.mcse is not None:
                    half = half_mult * p.mcse
                    svg.text(xa(p.estimate - half), y + 5, "(", "paren", base + "-lo")
                    svg.text(xa(p.estimate + half), y + 5, ")", "paren", base + "-hi")
                    row.update({"mc_low": p.estimate - half, "mc_high": p.estimate + half})
                side.append(row)
            svg.group_close()
    return Figure(svg.render(), sidecar_csv(side))


def nested_loop_order(factors: Mapping[str, Mapping[str, object]], factor_order: Sequence[str]) -> list[str]:
    """DGM ids ordered lexicographically by ``factor_order`` (first factor slowest).

    Levels keep their order of first appearance. Raises NonFactorialGrid when
    the DGMs are not the full cross of the observed levels.
    """
    dgms = list(factors)
    for d in dgms:
        missing = [f for f in factor_order if f not in factors[d]]
        if missing:
            raise NonFactorialGrid(f"DGM {d} lacks factor(s) {missing}")
    levels = {f: _ordered(factors[d][f] for d in dgms) for f in factor_order}
    combos = [tuple(factors[d][f] for f in factor_order) for d in dgms]
    if len(set(combos)) != len(combos) or len(combos) != math.prod(len(v) for v in levels.values()):
        raise NonFactorialGrid("DGMs do not form a full factorial grid over the given factors")
    pos = {f: {lv: k for k, lv in enumerate(levels[f])} for f in factor_order}
    return sorted(dgms, key=lambda d: tuple(pos[f][factors[d][f]] for f in factor_order))


def render_nested_loop(
    perf: Sequence[PerformanceEstimate],
    factors: Mapping[str, Mapping[str, object]],
    factor_order: Sequence[str],
    measure: str,
) -> Figure:
    """Step line per method across DGMs in nested-factor order, with level bands below."""
    order = nested_loop_order(factors, factor_order)
    rows = [p for p in perf if p.measure == measure]
    methods = _ordered(p.method_id for p in rows)
    index = {(p.dgm_id, p.method_id): p.estimate for p in rows}
    k = len(order)
    plot_w = max(300, 40 * k)
    band_h = 18
    plot_h = 240
    width = MARGIN_L + plot_w + 140
    height = MARGIN_T + plot_h + 20 + band_h * len(factor_order) + 20
    svg = Svg(width, height, f"Nested-loop plot: {LABELS.get(measure, measure)}")
    vals = [v for v in index.values()] or [0.0]
    xa = Axis(0.5, k + 0.5, MARGIN_L, MARGIN_L + plot_w)
    ya = Axis(*padded(min(vals), max(vals)), MARGIN_T + plot_h, MARGIN_T)
    svg.line(MARGIN_L, MARGIN_T + plot_h, MARGIN_L + plot_w, MARGIN_T + plot_h, "axis")
    side = []
    for mi, method in enumerate(methods):
        pts = []
        for pos, dgm in enumerate(order, start=1):
            v = index.get((dgm, method))
            if v is None:
                continue
            pts += [(xa(pos - 0.5), ya(v)), (xa(pos + 0.5), ya(v))]
            side.append({"element_id": _slug("loop", method), "kind": "step", "method_id": method,
                         "position": pos, "dgm_id": dgm, "value": v, **xa.columns("x"), **ya.columns("y")})
        color = METHOD_COLORS[mi % len(METHOD_COLORS)]
        svg.polyline(pts, "step", _slug("loop", method), style=f"stroke:{color}")
        svg.text(MARGIN_L + plot_w + 10, MARGIN_T + 14 * (mi + 1), method, "label")
    for fi, f in enumerate(factor_order):
        y = MARGIN_T + plot_h + 20 + fi * band_h
        for level, grp in itertools.groupby(enumerate(order, start=1), key=lambda t: factors[t[1]][f]):
            grp = list(grp)
            a, b = grp[0][0], grp[-1][0]
            eid = _slug("band", f, a)
            svg.rect(xa(a - 0.5), y, xa(b + 0.5) - xa(a - 0.5), band_h - 2, "band", eid)
            svg.text((xa(a - 0.5) + xa(b + 0.5)) / 2, y + band_h - 6, f"{f}={level}", "label", anchor="middle")
            side.append({"element_id": eid, "kind": "band", "factor": f, "level": str(level),
                         "first_position": a, "last_position": b, **xa.columns("x")})
    return Figure(svg.render(), sidecar_csv(side))


def render_strip(records: Sequence[EstimatesRecord]) -> Figure:
    """theta_hat and se_hat against repetition, one row per (dgm, method), with mean pipes."""
    cells = _cells(records)
    keys = [k for k in _ordered((r.dgm_id, r.method_id) for r in records)]
    conv = [r for r in records if r.converged and r.theta_hat is not None]
    svg = Svg(MARGIN_L + 2 * (PANEL_W + GAP), MARGIN_T + len(keys) * (PANEL_H // 2 + GAP), "Estimates")
    side = []
    reps = [r.repetition for r in conv] or [1]
    for col, field in enumerate(("theta_hat", "se_hat")):
        vals = [getattr(r, field) for r in conv if getattr(r, field) is not None] or [0.0]
        lo, hi = padded(min(vals), max(vals))
        for row_i, (dgm, method) in enumerate(keys):
            left = MARGIN_L + col * (PANEL_W + GAP)
            top = MARGIN_T + row_i * (PANEL_H // 2 + GAP)
            xa = Axis(lo, hi, left, left + PANEL_W)
            ya = Axis(min(reps), max(reps) if max(reps) > min(reps) else min(reps) + 1, top + PANEL_H // 2, top)
            facet = _slug("strip", field, dgm, method)
            svg.group_open(id_=facet)
            svg.text(left, top - 6, f"{field}: DGM {dgm}, {method}", "label")
            pts = [r for r in cells[(dgm, method)] if r.converged and getattr(r, field) is not None]
            for r in pts:
                eid = _slug(facet, r.repetition)
                v = getattr(r, field)
                svg.circle(xa(v), ya(r.repetition), 1.5, "point", eid)
                side.append({"element_id": eid, "kind": "point", "field": field, "dgm_id": dgm,
                             "method_id": method, "repetition": r.repetition, "value": v,
                             **xa.columns("x"), **ya.columns("y")})
            if pts:
                m = float(np.mean([getattr(r, field) for r in pts]))
                eid = _slug(facet, "mean")
                svg.line(xa(m), top, xa(m), top + PANEL_H // 2, "mean", eid)
                side.append({"element_id": eid, "kind": "mean", "field": field, "dgm_id": dgm,
                             "method_id": method, "value": m, **xa.columns("x")})
            svg.group_close()
    return Figure(svg.render(), sidecar_csv(side))


def _paired(cells, dgm, a, b, field):
    va = {r.repetition: getattr(r, field) for r in cells.get((dgm, a), [])
          if r.converged and getattr(r, field) is not None}
    vb = {r.repetition: getattr(r, field) for r in cells.get((dgm, b), [])
          if r.converged and getattr(r, field) is not None}
    reps = sorted(set(va) & set(vb))
    return reps, [va[i] for i in reps], [vb[i] for i in reps]


def render_scatter_matrix(records: Sequence[EstimatesRecord], dgm: str) -> Figure:
    """Method-vs-method panels for one DGM: theta_hat above the diagonal, se_hat below."""
    dgm = str(dgm)
    methods = _ordered(r.method_id for r in records if r.dgm_id == dgm)
    if len(methods) < 2:
        raise InsufficientMethods("scatter matrix needs at least two methods")
    cells = _cells(records)
    size = 160
    m = len(methods)
    svg = Svg(MARGIN_L + m * (size + 20), MARGIN_T + m * (size + 20), f"DGM {dgm}: method comparison")
    side = []
    for i, j in itertools.product(range(m), repeat=2):
        left = MARGIN_L + j * (size + 20)
        top = MARGIN_T + i * (size + 20)
        if i == j:
            svg.rect(left, top, size, size, "band")
            svg.text(left + size / 2, top + size / 2, methods[i], "label", anchor="middle")
            continue
        field = "theta_hat" if i < j else "se_hat"
        # x: column method, y: row method
        reps, xs, ys = _paired(cells, dgm, methods[j], methods[i], field)
        facet = _slug("matrix", field, methods[i], methods[j])
        svg.group_open(id_=facet)
        svg.rect(left, top, size, size, "band")
        if reps:
            lo, hi = padded(min(xs + ys), max(xs + ys))
            xa = Axis(lo, hi, left, left + size)
            ya = Axis(lo, hi, top + size, top)
            eid = _slug(facet, "equality")
            svg.line(xa(lo), ya(lo), xa(hi), ya(hi), "reference", eid)
            side.append({"element_id": eid, "kind": "equality", "field": field, "x_method": methods[j],
                         "y_method": methods[i], "x": lo, "y": lo, "x2": hi, "y2": hi,
                         **xa.columns("x"), **ya.columns("y")})
            for rep, xv, yv in zip(reps, xs, ys):
                eid = _slug(facet, rep)
                svg.circle(xa(xv), ya(yv), 1.5, "point", eid)
                side.append({"element_id": eid, "kind": "point", "field": field, "x_method": methods[j],
                             "y_method": methods[i], "repetition": rep, "x": xv, "y": yv,
                             **xa.columns("x"), **ya.columns("y")})
        svg.group_close()
    return Figure(svg.render(), sidecar_csv(side))


def render_diff_vs_mean(records: Sequence[EstimatesRecord], comparator: str) -> Figure:
    """(method - comparator) against their pairwise mean, with zero line and 95% limits of agreement."""
    methods = _ordered(r.method_id for r in records)
    if len(methods) < 2 or comparator not in methods:
        raise InsufficientMethods("difference-vs-mean plot needs the comparator and another method")
    others = [m for m in methods if m != comparator]
    dgms = _ordered(r.dgm_id for r in records)
    cells = _cells(records)
    svg = Svg(MARGIN_L + len(others) * (PANEL_W + GAP), MARGIN_T + len(dgms) * (PANEL_H + GAP),
              f"Difference vs mean (reference: {comparator})")
    side = []
    for row_i, dgm in enumerate(dgms):
        for col_i, method in enumerate(others):
            left = MARGIN_L + col_i * (PANEL_W + GAP)
            top = MARGIN_T + row_i * (PANEL_H + GAP)
            facet = _slug("diff", dgm, method)
            svg.group_open(id_=facet)
            svg.text(left, top - 6, f"DGM {dgm}: {method} - {comparator}", "label")
            reps, a, b = _paired(cells, dgm, method, comparator, "theta_hat")
            if not reps:
                svg.group_close()
                continue
            a = np.asarray(a)
            b = np.asarray(b)
            mean = (a + b) / 2
            diff = a - b
            md = float(diff.mean())
            sd = float(diff.std(ddof=1)) if diff.size > 1 else 0.0
            ylo, yhi = padded(min(diff.min(), 0.0, md - 1.96 * sd), max(diff.max(), 0.0, md + 1.96 * sd))
            xa = Axis(*padded(mean.min(), mean.max()), left, left + PANEL_W)
            ya = Axis(ylo, yhi, top + PANEL_H, top)
            eid = _slug(facet, "zero")
            svg.line(left, ya(0.0), left + PANEL_W, ya(0.0), "reference", eid)
            side.append({"element_id": eid, "kind": "zero", "dgm_id": dgm, "method_id": method, "y": 0.0,
                         **ya.columns("y")})
            for tag, v in (("lower", md - 1.96 * sd), ("upper", md + 1.96 * sd)):
                eid = _slug(facet, "loa", tag)
                svg.line(left, ya(v), left + PANEL_W, ya(v), "loa", eid)
                side.append({"element_id": eid, "kind": "limit", "dgm_id": dgm, "method_id": method, "y": v,
                             **ya.columns("y")})
            for rep, mv, dv in zip(reps, mean, diff):
                eid = _slug(facet, rep)
                svg.circle(xa(mv), ya(dv), 1.5, "point", eid)
                side.append({"element_id": eid, "kind": "point", "dgm_id": dgm, "method_id": method,
                             "repetition": rep, "x": float(mv), "y": float(dv), **xa.columns("x"), **ya.columns("y")})
            svg.group_close()
    return Figure(svg.render(), sidecar_csv(side))
