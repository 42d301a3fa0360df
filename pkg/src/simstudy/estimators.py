"""Analysis methods applied to each simulated dataset.

All survival fitters estimate the log hazard ratio for x=1 vs x=0 and use a
normal reference distribution. The normal-mean method uses t with n-1 df.
Fitters raise :class:`FitError` carrying an error code; the engine turns that
into a missing row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dgm import NumericDataset, SurvivalDataset
from .errors import FitError, InsufficientData, InvalidParameter

ERROR_CODES = ("none", "nonconvergence", "separation", "no_events", "numeric")

GRAD_TOL = 1e-8
MAX_ITER = 50
MAX_HALVINGS = 20


@dataclass(frozen=True)
class Estimate:
    theta_hat: float
    se_hat: float
    df: float  # math.inf for normal reference
    ci_low: float
    ci_high: float
    p_value: float
    converged: bool = True
    error_code: str = "none"
    iterations: int = 0


def critical_value(alpha: float, df: float = math.inf) -> float:
    if not 0 < alpha < 1:
        raise InvalidParameter(f"alpha must lie in (0, 1), got {alpha}")
    if math.isinf(df):
        return float(stats.norm.ppf(1 - alpha / 2))
    return float(stats.t.ppf(1 - alpha / 2, df))


def wald_test(e: Estimate, theta0: float = 0.0, alpha: float = 0.05) -> tuple[float, bool]:
    """Two-sided Wald p-value; rejects when p <= alpha."""
    if e.se_hat == 0:
        p = 1.0 if e.theta_hat == theta0 else 0.0
    else:
        z = abs(e.theta_hat - theta0) / e.se_hat
        if math.isinf(e.df):
            p = float(2 * stats.norm.sf(z))
        else:
            p = float(2 * stats.t.sf(z, e.df))
    p = min(max(p, 0.0), 1.0)
    return p, p <= alpha


def _finish(theta: float, se: float, df: float, alpha: float, theta0: float, iterations: int = 0) -> Estimate:
    if not (math.isfinite(theta) and math.isfinite(se)) or se < 0:
        raise FitError("numeric", "non-finite estimate or standard error")
    half = critical_value(alpha, df) * se
    e = Estimate(theta, se, df, theta - half, theta + half, 1.0, iterations=iterations)
    p, _ = wald_test(e, theta0, alpha)
    return Estimate(theta, se, df, theta - half, theta + half, p, iterations=iterations)


def _arm_totals(d: SurvivalDataset):
    x = np.asarray(d.x)
    ev = np.asarray(d.event)
    t = np.asarray(d.time, dtype=np.float64)
    d1 = float(ev[x == 1].sum())
    d0 = float(ev[x == 0].sum())
    t1 = float(t[x == 1].sum())
    t0 = float(t[x == 0].sum())
    return d0, t0, d1, t1


def fit_exponential_ph(d: SurvivalDataset, alpha: float = 0.05, theta0: float = 0.0) -> Estimate:
    """Exponential PH model; the MLE has a closed form in events and follow-up per arm."""
    d0, t0, d1, t1 = _arm_totals(d)
    if d0 == 0 or d1 == 0:
        raise FitError("no_events", "an arm has no events")
    theta = math.log(d1 / t1) - math.log(d0 / t0)
    se = math.sqrt(1 / d1 + 1 / d0)
    return _finish(theta, se, math.inf, alpha, theta0)


def weibull_loglik(params, x, time, event) -> float:
    """Weibull PH log-likelihood in (log lambda, log gamma, theta)."""
    a, b, theta = params
    g = math.exp(b)
    logt = np.log(time)
    lin = a + x * theta
    cum = np.exp(lin + g * logt)
    return float(np.sum(event * (lin + b + (g - 1) * logt)) - np.sum(cum))


def _weibull_derivs(params, x, logt, event):
    a, b, theta = params
    g = math.exp(b)
    lin = a + x * theta
    glt = g * logt
    cum = np.exp(lin + glt)
    ll = float(np.sum(event * (lin + b + glt - logt)) - np.sum(cum))
    cg = cum * glt
    xc = x * cum
    grad = np.array([
        event.sum() - cum.sum(),
        np.sum(event * (1 + glt)) - cg.sum(),
        np.sum(event * x) - xc.sum(),
    ])
    h_ab = -cg.sum()
    h_at = -xc.sum()
    h_bb = np.sum(event * glt) - cg.sum() - np.sum(cg * glt)
    h_bt = -np.sum(x * cg)
    h_tt = -np.sum(x * xc)
    hess = np.array([
        [-cum.sum(), h_ab, h_at],
        [h_ab, h_bb, h_bt],
        [h_at, h_bt, h_tt],
    ])
    return ll, grad, hess


def _newton(derivs, start, loglik, grad_tol=GRAD_TOL, max_iter=MAX_ITER):
    """Newton-Raphson with step halving; returns (params, hessian, iterations)."""
    params = np.asarray(start, dtype=np.float64)
    ll, grad, hess = derivs(params)
    if not math.isfinite(ll):
        raise FitError("numeric", "non-finite log-likelihood at start")
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < grad_tol:
            return params, hess, it - 1
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise FitError("numeric", "singular Hessian") from exc
        if not np.all(np.isfinite(step)):
            raise FitError("numeric", "non-finite Newton step")
        new = params + step
        new_ll = loglik(new)
        halvings = 0
        # rounding noise near the optimum must not trigger halving
        slack = 1e-12 * max(1.0, abs(ll))
        while not (math.isfinite(new_ll) and new_ll >= ll - slack) and halvings < MAX_HALVINGS:
            step = step / 2
            new = params + step
            new_ll = loglik(new)
            halvings += 1
        if not math.isfinite(new_ll):
            raise FitError("numeric", "non-finite log-likelihood")
        params = new
        ll, grad, hess = derivs(params)
    if np.max(np.abs(grad)) < grad_tol:
        return params, hess, max_iter
    raise FitError("nonconvergence", f"gradient not below {grad_tol} after {max_iter} iterations")


def _information_se(hess, index: int) -> float:
    info = -np.asarray(hess)
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError as exc:
        raise FitError("numeric", "observed information not positive definite") from exc
    cov = np.linalg.inv(info)
    return math.sqrt(cov[index, index])


def _survival_arrays(d: SurvivalDataset):
    x = np.asarray(d.x, dtype=np.float64)
    t = np.asarray(d.time, dtype=np.float64)
    ev = np.asarray(d.event, dtype=np.float64)
    return x, t, ev


def _weibull_mle(d: SurvivalDataset, grad_tol=GRAD_TOL, max_iter=MAX_ITER):
    x, t, ev = _survival_arrays(d)
    if ev.sum() < 2:
        raise FitError("no_events", "Weibull fit needs at least two events")
    if np.any(t <= 0):
        raise FitError("numeric", "Weibull fit needs positive times")
    d0, t0, d1, t1 = _arm_totals(d)
    if d0 > 0 and d1 > 0:
        start = [math.log(d0 / t0), 0.0, math.log(d1 / t1) - math.log(d0 / t0)]
    else:
        start = [math.log((d0 + d1) / (t0 + t1)), 0.0, 0.0]
    logt = np.log(t)
    return _newton(
        lambda p: _weibull_derivs(p, x, logt, ev),
        start,
        lambda p: weibull_loglik(p, x, t, ev),
        grad_tol,
        max_iter,
    )


def fit_weibull_ph(d: SurvivalDataset, alpha: float = 0.05, theta0: float = 0.0,
                   grad_tol: float = GRAD_TOL, max_iter: int = MAX_ITER) -> Estimate:
    """Weibull PH model, hazard lambda*gamma*t**(gamma-1)*exp(x*theta), by Newton-Raphson.

    Starts from the exponential closed form with log(gamma) = 0.
    """
    params, hess, it = _weibull_mle(d, grad_tol, max_iter)
    se = _information_se(hess, 2)
    return _finish(float(params[2]), se, math.inf, alpha, theta0, it)


def weibull_shape(d: SurvivalDataset) -> float:
    params, _, _ = _weibull_mle(d)
    return math.exp(params[1])


class _RiskSets:
    """Sorted data with Breslow risk-set bookkeeping."""

    def __init__(self, d: SurvivalDataset):
        x, t, ev = _survival_arrays(d)
        order = np.argsort(t, kind="stable")
        self.x = x[order]
        self.t = t[order]
        self.ev = ev[order]
        # risk set of subject i = all j with t_j >= t_i, i.e. from the first
        # index of i's tie group to the end
        _, first, inverse = np.unique(self.t, return_index=True, return_inverse=True)
        self.start = first[inverse]
        self.events = self.ev > 0

    def suffix(self, values):
        return np.cumsum(values[::-1])[::-1][self.start]

    def monotone(self) -> bool:
        xe = self.x[self.events]
        hi = np.maximum.accumulate(self.x[::-1])[::-1][self.start][self.events]
        lo = np.minimum.accumulate(self.x[::-1])[::-1][self.start][self.events]
        return bool(np.all(xe >= hi) or np.all(xe <= lo))


def cox_partial_loglik(theta: float, d: SurvivalDataset) -> float:
    """Breslow partial log-likelihood for a scalar coefficient."""
    rs = _RiskSets(d)
    w = np.exp(theta * rs.x)
    s0 = rs.suffix(w)
    e = rs.events
    return float(np.sum(theta * rs.x[e] - np.log(s0[e])))


def fit_cox_ph(d: SurvivalDataset, alpha: float = 0.05, theta0: float = 0.0,
               grad_tol: float = GRAD_TOL, max_iter: int = MAX_ITER) -> Estimate:
    """Cox model, Breslow ties, Newton-Raphson from theta = 0."""
    rs = _RiskSets(d)
    if not rs.events.any():
        raise FitError("no_events", "no events")
    if rs.monotone():
        raise FitError("separation", "monotone partial likelihood")
    x, e = rs.x, rs.events
    xe = x[e]

    def derivs(p):
        theta = p[0]
        w = np.exp(theta * x)
        s0 = rs.suffix(w)[e]
        s1 = rs.suffix(x * w)[e]
        s2 = rs.suffix(x * x * w)[e]
        ll = float(np.sum(theta * xe - np.log(s0)))
        mean = s1 / s0
        grad = np.array([np.sum(xe - mean)])
        hess = np.array([[-np.sum(s2 / s0 - mean * mean)]])
        return ll, grad, hess

    def loglik(p):
        w = np.exp(p[0] * x)
        return float(np.sum(p[0] * xe - np.log(rs.suffix(w)[e])))

    params, hess, it = _newton(derivs, [0.0], loglik, grad_tol, max_iter)
    se = _information_se(hess, 0)
    return _finish(float(params[0]), se, math.inf, alpha, theta0, it)


def fit_normal_mean_t(d: NumericDataset, alpha: float = 0.05, theta0: float = 0.0) -> Estimate:
    y = np.asarray(d.y if isinstance(d, NumericDataset) else d, dtype=np.float64)
    n = y.size
    if n < 2:
        raise InsufficientData(f"need at least 2 observations, got {n}")
    mean = float(y.mean())
    se = float(y.std(ddof=1)) / math.sqrt(n)
    return _finish(mean, se, float(n - 1), alpha, theta0)


METHODS = {
    "exponential_ph": fit_exponential_ph,
    "weibull_ph": fit_weibull_ph,
    "cox_ph": fit_cox_ph,
    "normal_mean_t": fit_normal_mean_t,
}
