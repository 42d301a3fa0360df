"""Brute-force reference maximizers, written without reference to the fitters.

They only evaluate log-likelihoods and search; no derivatives, no closed forms.
"""

import itertools

import mpmath
import numpy as np

mpmath.mp.dps = 40
_PHI = (mpmath.sqrt(5) - 1) / 2


def golden_max(f, a, b, tol=mpmath.mpf("1e-16")):
    """Maximize a unimodal f on [a, b] by golden-section search (mpmath precision)."""
    a, b = mpmath.mpf(a), mpmath.mpf(b)
    c, d = b - _PHI * (b - a), a + _PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _PHI * (b - a)
            fd = f(d)
    return (a + b) / 2


def grid_then_golden(f, lo, hi, points=41):
    """Coarse grid to bracket the maximum, then golden section inside the bracket."""
    xs = [lo + (hi - lo) * mpmath.mpf(k) / (points - 1) for k in range(points)]
    vals = [f(x) for x in xs]
    k = max(range(points), key=lambda i: vals[i])
    return golden_max(f, xs[max(k - 1, 0)], xs[min(k + 1, points - 1)])


def exponential_oracle(x, time, event):
    """Maximize sum[event*(log lam + x*theta) - lam*exp(x*theta)*t] over (theta, log lam).

    The sum is regrouped by arm before evaluation, which is exact algebra.
    """
    n_events = mpmath.mpf(int(np.sum(event)))
    events_x = mpmath.mpf(int(np.sum(np.asarray(event) * np.asarray(x))))
    t0 = mpmath.fsum(mpmath.mpf(float(t)) for a, t in zip(x, time) if a == 0)
    t1 = mpmath.fsum(mpmath.mpf(float(t)) for a, t in zip(x, time) if a == 1)

    def loglik(theta, loglam):
        return n_events * loglam + events_x * theta - mpmath.exp(loglam) * (t0 + mpmath.exp(theta) * t1)

    def profile(theta):
        best = grid_then_golden(lambda ll: loglik(theta, ll), -15, 5, points=21)
        return loglik(theta, best)

    return float(grid_then_golden(profile, -6, 6, points=25))


def weibull_loglik_ld(loglam, loggamma, theta, x, time, event):
    lam, gamma = np.exp(loglam), np.exp(loggamma)
    lt = np.log(time)
    lin = x * theta
    return np.sum(event * (loglam + loggamma + (gamma - 1) * lt + lin) - lam * np.exp(lin) * np.exp(gamma * lt))


def weibull_oracle(x, time, event, start=(-2.0, 0.0, 0.0), half_width=4.0, tol=1e-10):
    """Shrinking 3-D grid search over (log lam, log gamma, theta) in extended precision."""
    x = np.asarray(x, dtype=np.longdouble)
    time = np.asarray(time, dtype=np.longdouble)
    event = np.asarray(event, dtype=np.longdouble)
    center = np.array(start, dtype=np.longdouble)
    h = np.longdouble(half_width)
    steps = np.linspace(-1, 1, 5, dtype=np.longdouble)
    while h > tol:
        best, best_val = center, -np.inf
        for a, b, c in itertools.product(steps, steps, steps):
            p = center + h * np.array([a, b, c], dtype=np.longdouble)
            v = weibull_loglik_ld(p[0], p[1], p[2], x, time, event)
            if v > best_val:
                best, best_val = p, v
        moved = np.max(np.abs(best - center)) >= h * 0.99
        center = best
        if not moved:
            h = h * np.longdouble(0.5)
    return float(center[2])


def _breslow_terms(x, time, event):
    """(deaths, deaths in arm 1, at risk in arm 0, at risk in arm 1) per distinct event time."""
    x = np.asarray(x).astype(int)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(int)
    terms = []
    for t in np.unique(time[event == 1]):
        dead = (time == t) & (event == 1)
        at_risk = time >= t
        terms.append((int(dead.sum()), int(x[dead].sum()), int((at_risk & (x == 0)).sum()),
                      int((at_risk & (x == 1)).sum())))
    return terms


def cox_breslow_loglik(theta, terms):
    e = mpmath.exp(theta)
    return mpmath.fsum(theta * d1 - d * mpmath.log(r0 + r1 * e) for d, d1, r0, r1 in terms)


def cox_oracle(x, time, event):
    """1-D grid plus golden section on the Breslow partial likelihood."""
    terms = _breslow_terms(x, time, event)
    return float(grid_then_golden(lambda th: cox_breslow_loglik(th, terms), -8, 8, points=65))


def t_quantile(p, df):
    """Student-t quantile by bisection on an mpmath CDF (regularized incomplete beta)."""

    def cdf(t):
        t = mpmath.mpf(t)
        xval = df / (df + t * t)
        tail = mpmath.betainc(df / 2, mpmath.mpf(1) / 2, 0, xval, regularized=True) / 2
        return 1 - tail if t > 0 else tail

    return float(mpmath.findroot(lambda t: cdf(t) - p, (0, 50), solver="bisect"))


def normal_cdf(z):
    return float((1 + mpmath.erf(mpmath.mpf(z) / mpmath.sqrt(2))) / 2)


def two_sided_normal_p(z):
    return 2 * (1 - normal_cdf(abs(z)))
