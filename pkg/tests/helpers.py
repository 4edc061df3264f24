"""Independent numerical oracles for the test suite.

These deliberately avoid the package's own quadrature and solver code
paths so that cross-checks stay two-sided: adaptive Simpson for weight
integrals, central differences for derivatives, and a closed-form
solution of the sampling ODE for centered single-Gaussian data (where
the ODE is linear and its rate integrates by standard quadrature).
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=40):
    """Classic recursive adaptive Simpson quadrature."""

    def simpson(fa, fm, fb, a_, b_):
        return (b_ - a_) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a_, b_, fa, fm, fb, whole, tol_, depth):
        m = 0.5 * (a_ + b_)
        lm = 0.5 * (a_ + m)
        rm = 0.5 * (m + b_)
        flm = f(lm)
        frm = f(rm)
        left = simpson(fa, flm, fm, a_, m)
        right = simpson(fm, frm, fb, m, b_)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * tol_:
            return left + right + (left + right - whole) / 15.0
        return recurse(a_, m, fa, flm, fm, left, tol_ / 2.0, depth + 1) + recurse(
            m, b_, fm, frm, fb, right, tol_ / 2.0, depth + 1
        )

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(fa, fm, fb, a, b)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


def central_difference(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def gaussian_pf_terminal(spec, std, x_T, t0):
    """Closed-form terminal state of the sampling ODE for centered
    single-Gaussian data N(0, std^2).

    The exact score is linear, so dx/dt = a(t) x with
    a(t) = f(t) + g2(t) / (2 v(t)), v(t) = mu^2 std^2 + L^2, and
    x(t0) = exp(int_T^{t0} a) x_T.  The rate integral is evaluated by
    scipy's adaptive quadrature, independent of the package's own
    integration machinery.
    """

    def rate(t):
        v = float(spec.mu(t)) ** 2 * std**2 + float(spec.L(t)) ** 2
        return float(spec.f(t)) + 0.5 * float(spec.g2(t)) / v

    integral, _ = quad(rate, spec.t_end, t0, epsabs=1e-13, epsrel=1e-13, limit=400)
    return np.exp(integral) * np.asarray(x_T, dtype=float)
