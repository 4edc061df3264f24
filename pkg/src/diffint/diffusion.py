"""Scalar linear forward diffusions and their marginal statistics.

A forward noising process on [0, T] is the linear SDE

    dx = f(t) x dt + sqrt(g2(t)) dw,

whose conditional law given x_0 is Gaussian with mean scale mu(t) and
standard deviation L(t):

    x_t | x_0  ~  N(mu(t) x_0, L(t)^2),
    dmu/dt     = f(t) mu(t),            mu(0) = 1,
    d(L^2)/dt  = 2 f(t) L(t)^2 + g2(t), L(0) = 0  (for the presets).

Two presets cover the standard choices:

* ``vpsde``: variance preserving, alpha(t) = exp(-int_0^t beta(s) ds)
  with a linear rate beta(s) = beta_min + (beta_max - beta_min) s;
  f = -beta/2, g2 = beta, mu = sqrt(alpha), L = sqrt(1 - alpha).
* ``vesde``: variance exploding, sigma(t) = sigma_min (sigma_max /
  sigma_min)^t; f = 0, g2 = d(sigma^2)/dt, mu = 1, L = sigma.

The solution operator of the drift, Psi(t, s) = exp(int_s^t f), is
available in closed form for the presets and by quadrature otherwise.

The module also hosts the monotone time reparameterization

    rho(t) = L(t) / mu(t),

under which the noise-prediction form of the sampling ODE becomes
d y / d rho = eps(mu y, t(rho)) with y = x / mu(t).  For the VP preset
this is rho = sqrt((1 - alpha) / alpha); for the VE preset it is
sigma(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import quadrature
from .errors import DomainError, ParameterError

__all__ = [
    "VpSchedule",
    "DiffusionSpec",
    "vpsde",
    "vesde",
    "transition",
    "rho_of_t",
    "t_of_rho",
    "validate",
]


@dataclass(frozen=True)
class VpSchedule:
    """Linear noise-rate schedule beta(s) = beta_min + (beta_max - beta_min) s."""

    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if not (0 < self.beta_min < self.beta_max):
            raise ParameterError(
                f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}"
            )

    def beta(self, t):
        return self.beta_min + (self.beta_max - self.beta_min) * np.asarray(t, dtype=float)

    def beta_integral(self, t):
        """int_0^t beta(s) ds, in closed form."""
        t = np.asarray(t, dtype=float)
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t

    def alpha(self, t):
        """alpha(t) = exp(-int_0^t beta); alpha(0) = 1 exactly."""
        return np.exp(-self.beta_integral(t))


@dataclass(frozen=True)
class DiffusionSpec:
    """A scalar-coefficient linear diffusion on [0, t_end].

    All callables accept floats or numpy arrays and evaluate
    elementwise.  ``pi_std`` is the standard deviation of the terminal
    sampling distribution (N(0, pi_std^2)).  ``transition_closed``, when
    present, evaluates Psi(t, s) in closed form; otherwise
    :func:`transition` integrates the drift numerically.

    Instances are immutable and safe to share across threads.
    """

    f: Callable
    g2: Callable
    mu: Callable
    L: Callable
    t_end: float
    name: str = "custom"
    pi_std: float = 1.0
    transition_closed: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.t_end <= 0:
            raise ParameterError(f"t_end must be positive, got {self.t_end}")


def vpsde(schedule: VpSchedule | None = None, *, t_end: float = 1.0) -> DiffusionSpec:
    """Variance-preserving preset; default schedule beta in [0.1, 20]."""
    sched = schedule if schedule is not None else VpSchedule()

    def mu(t):
        return np.exp(-0.5 * sched.beta_integral(t))

    def L(t):
        # sqrt(1 - alpha) via expm1 so that L(0) == 0 exactly
        return np.sqrt(-np.expm1(-sched.beta_integral(t)))

    def psi(t, s):
        return np.exp(-0.5 * (sched.beta_integral(t) - sched.beta_integral(s)))

    return DiffusionSpec(
        f=lambda t: -0.5 * sched.beta(t),
        g2=sched.beta,
        mu=mu,
        L=L,
        t_end=t_end,
        name="vpsde",
        pi_std=1.0,
        transition_closed=psi,
    )


def vesde(sigma_min: float, sigma_max: float, *, t_end: float = 1.0) -> DiffusionSpec:
    """Variance-exploding preset; geometric sigma from sigma_min to sigma_max."""
    if not (0 < sigma_min < sigma_max):
        raise ParameterError(
            f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"
        )
    log_ratio = math.log(sigma_max / sigma_min)

    def sigma(t):
        return sigma_min * np.exp(log_ratio * np.asarray(t, dtype=float))

    def g2(t):
        return 2.0 * log_ratio * sigma(t) ** 2

    return DiffusionSpec(
        f=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        g2=g2,
        mu=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        L=sigma,
        t_end=t_end,
        name="vesde",
        pi_std=sigma_max,
        transition_closed=lambda t, s: np.ones_like(
            np.asarray(t, dtype=float) * np.asarray(s, dtype=float)
        ),
    )


def transition(spec: DiffusionSpec, t, s, *, method: str = "auto"):
    """Drift solution operator Psi(t, s) = exp(int_s^t f(tau) dtau).

    ``method`` is "auto" (closed form when the preset provides one,
    quadrature otherwise), "closed", or "quadrature".  The quadrature
    path exists for custom specs and as an independent cross-check of
    the preset formulas; it accepts scalar or array endpoints.
    """
    if method not in ("auto", "closed", "quadrature"):
        raise ParameterError(f"unknown transition method {method!r}")
    if method in ("auto", "closed") and spec.transition_closed is not None:
        return spec.transition_closed(t, s)
    if method == "closed":
        raise ParameterError(f"spec {spec.name!r} has no closed-form transition")

    def one(ti, si):
        return math.exp(quadrature.integrate(spec.f, si, ti))

    if np.ndim(t) == 0 and np.ndim(s) == 0:
        return one(float(t), float(s))
    tt, ss = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    out = np.empty(tt.shape)
    for idx in np.ndindex(tt.shape):
        out[idx] = one(float(tt[idx]), float(ss[idx]))
    return out


def rho_of_t(spec: DiffusionSpec, t):
    """Monotone time rescaling rho(t) = L(t) / mu(t)."""
    return spec.L(t) / spec.mu(t)


def t_of_rho(spec: DiffusionSpec, rho: float) -> float:
    """Invert :func:`rho_of_t` by bracketed root finding on [0, t_end].

    Raises :class:`DomainError` when ``rho`` lies outside
    [rho(0), rho(t_end)] beyond roundoff slack.
    """
    lo = float(rho_of_t(spec, 0.0))
    hi = float(rho_of_t(spec, spec.t_end))
    slack = 1e-9 * max(1.0, abs(hi))
    if rho < lo - slack or rho > hi + slack:
        raise DomainError(f"rho={rho} outside [{lo}, {hi}]")
    rho_clipped = min(max(rho, lo), hi)
    if rho_clipped == lo:
        return 0.0
    if rho_clipped == hi:
        return float(spec.t_end)
    return float(
        brentq(
            lambda t: float(rho_of_t(spec, t)) - rho_clipped,
            0.0,
            spec.t_end,
            xtol=1e-15,
            rtol=8.9e-16,
        )
    )


def validate(spec: DiffusionSpec, *, n_times: int = 50, rng=None, rtol: float = 1e-6):
    """Finite-difference consistency check of (f, g2, mu, L).

    Verifies dmu/dt = f mu and d(L^2)/dt = 2 f L^2 + g2 at ``n_times``
    random interior times (relative tolerance ``rtol``) and g2 >= 0.
    Raises :class:`ParameterError` on the first violation.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    h = 1e-6 * spec.t_end
    times = rng.uniform(2 * h, spec.t_end - 2 * h, size=n_times)
    mu_dot = (spec.mu(times + h) - spec.mu(times - h)) / (2 * h)
    target = spec.f(times) * spec.mu(times)
    scale = np.maximum(np.abs(target), 1e-12)
    if np.any(np.abs(mu_dot - target) > rtol * np.maximum(scale, np.abs(mu_dot))):
        raise ParameterError("mu is inconsistent with f (dmu/dt != f mu)")
    l2_dot = (spec.L(times + h) ** 2 - spec.L(times - h) ** 2) / (2 * h)
    target = 2 * spec.f(times) * spec.L(times) ** 2 + spec.g2(times)
    scale = np.maximum(np.maximum(np.abs(target), np.abs(l2_dot)), 1e-9)
    if np.any(np.abs(l2_dot - target) > rtol * scale):
        raise ParameterError("L is inconsistent with (f, g2)")
    dense = np.linspace(0.0, spec.t_end, 1001)
    if np.any(spec.g2(dense) < 0):
        raise ParameterError("g2 must be nonnegative on [0, t_end]")
