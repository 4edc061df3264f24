"""Fixed-grid integrators for the reverse-time sampling of scalar
linear diffusions.

Every sampler consumes a noise-prediction field eps(x, t), a
:class:`~diffint.timegrid.TimeGrid`, and an initial state at t_N, and
produces a :class:`SolverRun` holding the state at every grid node.
The cost contract is explicit: single-step and multistep methods
evaluate the field exactly once per step (nfe = N); s-stage
Runge-Kutta methods evaluate it s times per step (nfe = s N).  The
count is taken by a wrapper around the field itself, so hidden
evaluations are impossible.

Families:

* ``euler_sample``      first-order method on the sampling ODE.
* ``ei_score_sample``   exponential step holding the raw score fixed
                        per interval (kept as an ablation baseline; it
                        amplifies the score's stiffness near t = 0).
* ``ddim_sample``       exponential step holding the noise prediction
                        fixed, in closed form (the deterministic DDIM
                        update for the VP preset).
* ``tab_sample``        exponential multistep: degree-r extrapolation
                        of the noise prediction in t, with weight
                        integrals from :mod:`diffint.weights`.
* ``rho_ab_sample``     Adams-Bashforth in the rescaled time rho.
* ``rho_rk_sample``     classical explicit Runge-Kutta in rho
                        (midpoint, heun2, kutta3, rk4).
* ``ipndm_sample``      multistep blend of past noise predictions with
                        fixed-step coefficients, fed through the
                        exponential transfer step.
* ``sddim_sample``      the stochastic variant of the exponential
                        step, noise scale eta in [0, 1].

Deterministic samplers are bitwise reproducible; stochastic ones are
bitwise reproducible given their seed.  The multistep buffer holds
evaluations at grid nodes only; Runge-Kutta stage values are never
shared with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import quadrature
from .diffusion import DiffusionSpec, t_of_rho, transition
from .errors import DivergenceError, GridMismatchError, ParameterError
from .timegrid import TimeGrid
from .weights import WeightTable, rho_ab_weights, tab_weights

__all__ = [
    "SolverRun",
    "euler_sample",
    "ei_score_sample",
    "ddim_step",
    "ddim_sample",
    "tab_sample",
    "rho_ab_sample",
    "rho_rk_sample",
    "ipndm_sample",
    "sddim_step",
    "sddim_sample",
    "run_sampler",
    "SAMPLER_NAMES",
    "RK_METHODS",
    "IPNDM_BLEND",
]


@dataclass(frozen=True, eq=False)
class SolverRun:
    """One sampling run: per-node states plus cost accounting.

    ``states[i]`` is the state at grid node i (so ``states[n_steps]``
    is the initial condition and ``states[0]`` the terminal sample);
    ``nfe`` counts field evaluations as observed by the counting
    wrapper.
    """

    sampler: str
    order: Optional[int]
    grid: TimeGrid
    states: np.ndarray
    nfe: int
    seed: Optional[int] = None
    notes: tuple = ()

    @property
    def terminal(self):
        return self.states[0]


class _CountingField:
    """Wraps a field so every evaluation increments a counter."""

    def __init__(self, inner):
        self.inner = inner
        self.count = 0

    def __call__(self, x, t):
        self.count += 1
        return self.inner(x, t)


def _start_states(grid: TimeGrid, x_T) -> np.ndarray:
    x = np.asarray(x_T, dtype=float)
    states = np.empty((grid.n_steps + 1,) + x.shape)
    states[grid.n_steps] = x
    return states


def _check_finite(x, i: int, t: float, sampler: str):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(
            f"{sampler} diverged stepping into node {i - 1} (t={t})",
            step_index=i - 1,
            time=t,
        )


def euler_sample(spec: DiffusionSpec, field, grid: TimeGrid, x_T) -> SolverRun:
    """First-order step on dx/dt = f x + g2 / (2 L) eps."""
    counting = _CountingField(field)
    times = grid.times
    states = _start_states(grid, x_T)
    x = states[grid.n_steps]
    for i in range(grid.n_steps, 0, -1):
        t = times[i]
        dt = times[i] - times[i - 1]
        rhs = spec.f(t) * x + 0.5 * spec.g2(t) / spec.L(t) * counting(x, t)
        x = x - rhs * dt
        _check_finite(x, i, times[i - 1], "euler")
        states[i - 1] = x
    return SolverRun("euler", None, grid, states, counting.count)


def ei_score_sample(spec: DiffusionSpec, field, grid: TimeGrid, x_T) -> SolverRun:
    """Exponential step that holds the raw score fixed per interval:

        x_{i-1} = Psi(t_{i-1}, t_i) x_i
                  + [int_{t_i}^{t_{i-1}} -1/2 Psi(t_{i-1}, tau) g2(tau) dtau]
                    * score(x_i, t_i),

    with score = -eps / L.  Exact when the score itself is constant on
    the interval.
    """
    counting = _CountingField(field)
    times = grid.times
    states = _start_states(grid, x_T)
    x = states[grid.n_steps]
    for i in range(grid.n_steps, 0, -1):
        t_lo, t_hi = times[i - 1], times[i]
        weight = quadrature.integrate(
            lambda tau: -0.5 * transition(spec, t_lo, tau) * spec.g2(tau), t_hi, t_lo
        )
        score_val = -counting(x, t_hi) / spec.L(t_hi)
        x = transition(spec, t_lo, t_hi) * x + weight * score_val
        _check_finite(x, i, t_lo, "ei_score")
        states[i - 1] = x
    return SolverRun("ei_score", None, grid, states, counting.count)


def ddim_step(spec: DiffusionSpec, x_t, eps_val, t: float, t_prev: float):
    """Exponential transfer step holding the noise prediction fixed:

        x_prev = Psi(t_prev, t) x_t + (L(t_prev) - Psi(t_prev, t) L(t)) eps.

    For the VP preset, Psi = sqrt(alpha_prev / alpha_t) and
    L = sqrt(1 - alpha), which is the deterministic DDIM update.
    """
    psi = transition(spec, t_prev, t)
    return psi * x_t + (spec.L(t_prev) - psi * spec.L(t)) * eps_val


def ddim_sample(spec: DiffusionSpec, field, grid: TimeGrid, x_T) -> SolverRun:
    counting = _CountingField(field)
    times = grid.times
    states = _start_states(grid, x_T)
    x = states[grid.n_steps]
    for i in range(grid.n_steps, 0, -1):
        x = ddim_step(spec, x, counting(x, times[i]), times[i], times[i - 1])
        _check_finite(x, i, times[i - 1], "ddim")
        states[i - 1] = x
    return SolverRun("ddim", 0, grid, states, counting.count)


def tab_sample(
    spec: DiffusionSpec,
    field,
    grid: TimeGrid,
    r: int,
    x_T,
    weights: WeightTable | None = None,
) -> SolverRun:
    """Exponential multistep with degree-r extrapolation in t.

    Keeps a buffer of the r+1 most recent node evaluations; while the
    buffer is short (the first r steps) the order is lowered to the
    available history.  A supplied ``weights`` table must match the
    grid and order.
    """
    if weights is None:
        weights = tab_weights(spec, grid, r)
    else:
        weights.check_grid(grid)
        if weights.order != r:
            raise GridMismatchError(
                f"weight table has order {weights.order}, requested {r}"
            )
    counting = _CountingField(field)
    times = grid.times
    states = _start_states(grid, x_T)
    x = states[grid.n_steps]
    buffer = []  # most recent first: buffer[j] evaluated at t_{i+j}
    for i in range(grid.n_steps, 0, -1):
        buffer.insert(0, counting(x, times[i]))
        del buffer[r + 1 :]
        row = weights.coeffs_for(i)
        x = weights.psi_for(i) * x
        for j in range(row.size):
            x = x + row[j] * buffer[j]
        _check_finite(x, i, times[i - 1], "tab")
        states[i - 1] = x
    return SolverRun("tab", r, grid, states, counting.count)


def rho_ab_sample(
    spec: DiffusionSpec, field, grid: TimeGrid, r: int, x_T
) -> SolverRun:
    """Adams-Bashforth in rho on d y / d rho = eps(mu(t) y, t).

    States are recorded in x coordinates (x = mu(t) y).  The zero-order
    method reproduces :func:`ddim_step` exactly; higher orders
    extrapolate the noise prediction with a polynomial in rho.
    """
    counting = _CountingField(field)
    times = grid.times
    rho = grid.rho_values(spec)
    mu = spec.mu(times)
    states = _start_states(grid, x_T)
    y = states[grid.n_steps] / mu[grid.n_steps]
    buffer = []
    for i in range(grid.n_steps, 0, -1):
        buffer.insert(0, counting(mu[i] * y, times[i]))
        del buffer[r + 1 :]
        w = rho_ab_weights(rho, i, r)
        for j in range(w.size):
            y = y + w[j] * buffer[j]
        x = mu[i - 1] * y
        _check_finite(x, i, times[i - 1], "rho_ab")
        states[i - 1] = x
    return SolverRun("rho_ab", r, grid, states, counting.count)


# classical explicit tableaus: stage offsets c, stage rows a, output weights b
RK_METHODS = {
    "midpoint": (
        (0.0, 0.5),
        ((), (0.5,)),
        (0.0, 1.0),
    ),
    "heun2": (
        (0.0, 1.0),
        ((), (1.0,)),
        (0.5, 0.5),
    ),
    "kutta3": (
        (0.0, 0.5, 1.0),
        ((), (0.5,), (-1.0, 2.0)),
        (1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0),
    ),
    "rk4": (
        (0.0, 0.5, 0.5, 1.0),
        ((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
        (1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0),
    ),
}


def rho_rk_sample(
    spec: DiffusionSpec, field, grid: TimeGrid, method: str, x_T
) -> SolverRun:
    """Classical explicit Runge-Kutta in rho.

    Stage times are mapped back through t(rho) for field evaluation;
    interval endpoints reuse the grid's own times so no inversion
    error enters there.  A stage time that lands below t_0 (roundoff
    in the inversion) is clamped to t_0 and recorded in the run notes.
    nfe = stages * N.
    """
    if method not in RK_METHODS:
        raise ParameterError(f"unknown RK method {method!r}; choose from {sorted(RK_METHODS)}")
    c, a, b = RK_METHODS[method]
    counting = _CountingField(field)
    times = grid.times
    rho = grid.rho_values(spec)
    mu = spec.mu(times)
    states = _start_states(grid, x_T)
    y = states[grid.n_steps] / mu[grid.n_steps]
    notes = []
    for i in range(grid.n_steps, 0, -1):
        h = rho[i - 1] - rho[i]
        ks = []
        for s_idx in range(len(c)):
            if c[s_idx] == 0.0:
                t_stage = times[i]
                mu_stage = mu[i]
            elif c[s_idx] == 1.0:
                t_stage = times[i - 1]
                mu_stage = mu[i - 1]
            else:
                t_stage = t_of_rho(spec, rho[i] + c[s_idx] * h)
                if t_stage < grid.t0:
                    notes.append(f"stage time clamped to t0 at step {i}")
                    t_stage = grid.t0
                mu_stage = float(spec.mu(t_stage))
            y_stage = y
            for m, a_sm in enumerate(a[s_idx]):
                if a_sm != 0.0:
                    y_stage = y_stage + h * a_sm * ks[m]
            ks.append(counting(mu_stage * y_stage, t_stage))
        for m in range(len(c)):
            y = y + h * b[m] * ks[m]
        x = mu[i - 1] * y
        _check_finite(x, i, times[i - 1], f"rho_{method}")
        states[i - 1] = x
    return SolverRun(
        f"rho_{method}", None, grid, states, counting.count, notes=tuple(notes)
    )


# blend coefficients for the multistep noise estimate, most recent first;
# exact rationals so the published fixed-step values can be asserted as such
IPNDM_BLEND = {
    0: (Fraction(1),),
    1: (Fraction(3, 2), Fraction(-1, 2)),
    2: (Fraction(23, 12), Fraction(-16, 12), Fraction(5, 12)),
    3: (Fraction(55, 24), Fraction(-59, 24), Fraction(37, 24), Fraction(-9, 24)),
}


def ipndm_sample(
    spec: DiffusionSpec, field, grid: TimeGrid, r: int, x_T
) -> SolverRun:
    """Multistep blend of past noise predictions + exponential transfer.

    Step i forms eps_hat as the fixed-step multistep combination of
    the last j+1 node evaluations, with j = min(history, r) ramping up
    from zero (the first step is therefore exactly a ddim step), and
    advances with :func:`ddim_step`.  The blend coefficients assume a
    uniform grid; a non-uniform grid is accepted but flagged in the
    run notes.
    """
    if not 0 <= r <= max(IPNDM_BLEND):
        raise ParameterError(f"order must be in 0..{max(IPNDM_BLEND)}, got {r}")
    counting = _CountingField(field)
    times = grid.times
    notes = []
    spacing = np.diff(times)
    if spacing.size > 1 and (spacing.max() - spacing.min()) > 1e-9 * spacing.mean():
        notes.append("blend coefficients assume a uniform grid; grid is non-uniform")
    states = _start_states(grid, x_T)
    x = states[grid.n_steps]
    buffer = []
    for i in range(grid.n_steps, 0, -1):
        buffer.insert(0, counting(x, times[i]))
        del buffer[r + 1 :]
        j = min(len(buffer) - 1, r)
        if j == 0:
            eps_hat = buffer[0]
        else:
            coeffs = IPNDM_BLEND[j]
            eps_hat = float(coeffs[0]) * buffer[0]
            for m in range(1, j + 1):
                eps_hat = eps_hat + float(coeffs[m]) * buffer[m]
        x = ddim_step(spec, x, eps_hat, times[i], times[i - 1])
        _check_finite(x, i, times[i - 1], "ipndm")
        states[i - 1] = x
    return SolverRun("ipndm", r, grid, states, counting.count, notes=tuple(notes))


def sddim_step(
    spec: DiffusionSpec,
    x_t,
    eps_val,
    t: float,
    t_prev: float,
    eta: float,
    rng: np.random.Generator,
):
    """Stochastic variant of the exponential transfer step.

    With a = mu(t)^2 and a_prev = mu(t_prev)^2 (the VP preset's alpha),

        sigma_eta = eta sqrt((1 - a_prev) / (1 - a) * (1 - a / a_prev)),
        x_prev = sqrt(a_prev) (x_t - sqrt(1 - a) eps) / sqrt(a)
                 + sqrt(1 - a_prev - sigma_eta^2) eps + sigma_eta xi,

    xi ~ N(0, I).  eta = 0 reduces exactly to :func:`ddim_step`; the
    variance terms are clamped at zero so the degenerate endpoint
    a_prev = 1 cannot produce a negative radicand.
    """
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must lie in [0, 1], got {eta}")
    if eta == 0.0:
        return ddim_step(spec, x_t, eps_val, t, t_prev)
    x_t = np.asarray(x_t, dtype=float)
    a_t = float(spec.mu(t)) ** 2
    a_prev = float(spec.mu(t_prev)) ** 2
    one_minus_t = float(spec.L(t)) ** 2
    one_minus_prev = float(spec.L(t_prev)) ** 2
    var_eta = eta**2 * max(0.0, one_minus_prev / one_minus_t * (1.0 - a_t / a_prev))
    sigma_eta = np.sqrt(var_eta)
    mean = np.sqrt(a_prev) * (x_t - np.sqrt(one_minus_t) * eps_val) / np.sqrt(a_t)
    mean = mean + np.sqrt(max(0.0, one_minus_prev - var_eta)) * eps_val
    return mean + sigma_eta * rng.standard_normal(x_t.shape)


def sddim_sample(
    spec: DiffusionSpec, field, grid: TimeGrid, eta: float, x_T, seed: int
) -> SolverRun:
    """Iterate :func:`sddim_step` over the grid; Philox keyed by seed."""
    counting = _CountingField(field)
    rng = np.random.Generator(np.random.Philox(key=seed))
    times = grid.times
    states = _start_states(grid, x_T)
    x = states[grid.n_steps]
    for i in range(grid.n_steps, 0, -1):
        x = sddim_step(spec, x, counting(x, times[i]), times[i], times[i - 1], eta, rng)
        _check_finite(x, i, times[i - 1], "sddim")
        states[i - 1] = x
    return SolverRun("sddim", None, grid, states, counting.count, seed=seed)


SAMPLER_NAMES = (
    "euler",
    "ei_score",
    "ddim",
    "tab",
    "rho_ab",
    "rho_mid",
    "rho_heun2",
    "rho_kutta3",
    "rho_rk4",
    "ipndm",
    "sddim",
)

_RK_BY_NAME = {
    "rho_mid": "midpoint",
    "rho_heun2": "heun2",
    "rho_kutta3": "kutta3",
    "rho_rk4": "rk4",
}


def run_sampler(
    name: str,
    spec: DiffusionSpec,
    field,
    grid: TimeGrid,
    x_T,
    *,
    order: int = 0,
    eta: float = 0.0,
    seed: int | None = None,
    weights: WeightTable | None = None,
) -> SolverRun:
    """Dispatch a sampler by its public name (the harness entry point)."""
    if name == "euler":
        return euler_sample(spec, field, grid, x_T)
    if name == "ei_score":
        return ei_score_sample(spec, field, grid, x_T)
    if name == "ddim":
        return ddim_sample(spec, field, grid, x_T)
    if name == "tab":
        return tab_sample(spec, field, grid, order, x_T, weights=weights)
    if name == "rho_ab":
        return rho_ab_sample(spec, field, grid, order, x_T)
    if name in _RK_BY_NAME:
        return rho_rk_sample(spec, field, grid, _RK_BY_NAME[name], x_T)
    if name == "ipndm":
        return ipndm_sample(spec, field, grid, order, x_T)
    if name == "sddim":
        if seed is None:
            raise ParameterError("sddim needs a seed")
        return sddim_sample(spec, field, grid, eta, x_T, seed)
    raise ParameterError(f"unknown sampler {name!r}; choose from {SAMPLER_NAMES}")
