"""Full-batch optimizers: L-BFGS with strong-Wolfe line search, Adam.

Training minimizes the objective over the flat parameter vector (network
weights and biases, plus the physical coefficients in inverse mode).  The
relative-change criterion

    |f_k - f_{k+1}| / max(|f_k|, |f_{k+1}|, 1.0) <= stop_tolerance

terminates a run; hitting the iteration cap or a failed line search are the
other terminal outcomes.  A failed line search is an ordinary stop, not an
error: full-batch runs routinely end that way once the loss stagnates at
round-off level.  Non-finite values at an accepted iterate raise
:class:`DivergenceError` with the offending iterate attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import loss as loss_mod
from . import network


class DivergenceError(RuntimeError):
    """Objective or gradient became non-finite at an accepted iterate."""

    def __init__(self, message, x=None, iteration=None):
        super().__init__(message)
        self.x = x
        self.iteration = iteration


@dataclass
class OptimConfig:
    method: str = "lbfgs"  # lbfgs | adam | adam_then_lbfgs
    lbfgs_memory: int = 50
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    adam_step: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    adam_iterations: int = 10000
    stop_tolerance: float = 1e-16
    max_iterations: int = 50000

    def __post_init__(self):
        if not 0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.stop_tolerance <= 0.0:
            raise ValueError("stop_tolerance must be positive")
        if self.method not in ("lbfgs", "adam", "adam_then_lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    iterations: int
    stop_reason: str  # tolerance | max_iter | line_search_failure
    loss_history: List[float]
    n_evals: int
    wolfe_log: list = field(default_factory=list)
    breakdown_history: Optional[list] = None


def relative_change(prev, curr):
    """The stop-criterion statistic between consecutive loss values."""
    return abs(prev - curr) / max(abs(prev), abs(curr), 1.0)


def _finite(f, g):
    return np.isfinite(f) and np.all(np.isfinite(g))


def strong_wolfe(fg, x, d, f0, g0, c1, c2, first_step=1.0, max_expand=25,
                 max_zoom=30):
    """Bracket-and-zoom line search enforcing the strong Wolfe conditions.

    Returns ``(alpha, f_new, g_new, n_evals)`` or ``None`` when no
    acceptable step exists within the evaluation budget.
    """
    dphi0 = float(g0 @ d)
    if dphi0 >= 0.0:
        return None
    evals = 0

    def phi(a):
        nonlocal evals
        f, g = fg(x + a * d)
        evals += 1
        return f, g, float(g @ d)

    def zoom(a_lo, f_lo, dphi_lo, a_hi, f_hi):
        nonlocal evals
        for _ in range(max_zoom):
            width = a_hi - a_lo
            if abs(width) * max(1.0, abs(a_lo)) < 1e-18:
                return None
            # quadratic model through (a_lo, f_lo, dphi_lo) and (a_hi, f_hi)
            denom = f_hi - f_lo - dphi_lo * width
            if denom != 0.0 and np.isfinite(denom):
                a = a_lo - 0.5 * dphi_lo * width * width / denom
            else:
                a = a_lo + 0.5 * width
            lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
            margin = 0.1 * (hi - lo)
            if not np.isfinite(a) or a < lo + margin or a > hi - margin:
                a = a_lo + 0.5 * width
            f_a, g_a, dphi_a = phi(a)
            if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or f_a >= f_lo:
                a_hi, f_hi = a, f_a
            else:
                if abs(dphi_a) <= -c2 * dphi0:
                    return a, f_a, g_a
                if dphi_a * (a_hi - a_lo) >= 0.0:
                    a_hi, f_hi = a_lo, f_lo
                a_lo, f_lo, dphi_lo = a, f_a, dphi_a
        return None

    a_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    a = first_step
    for i in range(max_expand):
        f_a, g_a, dphi_a = phi(a)
        if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or (
            i > 0 and f_a >= f_prev
        ):
            hit = zoom(a_prev, f_prev, dphi_prev, a, f_a)
            break
        if abs(dphi_a) <= -c2 * dphi0:
            return a, f_a, g_a, evals
        if dphi_a >= 0.0:
            hit = zoom(a, f_a, dphi_a, a_prev, f_prev)
            break
        a_prev, f_prev, dphi_prev = a, f_a, dphi_a
        a = 2.0 * a
    else:
        hit = None
    if hit is None:
        return None
    alpha, f_new, g_new = hit
    return alpha, f_new, g_new, evals


def _two_loop(g, s_list, y_list, rho_list):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(fg, x0, cfg, callback=None, iteration_offset=0):
    """Two-loop-recursion L-BFGS with strong-Wolfe steps."""
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = fg(x)
    evals = 1
    if not _finite(f, g):
        raise DivergenceError("objective not finite at start", x, 0)
    history = [f]
    s_list, y_list, rho_list = [], [], []
    wolfe_log = []
    stop_reason = "max_iter"
    iterations = 0

    for k in range(cfg.max_iterations):
        iterations = k + 1
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        if gnorm == 0.0:
            history.append(f)
            if callback:
                callback(iteration_offset + iterations, x, f)
            stop_reason = "tolerance"
            break

        d = _two_loop(g, s_list, y_list, rho_list)
        if d @ g >= 0.0:
            d = -g
        first_step = 1.0 if s_list else min(1.0, 1.0 / float(np.sum(np.abs(g))))
        hit = strong_wolfe(fg, x, d, f, g, cfg.wolfe_c1, cfg.wolfe_c2, first_step)
        if hit is None:
            stop_reason = "line_search_failure"
            break
        alpha, f_new, g_new, e = hit
        evals += e
        x_new = x + alpha * d
        if not _finite(f_new, g_new):
            raise DivergenceError("objective diverged", x_new, iterations)
        wolfe_log.append(
            (f, float(g @ d), alpha, f_new, float(g_new @ d))
        )
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > cfg.lbfgs_memory:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)

        history.append(f_new)
        if callback:
            callback(iteration_offset + iterations, x_new, f_new)
        converged = relative_change(f, f_new) <= cfg.stop_tolerance
        x, f, g = x_new, f_new, g_new
        if converged:
            stop_reason = "tolerance"
            break

    return OptimResult(x, f, iterations, stop_reason, history, evals, wolfe_log)


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter vector."""

    x: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int
    step_size: float
    beta1: float
    beta2: float
    eps: float


def adam_init(x0, cfg):
    x0 = np.asarray(x0, dtype=np.float64)
    return AdamState(
        x=x0.copy(),
        m=np.zeros_like(x0),
        v=np.zeros_like(x0),
        t=0,
        step_size=cfg.adam_step,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps=cfg.adam_eps,
    )


def adam_step(state, gradient):
    """One bias-corrected moment update; returns the successor state."""
    g = np.asarray(gradient, dtype=np.float64)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    x = state.x - state.step_size * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(x, m, v, t, state.step_size, state.beta1, state.beta2, state.eps)


def adam_minimize(fg, x0, cfg, iterations=None, callback=None,
                  check_tolerance=False, iteration_offset=0):
    """Run Adam for a fixed number of steps (or to the stop criterion)."""
    budget = cfg.max_iterations if iterations is None else iterations
    state = adam_init(x0, cfg)
    f, g = fg(state.x)
    evals = 1
    if not _finite(f, g):
        raise DivergenceError("objective not finite at start", state.x, 0)
    history = [f]
    stop_reason = "max_iter"
    iterations_done = 0
    for k in range(budget):
        iterations_done = k + 1
        state = adam_step(state, g)
        f_new, g = fg(state.x)
        evals += 1
        if not _finite(f_new, g):
            raise DivergenceError("objective diverged", state.x, iterations_done)
        history.append(f_new)
        if callback:
            callback(iteration_offset + iterations_done, state.x, f_new)
        converged = check_tolerance and relative_change(f, f_new) <= cfg.stop_tolerance
        f = f_new
        if converged:
            stop_reason = "tolerance"
            break
    return OptimResult(state.x, f, iterations_done, stop_reason, history, evals)


def train(problem, data, net_layout, cfg, seed, include_pi=True,
          history_sink=None):
    """One training realization.

    ``data`` carries the sample sets: ``boundary`` and ``collocation`` for
    forward runs, ``measurements`` for inverse (and regularized-fit) runs.
    In inverse mode the optimized vector is the network parameters followed
    by the coefficient vector (initialized at 0.5); elsewhere the
    coefficients stay fixed at their known values.  The per-iteration loss
    breakdown is appended to ``history_sink`` when given.
    """
    params0 = network.init_params(net_layout, seed)
    optimize_theta = problem.mode == "inverse"
    objective = loss_mod.Objective(
        problem,
        net_layout,
        params0,
        boundary=data.get("boundary"),
        collocation=data.get("collocation"),
        measurements=data.get("measurements"),
        optimize_theta=optimize_theta,
        include_pi=include_pi,
    )
    x0 = objective.initial_vector(params0)

    last = {}

    def fg(x):
        breakdown, grad = objective(x)
        last["breakdown"] = breakdown
        return breakdown.total, grad

    recorded = []

    def callback(iteration, x, f):
        breakdown = last["breakdown"]
        recorded.append(breakdown.as_dict(iteration))
        if history_sink is not None:
            history_sink(iteration, breakdown)

    if cfg.method == "lbfgs":
        result = lbfgs_minimize(fg, x0, cfg, callback)
    elif cfg.method == "adam":
        result = adam_minimize(fg, x0, cfg, callback=callback, check_tolerance=True)
    else:
        warm = adam_minimize(fg, x0, cfg, iterations=cfg.adam_iterations,
                             callback=callback)
        result = lbfgs_minimize(fg, warm.x, cfg, callback,
                                iteration_offset=warm.iterations)
        result.loss_history = warm.loss_history + result.loss_history[1:]
        result.iterations += warm.iterations
        result.n_evals += warm.n_evals
    result.breakdown_history = recorded
    return result
