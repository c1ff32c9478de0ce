"""Problem definitions: manufactured solutions, sources, PDE residuals.

Two governing systems on the unit space-time box, each in a forward variant
(physical coefficients known) and an inverse variant (coefficients estimated
from interior data):

* nonlinear diffusivity in 1-D + time, pressure ``p``; conductivity varies
  as ``kappa0 * p^2``.  Coefficient vector ``theta = (phi*c_t, kappa0)``.
* nonlinear poroelasticity in 2-D + time, displacements ``u, v`` and
  pressure ``p``; conductivity varies as ``kappa0 * exp(volumetric strain)``.
  Coefficient vector ``theta = (mu, lambda, alpha, storage, kappa0)`` where
  storage collects ``phi*c_f + (alpha - phi)/K_s``.

Ground truth for every shipped experiment is the all-ones theta.  Exact
fields are chosen analytically and the source terms are derived so the
exact fields satisfy the equations; substituting an exact field into its
residual must give zero to round-off, which is the strongest single check
of this module.

Every derivative inside a residual comes from nested automatic
differentiation of the field evaluator; nothing is expanded by hand, so the
same code path serves networks and analytic oracles.  Residuals are affine
in theta and stay differentiable in any network parameters behind the field.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue, constant, cos, exp, jvp, powi, sin


class ValidationError(ValueError):
    """A residual argument violates its contract (e.g. non-unit normal)."""


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants; every shipped experiment uses the defaults."""

    phi: float = 1.0
    c_t: float = 1.0
    c_f: float = 1.0
    kappa0: float = 1.0
    alpha: float = 1.0
    mu_l: float = 1.0
    lambda_l: float = 1.0
    K_s: float = 1.0
    rho: float = 1.0
    g_vec: tuple = (0.0, 0.0)

    def theta_diffusivity(self):
        return np.array([self.phi * self.c_t, self.kappa0])

    def theta_biot(self):
        storage = self.phi * self.c_f + (self.alpha - self.phi) / self.K_s
        return np.array(
            [self.mu_l, self.lambda_l, self.alpha, storage, self.kappa0]
        )


# ---------------------------------------------------------------------------
# exact solutions and matching sources
# ---------------------------------------------------------------------------
# These work on graph nodes and on plain numpy arrays alike.


def exact_diffusivity(x, t):
    """Pressure field sin(x + t)."""
    return sin(x + t)


def source_diffusivity(x, t):
    """Source that makes sin(x + t) solve the nonlinear diffusivity equation."""
    s = x + t
    c, si = cos(s), sin(s)
    return c + si ** 3 - 2.0 * c ** 2 * si


def exact_biot(x, y, t):
    """Displacements (sin, cos) and pressure exp of x + y + t."""
    s = x + y + t
    return sin(s), cos(s), exp(s)


def sources_biot(x, y, t):
    """Momentum and mass sources that make the exact triple solve the system.

    Derived by substituting the exact fields into the governing equations
    with unit coefficients (see the symbolic cross-check in the test suite).
    """
    s = x + y + t
    si, c, e = sin(s), cos(s), exp(s)
    f_u = -4.0 * si - 2.0 * c - e
    f_v = -4.0 * c - 2.0 * si - e
    g = e - si - c + 2.0 * (si + c - 1.0) * exp(c - si + s)
    return f_u, f_v, g


# ---------------------------------------------------------------------------
# residual operators
# ---------------------------------------------------------------------------


def _as_leaf(x):
    return x if isinstance(x, DiffValue) else ad.variable(x)


def _as_theta(theta, n):
    theta = list(theta)
    if len(theta) != n:
        raise ValidationError(f"theta must have {n} components, got {len(theta)}")
    return [c if isinstance(c, DiffValue) else constant(c) for c in theta]


def _ones_for(node):
    return ad.ones(np.shape(node.value))


def residual_diffusivity(field, theta, x, t):
    """theta1 * p_t - theta2 * d/dx(p^2 * p_x) - g(x, t).

    ``field`` maps (x, t) nodes to the pressure node; the conductivity flux
    is built first and differentiated as a whole.
    """
    x, t = _as_leaf(x), _as_leaf(t)
    th1, th2 = _as_theta(theta, 2)
    p = field(x, t)[0]
    ex = _ones_for(x)
    p_x = ad.jvp1(p, x, ex)
    p_t = ad.jvp1(p, t, _ones_for(t))
    flux = powi(p, 2) * p_x
    flux_x = ad.jvp1(flux, x, ex)
    g = source_diffusivity(x.value, t.value)
    return th1 * p_t - th2 * flux_x - g


def _biot_first_derivs(field, x, y, t):
    u, v, p = field(x, y, t)
    ex, ey, et = _ones_for(x), _ones_for(y), _ones_for(t)
    u_x, v_x, p_x = jvp([u, v, p], {x: ex})
    u_y, v_y, p_y = jvp([u, v, p], {y: ey})
    return (u, v, p), (u_x, v_x, p_x), (u_y, v_y, p_y), (ex, ey, et)


def _stress(field, theta, x, y, t):
    """Total stress components (xx, xy, yy) including the pressure part."""
    th1, th2, th3 = theta[0], theta[1], theta[2]
    (u, v, p), (u_x, v_x, p_x), (u_y, v_y, p_y), seeds = _biot_first_derivs(
        field, x, y, t
    )
    div_u = u_x + v_y
    sxx = 2.0 * th1 * u_x + th2 * div_u - th3 * p
    sxy = th1 * (u_y + v_x)
    syy = 2.0 * th1 * v_y + th2 * div_u - th3 * p
    return sxx, sxy, syy


def residual_biot_momentum(field, theta, x, y, t):
    """Both components of div[2 th1 eps(u) + th2 (div u) I] - th3 grad p - f."""
    x, y, t = _as_leaf(x), _as_leaf(y), _as_leaf(t)
    th = _as_theta(theta, 5)
    th1, th2, th3 = th[0], th[1], th[2]
    (u, v, p), (u_x, v_x, p_x), (u_y, v_y, p_y), (ex, ey, et) = _biot_first_derivs(
        field, x, y, t
    )
    div_u = u_x + v_y
    sxx = 2.0 * th1 * u_x + th2 * div_u
    sxy = th1 * (u_y + v_x)
    syy = 2.0 * th1 * v_y + th2 * div_u
    sxx_x, sxy_x = jvp([sxx, sxy], {x: ex})
    sxy_y, syy_y = jvp([sxy, syy], {y: ey})
    f_u, f_v, _ = sources_biot(x.value, y.value, t.value)
    pi_u = sxx_x + sxy_y - th3 * p_x - f_u
    pi_v = sxy_x + syy_y - th3 * p_y - f_v
    return pi_u, pi_v


def residual_biot_mass(field, theta, x, y, t):
    """th4 p_t + th3 d(div u)/dt - th5 div(e^{div u} grad p) - g."""
    x, y, t = _as_leaf(x), _as_leaf(y), _as_leaf(t)
    th = _as_theta(theta, 5)
    th3, th4, th5 = th[2], th[3], th[4]
    (u, v, p), (u_x, v_x, p_x), (u_y, v_y, p_y), (ex, ey, et) = _biot_first_derivs(
        field, x, y, t
    )
    div_u = u_x + v_y
    p_t = ad.jvp1(p, t, et)
    div_u_t = ad.jvp1(div_u, t, et)
    conductivity = exp(div_u)
    flux_x = conductivity * p_x
    flux_y = conductivity * p_y
    flux_x_x = ad.jvp1(flux_x, x, ex)
    flux_y_y = ad.jvp1(flux_y, y, ey)
    _, _, g = sources_biot(x.value, y.value, t.value)
    return th4 * p_t + th3 * div_u_t - th5 * (flux_x_x + flux_y_y) - g


def _check_normal(n):
    n = tuple(float(c) for c in n)
    if len(n) != 2 or abs(n[0] ** 2 + n[1] ** 2 - 1.0) > 1e-12:
        raise ValidationError(f"normal {n} is not a unit 2-vector")
    return n


def traction(field, theta, x, y, t, n):
    """Total-stress traction sigma . n of a field at a boundary point."""
    n1, n2 = _check_normal(n)
    x, y, t = _as_leaf(x), _as_leaf(y), _as_leaf(t)
    th = _as_theta(theta, 5)
    sxx, sxy, syy = _stress(field, th, x, y, t)
    return sxx * n1 + sxy * n2, sxy * n1 + syy * n2


def residual_traction(field, theta, x, y, t, n, sigma_d=None):
    """Traction mismatch sigma . n - sigma_D, componentwise.

    When ``sigma_d`` is omitted it is evaluated analytically from the exact
    solution, so the residual vanishes for the exact field.
    """
    tx, ty = traction(field, theta, x, y, t, n)
    if sigma_d is None:
        dx, dy = traction(lambda *a: exact_biot(*a), theta, x, y, t, n)
        sigma_d = (dx.value, dy.value)
    return tx - sigma_d[0], ty - sigma_d[1]


def normal_flux(field, theta, x, y, t, n):
    """Outward conductivity flux -th5 e^{div u} grad p . n of a field."""
    n1, n2 = _check_normal(n)
    x, y, t = _as_leaf(x), _as_leaf(y), _as_leaf(t)
    th = _as_theta(theta, 5)
    (u, v, p), (u_x, v_x, p_x), (u_y, v_y, p_y), _ = _biot_first_derivs(
        field, x, y, t
    )
    conductivity = exp(u_x + v_y)
    return -th[4] * conductivity * (p_x * n1 + p_y * n2)


def residual_flux(field, theta, x, y, t, n, q_d=None):
    """Flux mismatch -th5 e^{div u} grad p . n - q_D.

    ``q_d`` defaults to the analytic flux of the exact solution.
    """
    q = normal_flux(field, theta, x, y, t, n)
    if q_d is None:
        q_d = normal_flux(lambda *a: exact_biot(*a), theta, x, y, t, n).value
    return q - q_d


# ---------------------------------------------------------------------------
# problem registry
# ---------------------------------------------------------------------------


def _diffusivity_exact_values(coords):
    return np.sin(coords[:, 0] + coords[:, 1])[:, None]


def _biot_exact_values(coords):
    s = coords[:, 0] + coords[:, 1] + coords[:, 2]
    return np.stack([np.sin(s), np.cos(s), np.exp(s)], axis=1)


def _diffusivity_residuals(field, theta, coords):
    pi = residual_diffusivity(field, theta, *coords)
    return [], [pi]


def _biot_residuals(field, theta, coords):
    pi_u, pi_v = residual_biot_momentum(field, theta, *coords)
    pi_p = residual_biot_mass(field, theta, *coords)
    return [pi_u, pi_v], [pi_p]


@dataclass(frozen=True)
class ProblemSpec:
    """One of the four problem definitions (system x forward/inverse)."""

    name: str
    mode: str
    n_inputs: int
    n_outputs: int
    theta_dim: int
    spatial_dim: int
    exact_values: Callable
    analytic_field: Callable
    residuals: Callable
    physical: PhysicalParams = dc_field(default_factory=PhysicalParams)

    @property
    def bounds(self):
        """Closed domain bounds per input axis, space first then time."""
        return [(0.0, 1.0)] * self.n_inputs

    def theta_true(self):
        if self.name == "diffusivity":
            return self.physical.theta_diffusivity()
        return self.physical.theta_biot()

    def key(self):
        return f"{self.name}-{self.mode}"


def get_problem(name, mode):
    if mode not in ("forward", "inverse"):
        raise ValueError(f"unknown mode {mode!r}")
    if name == "diffusivity":
        return ProblemSpec(
            name=name,
            mode=mode,
            n_inputs=2,
            n_outputs=1,
            theta_dim=2,
            spatial_dim=1,
            exact_values=_diffusivity_exact_values,
            analytic_field=lambda x, t: [exact_diffusivity(x, t)],
            residuals=_diffusivity_residuals,
        )
    if name == "biot":
        return ProblemSpec(
            name=name,
            mode=mode,
            n_inputs=3,
            n_outputs=3,
            theta_dim=5,
            spatial_dim=2,
            exact_values=_biot_exact_values,
            analytic_field=lambda x, y, t: list(exact_biot(x, y, t)),
            residuals=_biot_residuals,
        )
    raise ValueError(f"unknown problem {name!r}")
