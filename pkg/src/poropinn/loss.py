"""Objective assembly: data mismatch plus residual regularization.

The total objective is always ``mse_tr + mse_pi_u + mse_pi_p`` with no
weighting between terms.  Forward configurations measure the data mismatch
on boundary/initial points and the residuals on separate collocation
points; inverse configurations use one interior measurement set for both
and co-optimize the coefficient vector with the network.

Mean squares are accumulated with numpy's pairwise summation, so totals are
stable under permutations of the point order to well below 1e-12 relative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import network


class DegenerateInputError(ValueError):
    """A loss term was requested over an empty point set."""


@dataclass(frozen=True)
class LossBreakdown:
    """The three objective terms; ``total`` is their exact sum."""

    mse_tr: float
    mse_pi_u: float
    mse_pi_p: float

    @property
    def total(self):
        return self.mse_tr + self.mse_pi_u + self.mse_pi_p

    def as_dict(self, iteration=None):
        record = {
            "mse_tr": self.mse_tr,
            "mse_pi_u": self.mse_pi_u,
            "mse_pi_p": self.mse_pi_p,
            "total": self.total,
        }
        if iteration is not None:
            record = {"iteration": iteration, **record}
        return record


def _require(sample, what):
    if sample is None or sample.n == 0:
        raise DegenerateInputError(f"{what} set is empty")
    return sample


def _as_field(field_or_params, problem=None):
    if isinstance(field_or_params, network.MlpParams):
        field_or_params = network.ParamVars(field_or_params)
    if isinstance(field_or_params, network.ParamVars):
        pvars = field_or_params
        return lambda *coords: network.forward_vars(pvars, list(coords))
    return field_or_params


def _mean_square(nodes, n):
    acc = None
    for r in nodes:
        term = ad.vsum(r * r)
        acc = term if acc is None else acc + term
    return acc * (1.0 / n)


def _mismatch_term(field, sample):
    coords = [ad.variable(c) for c in sample.coords()]
    preds = field(*coords)
    diffs = [p - sample.values[:, j] for j, p in enumerate(preds)]
    return _mean_square(diffs, sample.n)


def _residual_terms(field, problem, theta, sample):
    coords = [ad.variable(c) for c in sample.coords()]
    res_u, res_p = problem.residuals(field, theta, coords)
    zero = ad.constant(0.0)
    pi_u = _mean_square(res_u, sample.n) if res_u else zero
    pi_p = _mean_square(res_p, sample.n) if res_p else zero
    return pi_u, pi_p


def assemble_forward(field, problem, boundary, collocation, theta,
                     include_pi=True):
    """Graph nodes (mse_tr, mse_pi_u, mse_pi_p) for a forward configuration."""
    boundary = _require(boundary, "boundary/initial")
    collocation = _require(collocation, "collocation")
    field = _as_field(field, problem)
    tr = _mismatch_term(field, boundary)
    if include_pi:
        pi_u, pi_p = _residual_terms(field, problem, theta, collocation)
    else:
        pi_u = pi_p = ad.constant(0.0)
    return tr, pi_u, pi_p


def assemble_inverse(field, problem, measurements, theta, include_pi=True):
    """Graph nodes for an inverse configuration: one set serves both terms."""
    measurements = _require(measurements, "measurement")
    field = _as_field(field, problem)
    tr = _mismatch_term(field, measurements)
    if include_pi:
        pi_u, pi_p = _residual_terms(field, problem, theta, measurements)
    else:
        pi_u = pi_p = ad.constant(0.0)
    return tr, pi_u, pi_p


def _breakdown(nodes):
    tr, pi_u, pi_p = nodes
    return LossBreakdown(float(tr.value), float(pi_u.value), float(pi_p.value))


def loss_forward_diffusivity(field_or_params, boundary, collocation, theta):
    problem = _problem("diffusivity", "forward")
    return _breakdown(
        assemble_forward(field_or_params, problem, boundary, collocation, theta)
    )


def loss_inverse_diffusivity(field_or_params, theta, measurements):
    problem = _problem("diffusivity", "inverse")
    return _breakdown(
        assemble_inverse(field_or_params, problem, measurements, theta)
    )


def loss_forward_biot(field_or_params, boundary, collocation, theta):
    problem = _problem("biot", "forward")
    return _breakdown(
        assemble_forward(field_or_params, problem, boundary, collocation, theta)
    )


def loss_inverse_biot(field_or_params, theta, measurements):
    problem = _problem("biot", "inverse")
    return _breakdown(
        assemble_inverse(field_or_params, problem, measurements, theta)
    )


def _problem(name, mode):
    from . import problems

    return problems.get_problem(name, mode)


class Objective:
    """A loss configuration compiled for repeated evaluation.

    Callable on the flat optimization vector (network parameters, then any
    free coefficients); returns ``(LossBreakdown, gradient)`` where the
    gradient covers the whole vector.
    """

    def __init__(self, problem, layout, params0, *, boundary=None,
                 collocation=None, measurements=None, theta=None,
                 optimize_theta=False, include_pi=True):
        self.problem = problem
        self.layout = layout
        self.optimize_theta = optimize_theta
        pvars = network.ParamVars(params0)
        if optimize_theta:
            theta0 = np.full(problem.theta_dim, 0.5) if theta is None else np.asarray(theta, float)
            theta_nodes = [ad.variable(c) for c in theta0]
        else:
            if theta is None:
                theta = problem.theta_true()
            theta_nodes = [ad.constant(float(c)) for c in theta]
        field = _as_field(pvars)

        if problem.mode == "forward" and measurements is None:
            terms = assemble_forward(
                field, problem, boundary, collocation, theta_nodes,
                include_pi=include_pi,
            )
        else:
            terms = assemble_inverse(
                field, problem, measurements, theta_nodes, include_pi=include_pi
            )
        tr, pi_u, pi_p = terms
        total = tr + pi_u + pi_p

        inputs = pvars.all + (theta_nodes if optimize_theta else [])
        grads = ad.grad(total, inputs)
        self._program = ad.Program([total, tr, pi_u, pi_p] + grads, inputs)
        self._n_net = layout.n_params
        self.dim = self._n_net + (problem.theta_dim if optimize_theta else 0)

    def split(self, x):
        """Flat vector -> (MlpParams, theta-or-None)."""
        params = network.MlpParams.from_flat(self.layout, x[: self._n_net])
        theta = x[self._n_net :].copy() if self.optimize_theta else None
        return params, theta

    def initial_vector(self, params0, theta0=None):
        flat = params0.flatten()
        if self.optimize_theta:
            if theta0 is None:
                theta0 = np.full(self.problem.theta_dim, 0.5)
            flat = np.concatenate([flat, np.asarray(theta0, float)])
        return flat

    def __call__(self, x):
        params, theta = self.split(x)
        args = []
        for w, b in zip(params.weights, params.biases):
            args.append(w)
            args.append(b)
        if self.optimize_theta:
            args.extend(float(c) for c in theta)
        out = self._program(*args)
        total, tr, pi_u, pi_p = out[:4]
        grad_parts = out[4:]
        flat = np.empty(self.dim)
        pos = 0
        for g in grad_parts[: 2 * len(params.weights)]:
            g = np.asarray(g)
            flat[pos : pos + g.size] = g.ravel()
            pos += g.size
        for g in grad_parts[2 * len(params.weights) :]:
            flat[pos] = float(g)
            pos += 1
        return LossBreakdown(float(tr), float(pi_u), float(pi_p)), flat
