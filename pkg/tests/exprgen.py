"""Random scalar expressions over the engine's primitive set, plus the
central-difference oracles used to check their derivatives."""

import numpy as np

from poropinn import autodiff as ad


def random_expression(rng, n_vars, max_depth=4):
    """A random closed-form function of ``n_vars`` scalars.

    Built only from the supported primitives; exponential arguments are
    damped through tanh and denominators kept away from zero so the
    expression stays smooth and bounded on [-2, 2]^n.
    """

    def build(depth):
        if depth == 0 or rng.random() < 0.25:
            if rng.random() < 0.75:
                i = int(rng.integers(n_vars))
                return lambda xs: xs[i]
            c = float(rng.uniform(-1.5, 1.5))
            return lambda xs: xs[0] * 0.0 + c

        op = rng.choice(
            ["add", "sub", "mul", "div", "tanh", "sin", "cos", "exp", "pow", "neg"]
        )
        a = build(depth - 1)
        if op == "add":
            b = build(depth - 1)
            return lambda xs: a(xs) + b(xs)
        if op == "sub":
            b = build(depth - 1)
            return lambda xs: a(xs) - b(xs)
        if op == "mul":
            b = build(depth - 1)
            return lambda xs: a(xs) * b(xs)
        if op == "div":
            b = build(depth - 1)
            return lambda xs: a(xs) / (b(xs) * b(xs) + 1.5)
        if op == "tanh":
            return lambda xs: ad.tanh(a(xs))
        if op == "sin":
            return lambda xs: ad.sin(a(xs))
        if op == "cos":
            return lambda xs: ad.cos(a(xs))
        if op == "exp":
            return lambda xs: ad.exp(ad.tanh(a(xs)))
        if op == "pow":
            k = int(rng.integers(2, 4))
            return lambda xs: ad.powi(ad.tanh(a(xs)), k)
        return lambda xs: -a(xs)

    return build(max_depth)


def _plain(v):
    return float(v.value) if isinstance(v, ad.DiffValue) else float(v)


def eval_plain(f, x):
    """Evaluate an expression on plain floats."""
    return _plain(f([float(c) for c in x]))


def fd1(f, x, i, h):
    xp, xm = list(x), list(x)
    xp[i] += h
    xm[i] -= h
    return (eval_plain(f, xp) - eval_plain(f, xm)) / (2 * h)


def fd2(f, x, i, h):
    xp, xm = list(x), list(x)
    xp[i] += h
    xm[i] -= h
    return (eval_plain(f, xp) - 2 * eval_plain(f, x) + eval_plain(f, xm)) / h ** 2


def fd3(f, x, i, h):
    vals = []
    for k in (2, 1, -1, -2):
        xs = list(x)
        xs[i] += k * h
        vals.append(eval_plain(f, xs))
    return (vals[0] - 2 * vals[1] + 2 * vals[2] - vals[3]) / (2 * h ** 3)


def exact_derivative(f, x, i, order):
    """Engine derivative of the expression at x (nested for order > 1)."""
    xs = [ad.variable(c) for c in x]
    out = f(xs)
    for _ in range(order):
        out = ad.grad(out, [xs[i]])[0]
    return float(out.value)


def floored_rel_error(a, b, floor=1.0):
    return abs(a - b) / max(abs(a), abs(b), floor)
