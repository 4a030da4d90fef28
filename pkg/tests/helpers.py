"""Finite-difference oracles shared by the test modules.

Richardson-extrapolated central differences give independent derivative
values to compare against the exact jet propagation.  Step sizes are tuned
so truncation and rounding error balance near the stated tolerances:
1e-5 for first derivatives (accurate to ~1e-10 relative) and 2e-4 for
second derivatives (accurate to ~1e-7 relative).
"""
from __future__ import annotations

import numpy as np


def fd_partial(f, x, i, h=1e-5):
    """First partial derivative of a scalar function of a point."""
    x = np.asarray(x, dtype=float)

    def shifted(d):
        y = x.copy()
        y[i] += d
        return f(y)

    d_h = (shifted(h) - shifted(-h)) / (2.0 * h)
    d_h2 = (shifted(h / 2) - shifted(-h / 2)) / h
    return (4.0 * d_h2 - d_h) / 3.0


def fd_partial2(f, x, i, j, h=2e-4):
    """Second partial derivative via Richardson-extrapolated stencils."""
    x = np.asarray(x, dtype=float)

    def at(di, dj):
        y = x.copy()
        y[i] += di
        y[j] += dj
        return f(y)

    def raw(step):
        if i == j:
            return (at(step, 0) - 2.0 * at(0, 0) + at(-step, 0)) / (step * step)
        return (
            at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)
        ) / (4.0 * step * step)

    return (4.0 * raw(h / 2) - raw(h)) / 3.0


def fd_gradient(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    return np.array([fd_partial(f, x, i, h) for i in range(len(x))])


def flow_pullback_metric(chart, xi, p, t, steps=200):
    """(phi_t^* g) at p for the flow phi_t of xi, via RK4 with variational
    equation for the flow Jacobian.  Oracle for the Lie derivative."""
    from confield.geometry import field_jets, metric_value

    n = chart.dim
    x = np.asarray(p, dtype=float).copy()
    J = np.eye(n)
    h = t / steps

    def rhs(x, J):
        val, jac, _ = field_jets(xi, x, 1)
        return val, jac @ J

    for _ in range(steps):
        k1 = rhs(x, J)
        k2 = rhs(x + 0.5 * h * k1[0], J + 0.5 * h * k1[1])
        k3 = rhs(x + 0.5 * h * k2[0], J + 0.5 * h * k2[1])
        k4 = rhs(x + h * k3[0], J + h * k3[1])
        x = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        J = J + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    g_end = metric_value(chart, x)
    return J.T @ g_end @ J


def fd_lie_derivative(chart, xi, p, t=1e-3):
    """Richardson limit of ((phi_t^* g) - g) / t at p."""
    G_p = flow_pullback_metric(chart, xi, p, t)
    G_m = flow_pullback_metric(chart, xi, p, -t)
    d_h = (G_p - G_m) / (2.0 * t)
    G_p2 = flow_pullback_metric(chart, xi, p, t / 2)
    G_m2 = flow_pullback_metric(chart, xi, p, -t / 2)
    d_h2 = (G_p2 - G_m2) / t
    return (4.0 * d_h2 - d_h) / 3.0
