"""Conformality of vector fields and conformal rescaling of metrics.

A field xi is conformal when L_xi g = 2 phi g with phi = trace(nabla xi)/n.
``conformal_residual`` measures the defect of that equation in the metric
norm; ``is_conformal`` aggregates it over a point sample.  ``rescale_metric``
builds the chart with metric e^{2f} g as new expression trees, and
``connection_change_residual`` checks the induced connection change

    nabla' = nabla + df (x) Id + Id (x) df - g . grad f

against Christoffel symbols computed independently from the rescaled trees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Const, Expr, Fun, Mul, eval_jet
from .geometry import (
    Chart,
    FieldSpec,
    christoffel_matrix,
    connection_data,
    covariant_derivative_matrix,
    field_jets,
    lie_derivative_matrix,
    metric_jets,
    norm_2form,
    spd_inverse,
)

__all__ = [
    "ConformalReport",
    "conformal_factor",
    "conformal_factor_gradient",
    "conformal_residual",
    "is_conformal",
    "rescale_metric",
    "connection_change_residual",
]


@dataclass(frozen=True, eq=False)
class ConformalReport:
    """Residuals of L_xi g = 2 phi g over a sample of points."""

    points: np.ndarray
    residuals: np.ndarray
    max_residual: float
    worst_point: np.ndarray
    tolerance: float
    conformal: bool


def conformal_factor(chart: Chart, xi: FieldSpec, p) -> float:
    """phi(p) = trace(nabla xi) / n."""
    chart.require_interior(p)
    N = covariant_derivative_matrix(chart, xi, p)
    return float(np.trace(N)) / chart.dim


def conformal_factor_gradient(chart: Chart, xi: FieldSpec, p) -> np.ndarray:
    """Exact covector d(phi) at p, via second-order jets.

    n phi = d_i xi^i + Gamma^i_{ik} xi^k, so
    n d_j phi = d_j d_i xi^i + (d_j Gamma^i_{ik}) xi^k + Gamma^i_{ik} d_j xi^k.
    """
    chart.require_interior(p)
    cd = connection_data(chart, p)
    val, jac, hess = field_jets(xi, p, 2)
    term1 = np.einsum("iij->j", hess)
    term2 = np.einsum("iikj,k->j", cd.dGam, val)
    term3 = np.einsum("iik,kj->j", cd.Gam, jac)
    return (term1 + term2 + term3) / chart.dim


def conformal_residual(chart: Chart, xi: FieldSpec, p) -> float:
    """Metric norm of L_xi g - 2 phi g at p."""
    chart.require_interior(p)
    g, _, _ = metric_jets(chart, p, 0)
    ginv = spd_inverse(g)
    L = lie_derivative_matrix(chart, xi, p)
    # trace(g^{-1} L) / 2n equals trace(nabla xi) / n
    phi = float(np.trace(ginv @ L)) / (2.0 * chart.dim)
    T = L - 2.0 * phi * g
    return norm_2form(ginv, T)


def is_conformal(chart: Chart, xi: FieldSpec, samples, tol: float = 1e-7) -> ConformalReport:
    """Check conformality over explicit sample points (must be non-empty)."""
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.size == 0:
        raise ValueError("is_conformal requires a non-empty sample set")
    residuals = np.array([conformal_residual(chart, xi, p) for p in pts])
    worst = int(np.argmax(residuals))
    return ConformalReport(
        points=pts,
        residuals=residuals,
        max_residual=float(residuals[worst]),
        worst_point=pts[worst],
        tolerance=float(tol),
        conformal=bool(residuals[worst] < tol),
    )


def rescale_metric(chart: Chart, f: FieldSpec) -> Chart:
    """Chart carrying e^{2f} g, built as expression trees.

    The factor node is shared across all entries so jet evaluation computes
    it once per point.
    """
    if f.kind != "scalar":
        raise ValueError("rescale_metric expects a scalar field")
    factor = Fun("exp", Mul(Const(2.0), f.expr))
    new_metric = tuple(
        tuple(Mul(factor, entry) for entry in row) for row in chart.metric
    )
    return Chart(
        dim=chart.dim,
        lower=chart.lower.copy(),
        upper=chart.upper.copy(),
        metric=new_metric,
        name=f"{chart.name}~rescaled",
    )


def connection_change_residual(chart: Chart, f: FieldSpec, p) -> float:
    """Defect of the conformal connection-change identity at p.

    Compares Christoffel symbols of e^{2f} g, computed from the rescaled
    expression trees, with Gamma + correction where

        corr^k_ij = delta^k_i d_j f + delta^k_j d_i f - g_ij (grad f)^k.

    The two sides come from independent code paths, so this doubles as a
    self-check of the differentiation engine.
    """
    chart.require_interior(p)
    n = chart.dim
    g, _, _ = metric_jets(chart, p, 0)
    ginv = spd_inverse(g)
    df = eval_jet(f.expr, p, 1).d1
    gradf = ginv @ df
    Gam = christoffel_matrix(chart, p)
    Gam_rescaled = christoffel_matrix(rescale_metric(chart, f), p)
    eye = np.eye(n)
    corr = (
        np.einsum("ki,j->kij", eye, df)
        + np.einsum("kj,i->kij", eye, df)
        - np.einsum("ij,k->kij", g, gradf)
    )
    return float(np.sqrt(np.sum((Gam_rescaled - Gam - corr) ** 2)))
