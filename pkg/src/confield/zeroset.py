"""Zero set components as patches, with umbilicity diagnostics.

Near a zero x where a conformal field is Killing for some rescaled metric,
the zero set is the image under the exponential map of the kernel of the
derivative 2-form at x.  ``trace_component`` builds that patch on a
parameter grid; ``second_fundamental_form`` measures its extrinsic
curvature; ``umbilicity_report`` decides whether the patch is totally
umbilical (all second fundamental form values proportional to the induced
metric with a common mean curvature vector).

Total umbilicity is a conformally invariant property, so
``umbilicity_conformal_invariance_check`` reruns the report under a
rescaled metric on the same patch.  The metric is therefore an explicit
argument of the curvature routines rather than being read off the patch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

from .conformal import conformal_factor, is_conformal, rescale_metric
from .essential import (
    VERDICT_KILLING,
    _ball_sample,
    _numerical_rank,
    classify_zero,
)
from .geometry import (
    Chart,
    FieldSpec,
    christoffel_matrix,
    dxi_form_matrix,
    field_norm,
    metric_jets,
    mgs_orthonormalize,
    norm_vector,
    spd_inverse,
)
from .geodesic import exp_map

__all__ = [
    "PatchError",
    "SubmanifoldPatch",
    "trace_component",
    "SecondFundamentalData",
    "second_fundamental_form",
    "UmbilicityReport",
    "umbilicity_report",
    "ConformalInvarianceResult",
    "umbilicity_conformal_invariance_check",
]

VERDICT_UMBILICAL = "totally_umbilical"
VERDICT_NOT_UMBILICAL = "not_umbilical"
VERDICT_POINT = "point"


class PatchError(RuntimeError):
    """A zero set patch could not be built or queried as requested."""


@dataclass(frozen=True, eq=False)
class SubmanifoldPatch:
    """Parametrized piece of a submanifold, sampled on a grid.

    ``mapping`` sends a parameter vector of length k to chart coordinates
    and must be smooth; the curvature routines finite-difference it with
    internal steps, so it is evaluated off the grid as well.  For k = 0
    the patch is a single point and ``samples`` has shape (dim,).
    """

    chart: Chart
    base: np.ndarray
    tangent_basis: np.ndarray
    param_axes: tuple
    samples: np.ndarray
    field_norms: np.ndarray | None
    max_field_norm: float
    codim: int
    mapping: Callable[[np.ndarray], np.ndarray]

    @property
    def k(self) -> int:
        return len(self.param_axes)

    @property
    def grid_shape(self) -> tuple:
        return tuple(len(a) for a in self.param_axes)

    def point_at(self, tvec) -> np.ndarray:
        return np.asarray(self.mapping(np.asarray(tvec, dtype=float)), dtype=float)

    @classmethod
    def from_map(
        cls,
        chart: Chart,
        mapping: Callable[[np.ndarray], np.ndarray],
        param_axes,
        xi: FieldSpec | None = None,
    ) -> "SubmanifoldPatch":
        """Wrap an explicit parametrization; field norms only if xi given."""
        param_axes = tuple(np.asarray(a, dtype=float) for a in param_axes)
        k = len(param_axes)
        shape = tuple(len(a) for a in param_axes)
        n = chart.dim
        samples = np.empty(shape + (n,))
        norms = np.empty(shape) if xi is not None else None
        for idx in np.ndindex(*shape) if k else [()]:
            t = np.array([param_axes[a][idx[a]] for a in range(k)])
            p = np.asarray(mapping(t), dtype=float)
            samples[idx] = p
            if norms is not None:
                norms[idx] = field_norm(chart, xi, p)
        center = np.array([a[len(a) // 2] for a in param_axes])
        base = np.asarray(mapping(center), dtype=float)
        tangent = _map_tangent_frame(chart, mapping, center, k)
        return cls(
            chart=chart,
            base=base,
            tangent_basis=tangent,
            param_axes=param_axes,
            samples=samples,
            field_norms=norms,
            max_field_norm=float(norms.max()) if norms is not None and norms.size else math.nan,
            codim=n - k,
            mapping=mapping,
        )


def _map_tangent_frame(chart, mapping, t0, k):
    if k == 0:
        return np.empty((0, chart.dim))
    h = 1e-4
    rows = []
    for a in range(k):
        e = np.zeros(k)
        e[a] = 1.0
        rows.append((np.asarray(mapping(t0 + h * e)) - np.asarray(mapping(t0 - h * e))) / (2 * h))
    g, _, _ = metric_jets(chart, np.asarray(mapping(t0), dtype=float), 0)
    return mgs_orthonormalize(g, np.asarray(rows))


def _dxi_kernel(chart: Chart, xi: FieldSpec, x: np.ndarray):
    """g-orthonormal kernel basis (rows) and rank of the derivative 2-form."""
    g, _, _ = metric_jets(chart, x, 0)
    M = dxi_form_matrix(chart, xi, x)
    L = np.linalg.cholesky(0.5 * (g + g.T))
    Linv = np.linalg.inv(L)
    M_frame = Linv @ M @ Linv.T
    M_frame = 0.5 * (M_frame - M_frame.T)
    _, sigma, Vt = np.linalg.svd(M_frame)
    rank = _numerical_rank(sigma)
    kernel = Vt[rank:] @ Linv if rank < chart.dim else np.empty((0, chart.dim))
    return kernel, rank


def trace_component(
    chart: Chart,
    xi: FieldSpec,
    x,
    radius: float = 0.3,
    grid: int = 5,
    class_tol: float = 1e-6,
    conformal_tol: float = 1e-7,
    verify_tol: float = 1e-5,
    steps_per_unit: float = 96.0,
    rng=None,
) -> SubmanifoldPatch:
    """Patch of the zero set component through the zero x.

    The patch is exp_x applied to the kernel of the derivative 2-form,
    sampled on a k-dimensional grid of side ``2 radius``.  In dimension
    three and up the zero must classify as Killing after rescaling; in
    dimension two (where that classification is unavailable) conformality
    and phi(x) = 0 are checked directly.  Every sampled point is verified
    to be a zero within ``verify_tol``.
    """
    if grid < 3 or grid % 2 == 0:
        raise ValueError("grid must be an odd integer >= 3 so the base is a node")
    x = np.asarray(x, dtype=float)
    chart.require_interior(x)
    if rng is None:
        rng = np.random.default_rng(0)

    if chart.dim >= 3:
        cls = classify_zero(
            chart, xi, x, tol=class_tol, conformal_tol=conformal_tol, rng=rng
        )
        if cls.verdict != VERDICT_KILLING:
            raise PatchError(
                "zero set tracing requires a zero that is Killing for a "
                f"rescaled metric, got verdict {cls.verdict!r}"
            )
        kernel = cls.kernel_basis
    else:
        if field_norm(chart, xi, x) >= class_tol:
            raise PatchError("trace_component expects a zero of the field")
        report = is_conformal(
            chart, xi, _ball_sample(chart, x, 0.05, 20, rng), conformal_tol
        )
        if not report.conformal:
            raise PatchError("field is not conformal near the zero")
        if abs(conformal_factor(chart, xi, x)) >= class_tol:
            raise PatchError("tracing in dimension two needs phi = 0 at the zero")
        kernel, _ = _dxi_kernel(chart, xi, x)

    k = kernel.shape[0]
    n = chart.dim
    if k == 0:
        point = x.copy()
        norm_at = field_norm(chart, xi, point)
        return SubmanifoldPatch(
            chart=chart,
            base=point,
            tangent_basis=np.empty((0, n)),
            param_axes=(),
            samples=point,
            field_norms=np.asarray(norm_at),
            max_field_norm=norm_at,
            codim=n,
            mapping=lambda t, _p=point: _p.copy(),
        )

    # Fixed integrator step count across the whole patch keeps the mapping
    # smooth in the parameters, which matters when it is differenced later.
    max_len = radius * math.sqrt(k)
    steps = max(32, int(math.ceil(steps_per_unit * max_len)))

    def mapping(t, _x=x, _kernel=kernel, _steps=steps):
        v = np.asarray(t, dtype=float) @ _kernel
        return exp_map(chart, _x, v, steps=_steps)

    param_axes = tuple(np.linspace(-radius, radius, grid) for _ in range(k))
    shape = (grid,) * k
    samples = np.empty(shape + (n,))
    norms = np.empty(shape)
    for idx in np.ndindex(*shape):
        t = np.array([param_axes[a][idx[a]] for a in range(k)])
        p = mapping(t)
        samples[idx] = p
        norms[idx] = field_norm(chart, xi, p)
    worst = float(norms.max())
    if worst >= verify_tol:
        raise PatchError(
            f"traced patch leaves the zero set: max |xi|_g = {worst:.3e} "
            f"exceeds {verify_tol:.1e}"
        )
    return SubmanifoldPatch(
        chart=chart,
        base=x.copy(),
        tangent_basis=kernel,
        param_axes=param_axes,
        samples=samples,
        field_norms=norms,
        max_field_norm=worst,
        codim=n - k,
        mapping=mapping,
    )


@dataclass(frozen=True, eq=False)
class SecondFundamentalData:
    """Second fundamental form of a patch at one parameter value."""

    point: np.ndarray
    tangents: np.ndarray
    induced_metric: np.ndarray
    normal_form: np.ndarray
    mean_curvature: np.ndarray
    tangent_frame: np.ndarray


def _stencil(mapping, t0, a, b, h):
    """Richardson-extrapolated mixed second partial of the mapping."""

    def at(da, db):
        t = t0.copy()
        t[a] += da
        t[b] += db
        return np.asarray(mapping(t), dtype=float)

    def mixed(step):
        if a == b:
            return (at(step, 0) - 2.0 * at(0, 0) + at(-step, 0)) / (step * step)
        return (
            at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)
        ) / (4.0 * step * step)

    d_h = mixed(h)
    d_h2 = mixed(h / 2)
    return (4.0 * d_h2 - d_h) / 3.0


def _first_derivative(mapping, t0, a, h):
    def at(da):
        t = t0.copy()
        t[a] += da
        return np.asarray(mapping(t), dtype=float)

    d_h = (at(h) - at(-h)) / (2.0 * h)
    d_h2 = (at(h / 2) - at(-h / 2)) / h
    return (4.0 * d_h2 - d_h) / 3.0


def second_fundamental_form(
    chart: Chart,
    patch: SubmanifoldPatch,
    index,
    fd_step: float | None = None,
) -> SecondFundamentalData:
    """B and the mean curvature vector at an interior grid node.

    ``chart`` supplies the ambient metric and may differ from
    ``patch.chart`` (rescaled metrics reuse the same patch).  Derivatives
    come from Richardson-extrapolated central differences of the patch
    mapping with an internal step independent of the grid spacing, so
    cells stay out of the truncation error.  Boundary nodes are refused:
    one-sided differencing would degrade the result silently.
    """
    k = patch.k
    if k == 0:
        raise PatchError("a point patch has no second fundamental form")
    index = tuple(int(i) for i in np.atleast_1d(np.asarray(index, dtype=int)))
    if len(index) != k:
        raise PatchError(f"index must have {k} entries")
    for a, i in enumerate(index):
        if not 0 < i < len(patch.param_axes[a]) - 1:
            raise PatchError(
                "second fundamental form needs an interior grid node; "
                f"axis {a} index {i} touches the boundary"
            )
    t0 = np.array([patch.param_axes[a][index[a]] for a in range(k)])
    spacing = min(
        float(np.min(np.diff(axis))) for axis in patch.param_axes
    )
    h = fd_step if fd_step is not None else min(0.01, spacing / 2.0)

    p = patch.point_at(t0)
    g, _, _ = metric_jets(chart, p, 0)
    Gam = christoffel_matrix(chart, p)

    dP = np.stack([_first_derivative(patch.mapping, t0, a, h) for a in range(k)])
    induced = dP @ g @ dP.T
    frame = mgs_orthonormalize(g, dP)
    if frame.shape[0] != k:
        raise PatchError("patch tangents are degenerate at this node")

    B = np.empty((k, k, chart.dim))
    for a in range(k):
        for b in range(a, k):
            d2 = _stencil(patch.mapping, t0, a, b, h)
            C = d2 + np.einsum("kij,i,j->k", Gam, dP[a], dP[b])
            tang = sum(float(C @ g @ frame[c]) * frame[c] for c in range(k))
            B[a, b] = C - tang
            B[b, a] = B[a, b]
    hinv = spd_inverse(induced, context="induced metric")
    H = np.einsum("ab,abk->k", hinv, B) / k
    return SecondFundamentalData(
        point=p,
        tangents=dP,
        induced_metric=induced,
        normal_form=B,
        mean_curvature=H,
        tangent_frame=frame,
    )


@dataclass(frozen=True, eq=False)
class UmbilicityReport:
    verdict: str
    max_residual: float
    residuals: np.ndarray
    mean_curvature_norms: np.ndarray
    codim: int
    codim_even: bool
    tolerance: float
    indices: tuple
    points: np.ndarray


def _interior_indices(patch: SubmanifoldPatch, cap: int = 40):
    ranges = [range(1, len(axis) - 1) for axis in patch.param_axes]
    all_idx = list(product(*ranges))
    if len(all_idx) <= cap:
        return all_idx
    stride = int(math.ceil(len(all_idx) / cap))
    return all_idx[::stride]


def umbilicity_report(
    chart: Chart,
    patch: SubmanifoldPatch,
    tol: float = 1e-4,
) -> UmbilicityReport:
    """Umbilicity verdict over the interior grid nodes of a patch.

    The residual at a node is sqrt(sum_ab |B_ab - h_ab H|_g^2); the patch
    is reported totally umbilical when the worst node stays below ``tol``.
    Point patches get the verdict "point" with zero residual.
    """
    if patch.k == 0:
        return UmbilicityReport(
            verdict=VERDICT_POINT,
            max_residual=0.0,
            residuals=np.zeros(0),
            mean_curvature_norms=np.zeros(0),
            codim=patch.codim,
            codim_even=patch.codim % 2 == 0,
            tolerance=float(tol),
            indices=(),
            points=np.asarray(patch.samples)[None, :],
        )
    indices = _interior_indices(patch)
    residuals = np.empty(len(indices))
    hnorms = np.empty(len(indices))
    points = np.empty((len(indices), chart.dim))
    for m, idx in enumerate(indices):
        data = second_fundamental_form(chart, patch, idx)
        g, _, _ = metric_jets(chart, data.point, 0)
        diff = data.normal_form - np.einsum(
            "ab,k->abk", data.induced_metric, data.mean_curvature
        )
        residuals[m] = math.sqrt(
            sum(
                norm_vector(g, diff[a, b]) ** 2
                for a in range(patch.k)
                for b in range(patch.k)
            )
        )
        hnorms[m] = norm_vector(g, data.mean_curvature)
        points[m] = data.point
    worst = float(residuals.max())
    return UmbilicityReport(
        verdict=VERDICT_UMBILICAL if worst < tol else VERDICT_NOT_UMBILICAL,
        max_residual=worst,
        residuals=residuals,
        mean_curvature_norms=hnorms,
        codim=patch.codim,
        codim_even=patch.codim % 2 == 0,
        tolerance=float(tol),
        indices=tuple(indices),
        points=points,
    )


@dataclass(frozen=True, eq=False)
class ConformalInvarianceResult:
    original: UmbilicityReport
    rescaled: UmbilicityReport
    verdicts_agree: bool


def umbilicity_conformal_invariance_check(
    chart: Chart,
    patch: SubmanifoldPatch,
    f: FieldSpec,
    tol: float = 1e-4,
) -> ConformalInvarianceResult:
    """Umbilicity verdicts for the same patch under g and e^{2f} g."""
    original = umbilicity_report(chart, patch, tol)
    rescaled_chart = rescale_metric(chart, f)
    rescaled = umbilicity_report(rescaled_chart, patch, tol)
    return ConformalInvarianceResult(
        original=original,
        rescaled=rescaled,
        verdicts_agree=original.verdict == rescaled.verdict,
    )
