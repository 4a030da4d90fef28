"""Zero set tracing, second fundamental form, and umbilicity reports."""
import math

import numpy as np
import pytest

import confield.models as models
from confield.expr import parse
from confield.geometry import FieldSpec, metric_value, norm_vector
from confield.zeroset import (
    PatchError,
    SubmanifoldPatch,
    second_fundamental_form,
    trace_component,
    umbilicity_conformal_invariance_check,
    umbilicity_report,
)

FLAT3 = models.euclidean(3)
SPHERE = models.sphere_stereographic(3)


# -- tracing ------------------------------------------------------------------


def test_rotation_axis_patch():
    xi = models.rotation(FLAT3, 1, 2)
    patch = trace_component(FLAT3, xi, np.zeros(3), radius=0.3, grid=5)
    assert patch.k == 1
    assert patch.codim == 2
    assert patch.grid_shape == (5,)
    assert patch.samples.shape == (5, 3)
    # the component is the x3 axis
    assert np.abs(patch.samples[:, :2]).max() < 1e-12
    assert np.abs(np.abs(patch.tangent_basis[0, 2]) - norm_vector(np.eye(3), patch.tangent_basis[0])).max() < 1e-12
    assert patch.max_field_norm < 1e-12
    # parameters reach the requested radius
    assert patch.param_axes[0][0] == pytest.approx(-0.3)
    assert patch.param_axes[0][-1] == pytest.approx(0.3)


def test_circle_component_patch_on_round_chart():
    xi = models.sphere_killing(SPHERE, 3, 4)
    base = np.array([1.0, 0.0, 0.0])
    patch = trace_component(SPHERE, xi, base, radius=0.4, grid=7)
    assert patch.k == 1
    assert patch.codim == 2
    flat = patch.samples.reshape(-1, 3)
    assert np.abs(flat[:, 2]).max() < 1e-8
    assert np.abs(np.linalg.norm(flat[:, :2], axis=1) - 1.0).max() < 1e-8
    assert patch.max_field_norm < 1e-5


def test_plane_component_in_four_dimensions():
    flat4 = models.euclidean(4)
    xi = models.rotation(flat4, 1, 2)
    patch = trace_component(flat4, xi, np.zeros(4), radius=0.25, grid=5)
    assert patch.k == 2
    assert patch.codim == 2
    assert patch.grid_shape == (5, 5)
    flat = patch.samples.reshape(-1, 4)
    # the component is the x3-x4 plane
    assert np.abs(flat[:, :2]).max() < 1e-10
    assert patch.max_field_norm < 1e-10


def test_tracing_refuses_essential_zero():
    xi = models.special_conformal(FLAT3, 1)
    with pytest.raises(PatchError):
        trace_component(FLAT3, xi, np.zeros(3))


def test_tracing_refuses_homothetic_zero():
    with pytest.raises(PatchError):
        trace_component(FLAT3, models.euler(FLAT3), np.zeros(3))


def test_tracing_requires_odd_grid():
    xi = models.rotation(FLAT3, 1, 2)
    with pytest.raises(ValueError):
        trace_component(FLAT3, xi, np.zeros(3), grid=4)
    with pytest.raises(ValueError):
        trace_component(FLAT3, xi, np.zeros(3), grid=1)


def test_two_dimensional_point_component():
    flat2 = models.euclidean(2)
    xi = models.rotation(flat2, 1, 2)
    patch = trace_component(flat2, xi, np.zeros(2))
    assert patch.k == 0
    assert patch.codim == 2
    assert patch.samples.shape == (2,)
    report = umbilicity_report(flat2, patch)
    assert report.verdict == "point"
    assert report.codim_even


def test_two_dimensional_scaling_zero_refused():
    flat2 = models.euclidean(2)
    with pytest.raises(PatchError):
        trace_component(flat2, models.euler(flat2), np.zeros(2))


def test_point_at_matches_samples():
    xi = models.rotation(FLAT3, 1, 2)
    patch = trace_component(FLAT3, xi, np.zeros(3), radius=0.2, grid=5)
    t = np.array([patch.param_axes[0][3]])
    assert np.array_equal(patch.point_at(t), patch.mapping(t))


# -- second fundamental form on synthetic patches -------------------------------


def _linspace(lo, hi, num):
    return np.linspace(lo, hi, num)


def test_hyperplane_has_zero_second_fundamental_form():
    patch = SubmanifoldPatch.from_map(
        FLAT3,
        lambda t: np.array([t[0], t[1], 0.25]),
        (_linspace(-0.5, 0.5, 7), _linspace(-0.5, 0.5, 7)),
    )
    assert math.isnan(patch.max_field_norm)
    assert patch.field_norms is None
    data = second_fundamental_form(FLAT3, patch, (3, 3))
    assert np.abs(data.normal_form).max() < 1e-9
    assert np.abs(data.mean_curvature).max() < 1e-9
    report = umbilicity_report(FLAT3, patch)
    assert report.verdict == "totally_umbilical"
    assert report.max_residual < 1e-8


def test_round_two_sphere_is_umbilical_with_mean_curvature_two():
    r = 0.5

    def emb(t):
        th, ph = t
        return r * np.array(
            [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        )

    patch = SubmanifoldPatch.from_map(
        FLAT3, emb, (_linspace(0.6, 2.5, 9), _linspace(-2.8, 2.8, 9))
    )
    data = second_fundamental_form(FLAT3, patch, (4, 4))
    p = data.point
    # B must be proportional to the induced metric with normal of length 1/r
    assert np.linalg.norm(data.mean_curvature) == pytest.approx(2.0, abs=1e-5)
    # mean curvature points radially
    cross = np.cross(data.mean_curvature, p)
    assert np.linalg.norm(cross) < 1e-5
    report = umbilicity_report(FLAT3, patch)
    assert report.verdict == "totally_umbilical"
    assert report.max_residual < 1e-4
    assert not report.codim_even  # codim 1 synthetic patch, reported honestly


def test_cylinder_is_not_umbilical():
    def emb(t):
        th, z = t
        return np.array([0.8 * math.cos(th), 0.8 * math.sin(th), z])

    patch = SubmanifoldPatch.from_map(
        FLAT3, emb, (_linspace(-2.5, 2.5, 9), _linspace(-1.0, 1.0, 9))
    )
    report = umbilicity_report(FLAT3, patch)
    assert report.verdict == "not_umbilical"
    assert report.max_residual > 0.5


def test_great_subsphere_is_minimal_in_round_metric():
    """The coordinate unit circle in the x1-x2 plane is a closed geodesic
    circle of the round metric; as the fixed set of an isometry it is
    totally geodesic: B = 0, H = 0."""

    def emb(t):
        return np.array([math.cos(t[0]), math.sin(t[0]), 0.0])

    patch = SubmanifoldPatch.from_map(SPHERE, emb, (_linspace(-3.0, 3.0, 13),))
    data = second_fundamental_form(SPHERE, patch, (6,))
    assert np.abs(data.normal_form).max() < 1e-6
    report = umbilicity_report(SPHERE, patch)
    assert report.verdict == "totally_umbilical"
    assert np.abs(report.mean_curvature_norms).max() < 1e-5


def test_from_map_records_field_norms_when_field_given():
    xi = models.rotation(FLAT3, 1, 2)
    patch = SubmanifoldPatch.from_map(
        FLAT3,
        lambda t: np.array([0.0, 0.0, t[0]]),
        (_linspace(-0.5, 0.5, 5),),
        xi=xi,
    )
    assert patch.field_norms is not None
    assert patch.field_norms.shape == (5,)
    assert patch.max_field_norm < 1e-12


def test_second_fundamental_form_refusals():
    flat2 = models.euclidean(2)
    point_patch = trace_component(flat2, models.rotation(flat2, 1, 2), np.zeros(2))
    with pytest.raises(PatchError):
        second_fundamental_form(flat2, point_patch, ())

    xi = models.rotation(FLAT3, 1, 2)
    patch = trace_component(FLAT3, xi, np.zeros(3), radius=0.2, grid=5)
    with pytest.raises(PatchError):
        second_fundamental_form(FLAT3, patch, (0,))
    with pytest.raises(PatchError):
        second_fundamental_form(FLAT3, patch, (4,))


def test_traced_axis_report_is_umbilical_with_even_codim():
    xi = models.rotation(FLAT3, 1, 2)
    patch = trace_component(FLAT3, xi, np.zeros(3), radius=0.3, grid=5)
    report = umbilicity_report(FLAT3, patch)
    assert report.verdict == "totally_umbilical"
    assert report.codim == 2
    assert report.codim_even
    assert report.max_residual < 1e-6
    assert len(report.indices) == len(report.residuals)
    assert report.points.shape == (len(report.indices), 3)


def test_circle_component_report_on_round_chart():
    xi = models.sphere_killing(SPHERE, 3, 4)
    patch = trace_component(SPHERE, xi, np.array([1.0, 0.0, 0.0]), radius=0.4, grid=7)
    report = umbilicity_report(SPHERE, patch)
    assert report.verdict == "totally_umbilical"
    assert report.codim_even
    assert report.max_residual < 1e-4
    assert np.abs(report.mean_curvature_norms).max() < 1e-3


def test_umbilicity_verdicts_stable_under_rescaling():
    f = FieldSpec.scalar(FLAT3, parse("0.3*sin(x1)", 3))
    xi = models.rotation(FLAT3, 1, 2)
    traced = trace_component(FLAT3, xi, np.zeros(3), radius=0.3, grid=5)
    result = umbilicity_conformal_invariance_check(FLAT3, traced, f)
    assert result.verdicts_agree
    assert result.original.verdict == "totally_umbilical"
    assert result.rescaled.verdict == "totally_umbilical"

    def emb(t):
        th, z = t
        return np.array([0.8 * math.cos(th), 0.8 * math.sin(th), z])

    cylinder = SubmanifoldPatch.from_map(
        FLAT3, emb, (_linspace(-2.5, 2.5, 9), _linspace(-1.0, 1.0, 9))
    )
    result = umbilicity_conformal_invariance_check(FLAT3, cylinder, f)
    assert result.verdicts_agree
    assert result.original.verdict == "not_umbilical"


def test_rescaled_synthetic_sphere_stays_umbilical():
    """Umbilical points are conformally invariant even though the mean
    curvature itself is not."""

    def emb(t):
        th, ph = t
        return 0.5 * np.array(
            [math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]
        )

    patch = SubmanifoldPatch.from_map(
        FLAT3, emb, (_linspace(0.6, 2.5, 9), _linspace(-2.8, 2.8, 9))
    )
    f = FieldSpec.scalar(FLAT3, parse("x1/4 + x3/5", 3))
    result = umbilicity_conformal_invariance_check(FLAT3, patch, f)
    assert result.verdicts_agree
    assert result.rescaled.verdict == "totally_umbilical"
