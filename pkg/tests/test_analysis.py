import math

import numpy as np
import pytest

from singflow.analysis import (GsyncConfig, SRBPrimeSet, attractor_point, batch_means,
                               blowup_estimate, blowup_time, explicit_w, gradient_bound,
                               gradient_constants, gsync_gradient, gsync_value,
                               predict_post_blowup, radial_bounds, scale_map, srb_average,
                               srb_prime_ensemble, sync_error, tail_bound, trapping_bounds)
from singflow.exceptions import BoundViolationError, DomainError, NotFocusingError
from singflow.fields import (HomogeneousField, constant_radial_example, lorenz4d_example,
                             planar_example, stereo_forward, stereo_inverse)
from singflow.integrate import StepPolicy

ALPHA = 1.0 / 3.0
K = 1.0 - ALPHA


def wobbly_field(eps=0.3, omega=0.1):
    """Planar rotation with F_r = 1 + eps*y0, slow enough for the gradient bound to apply."""
    def F(y):
        y = np.asarray(y, dtype=float)
        rot = np.stack([-y[..., 1], y[..., 0]], axis=-1)
        return (1.0 + eps * y[..., :1]) * y + omega * rot
    return HomogeneousField(d=2, alpha=ALPHA, F=F, name="wobbly")


def test_trapping_bounds_examples():
    assert trapping_bounds(1.0, 2.0, ALPHA) == pytest.approx((0.75, 1.5))
    w = trapping_bounds(2.0, 2.0, ALPHA)
    assert w[0] == w[1] == pytest.approx(1.0 / (K * 2.0))
    with pytest.raises(DomainError):
        trapping_bounds(0.0, 1.0, ALPHA)
    with pytest.raises(DomainError):
        trapping_bounds(2.0, 1.0, ALPHA)


def test_tail_bound_and_cutoff_meet_tolerance():
    cfg = GsyncConfig(F_m=0.5, tolerance=1e-8)
    s_p = cfg.cutoff(ALPHA)
    assert tail_bound(ALPHA, 0.5, s_p) == pytest.approx(1e-8)
    assert GsyncConfig(s_p=3.0).cutoff(ALPHA) == 3.0
    assert GsyncConfig().cutoff(ALPHA) is None


def test_explicit_w_closed_form():
    f = constant_radial_example(F0=1.5, omega=1.0)
    y0 = np.array([1.0, 0.0])
    assert explicit_w(f, y0, 2.0, 0.0, 1e-2) == 2.0
    for s in (0.5, 3.0):
        e = math.exp(-K * 1.5 * s)
        exact = 2.0 * e + (1 - e) / (K * 1.5)
        assert explicit_w(f, y0, 2.0, s, 1e-3) == pytest.approx(exact, rel=1e-10)
    assert explicit_w(f, y0, 2.0, 80.0, 1e-2) == pytest.approx(1 / (K * 1.5), rel=1e-9)


def test_gsync_constant_radial_and_planar_fixed_point():
    f = constant_radial_example(F0=2.0, omega=1.0)
    assert gsync_value(f, np.array([0.6, 0.8])) == pytest.approx(1 / (K * 2.0), abs=1e-7)
    np.testing.assert_allclose(gsync_gradient(f, np.array([0.6, 0.8])), 0.0, atol=1e-6)
    assert gsync_value(planar_example(), np.array([1.0, 0.0])) == pytest.approx(1.5, abs=1e-7)


def test_gsync_respects_lower_bound():
    with pytest.raises(BoundViolationError):
        gsync_value(planar_example(), np.array([1.0, 0.0]), GsyncConfig(F_m=2.0))


def test_gradient_matches_finite_difference_and_bound():
    f = wobbly_field()
    cfg = GsyncConfig(tolerance=1e-10)
    thetas = np.linspace(0, 2 * np.pi, 7)[:-1]
    Y = np.column_stack([np.cos(thetas), np.sin(thetas)])
    M_s, M_r, m_r = gradient_constants(f, np.column_stack(
        [np.cos(np.linspace(0, 2 * np.pi, 200)), np.sin(np.linspace(0, 2 * np.pi, 200))]))
    bound = gradient_bound(ALPHA, M_r, m_r, M_s)
    h = 1e-4
    for th, y in zip(thetas, Y):
        g = gsync_gradient(f, y, cfg)
        tangent = np.array([-math.sin(th), math.cos(th)])
        plus = gsync_value(f, np.array([math.cos(th + h), math.sin(th + h)]), cfg)
        minus = gsync_value(f, np.array([math.cos(th - h), math.sin(th - h)]), cfg)
        assert g @ tangent == pytest.approx((plus - minus) / (2 * h), abs=1e-5)
        assert g @ y == pytest.approx(0.0, abs=1e-8)
        assert np.linalg.norm(g) <= bound


def test_gradient_bound_domain():
    assert gradient_bound(ALPHA, 1.0, 1.0, 0.1) == pytest.approx(1.0 / ((K - 0.1) * 1.0))
    with pytest.raises(DomainError):
        gradient_bound(ALPHA, 1.0, 1.0, 1.0)


def test_sync_error_decays_exponentially_for_constant_radial():
    f = constant_radial_example(F0=1.0, omega=1.0)
    cfg = GsyncConfig(ds=1e-2)
    W0 = 1 / K
    s = np.array([0.0, 1.0, 5.0])
    err = sync_error(f, np.array([1.0, 0.0]), 3.0, s, cfg, g0=W0)
    np.testing.assert_allclose(err, abs(3.0 - W0) * np.exp(-K * s), rtol=1e-8)
    on_graph = sync_error(f, np.array([1.0, 0.0]), W0, s, cfg)
    assert on_graph.max() <= 1e-7


def test_sync_error_lorenz_contracts():
    f = lorenz4d_example()
    y0 = stereo_inverse(np.array([1.0, 1.0, 20.0]))
    y, g, bound = attractor_point(f, y0, F_m=0.09)
    assert bound < 1e-8
    for w0 in (0.1, 10.0):
        err = sync_error(f, y, w0, np.array([50.0]), g0=g)
        assert err[0] < 1e-3


def test_srb_average_of_constant_and_symmetric_observable():
    f = lorenz4d_example()
    y0 = stereo_inverse(np.array([1.0, 1.0, 20.0]))
    assert srb_average(f, y0, lambda Y: np.ones(len(Y)), 10.0, 50.0, 1e-2) == 1.0
    mean, err = srb_average(f, y0, lambda Y: stereo_forward(Y)[:, 0], 50.0, 1e4, 1e-2,
                            return_error=True)
    assert abs(mean) < 0.5
    assert err > 0


def test_batch_means():
    mean, err = batch_means(np.ones(100))
    assert mean == 1.0 and err == 0.0
    with pytest.raises(DomainError):
        batch_means(np.ones(5), n_batches=10)


def test_radial_bounds_positive_on_lorenz_attractor():
    f = lorenz4d_example()
    lo, hi = radial_bounds(f, stereo_inverse(np.array([1.0, 1.0, 20.0])), 200.0)
    assert 0 < lo < hi
    with pytest.raises(BoundViolationError):
        radial_bounds(planar_example(), np.array([-1.0, 0.0]), 1.0)


def test_srb_prime_weights():
    f = constant_radial_example(F0=1.0, omega=1.0)
    pts = srb_prime_ensemble(f, np.array([1.0, 0.0]), 20, 0.5, GsyncConfig(F_m=0.9))
    np.testing.assert_allclose(pts.W, 1 / K, rtol=1e-7)
    np.testing.assert_allclose(pts.weights, 1 / 20, rtol=1e-7)
    lz = lorenz4d_example()
    pts = srb_prime_ensemble(lz, stereo_inverse(np.array([1.0, 1.0, 20.0])), 200, 0.5,
                             GsyncConfig(F_m=0.09))
    assert pts.weights.sum() == pytest.approx(1.0, abs=1e-12)
    prod = pts.weights * pts.W
    np.testing.assert_allclose(prod, prod[0], rtol=1e-10)
    assert np.sum(pts.weights / pts.W * pts.W) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        srb_prime_ensemble(lz, np.array([-1.0, 0, 0, 0]), 10, 0.5, GsyncConfig())


def test_scale_map_and_prediction_radius_law():
    Y = np.array([[1.0, 0.0], [0.0, 1.0]])
    W = np.array([0.5, 2.0])
    np.testing.assert_allclose(np.linalg.norm(scale_map(Y, np.array([0.5, 0.5]), 0.5, ALPHA),
                                              axis=1), 1.0)
    a = predict_post_blowup(SRBPrimeSet(Y, W, np.array([0.5, 0.5])), 2.0, 1.5, ALPHA)
    b = predict_post_blowup(SRBPrimeSet(Y, W, np.array([0.5, 0.5])), 2.5, 1.5, ALPHA)
    r = np.linalg.norm(a.points, axis=1)
    np.testing.assert_allclose(r * W ** 1.5, 0.5 ** 1.5, rtol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(b.points, axis=1) / r, 2 ** 1.5, rtol=1e-14)
    with pytest.raises(DomainError):
        predict_post_blowup(SRBPrimeSet(Y, W, np.array([0.5, 0.5])), 1.0, 1.5, ALPHA)


def test_blowup_time_planar_and_scaling():
    f = planar_example()
    assert blowup_time(f, np.array([-1.0, 0.0])) == pytest.approx(1.5, abs=1e-6)
    lz = lorenz4d_example()
    pol = StepPolicy(c=0.02)
    x0 = np.array([0.4, 0.1, 0.2, 0.3])
    t_b = blowup_time(lz, x0, pol)
    assert t_b == pytest.approx(1.046, abs=5e-3)
    nu = 1e-3
    scaled = blowup_time(lz, x0 / nu, pol.rescaled(nu ** (ALPHA - 1)), t_max=1e3)
    assert scaled == pytest.approx(t_b / nu ** K, rel=1e-8)


def test_blowup_estimate_reports_convergence():
    est = blowup_estimate(lorenz4d_example(), np.array([0.4, 0.1, 0.2, 0.3]), StepPolicy(c=0.02))
    assert est.spherical_residual <= 1e-3
    assert est.t_stop < est.t_b
    with pytest.raises(NotFocusingError):
        blowup_estimate(planar_example(), np.array([1.0, 0.0]), t_max=1.0)
