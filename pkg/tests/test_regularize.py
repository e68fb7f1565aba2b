import math

import numpy as np
import pytest

from singflow.analysis import blowup_time
from singflow.exceptions import DomainError, InvalidSamplerError, NoEntryError
from singflow.fields import lorenz4d_example, planar_example, singular_rhs
from singflow.integrate import StepPolicy
from singflow.regularize import (EntryEvent, EscapeSample, RegularizationSpec, SamplerSpec,
                                 _integrate_rows, blend_inner_field, continue_from_escape,
                                 escape_via_flow, find_entry, random_inner_field,
                                 regularized_rhs, rng_stream, sample_escape)

X0 = np.array([0.4, 0.1, 0.2, 0.3])
POLICY = StepPolicy(c=0.02)


@pytest.fixture(scope="module")
def lorenz():
    return lorenz4d_example()


def test_regularized_rhs_branches(lorenz):
    inner = random_inner_field(3, lorenz)
    nu = 1e-3
    x = np.array([nu, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(regularized_rhs(lorenz, inner, nu, x), singular_rhs(lorenz, x))
    np.testing.assert_allclose(regularized_rhs(lorenz, inner, nu, np.zeros(4)),
                               nu ** lorenz.alpha * inner.h0)
    small = np.array([0.2, 0.1, 0.0, 0.0]) * nu
    np.testing.assert_allclose(regularized_rhs(lorenz, inner, nu, small),
                               nu ** lorenz.alpha * inner.h0)
    with pytest.raises(DomainError):
        regularized_rhs(lorenz, inner, 0.0, x)


def test_regularized_rhs_is_continuous_across_the_sphere(lorenz):
    inner = random_inner_field(3, lorenz)
    nu = 1e-3
    rng = np.random.default_rng(0)
    y = rng.normal(size=(20, 4))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    outside = regularized_rhs(lorenz, inner, nu, y * nu * (1 + 1e-12))
    inside = regularized_rhs(lorenz, inner, nu, y * nu * (1 - 1e-12))
    np.testing.assert_allclose(inside, outside, rtol=0, atol=1e-10)


def test_blend_matches_outer_field_beyond_three_quarters(lorenz):
    inner = blend_inner_field(lorenz, np.array([0.0, 0.0, 0.0, -1.0]))
    x = np.array([0.8, 0.1, -0.1, 0.0])
    np.testing.assert_allclose(inner(x), singular_rhs(lorenz, x), rtol=1e-14)
    with pytest.raises(DomainError):
        blend_inner_field(lorenz, np.zeros(3))


def test_random_inner_field_is_deterministic_and_offset(lorenz):
    a = random_inner_field(7, lorenz, index=4)
    b = random_inner_field(7, lorenz, index=4)
    np.testing.assert_array_equal(a.h0, b.h0)
    assert not np.array_equal(a.h0, random_inner_field(7, lorenz, index=5).h0)
    offs = np.array([random_inner_field(1, lorenz, index=i, offset_axis=3).h0
                     for i in range(200)])
    assert np.all((offs[:, 3] >= -1.5) & (offs[:, 3] <= -0.5))
    assert np.all((offs[:, :3] >= -0.5) & (offs[:, :3] <= 0.5))


def test_rng_streams_are_independent_per_index():
    a = rng_stream(1, 0).random(3)
    np.testing.assert_array_equal(a, rng_stream(1, 0).random(3))
    assert not np.array_equal(a, rng_stream(1, 1).random(3))
    assert not np.array_equal(a, rng_stream(1, 0, stream=1).random(3))


def test_find_entry_planar_closed_form():
    e = find_entry(planar_example(), np.array([-1.0, 0.0]), 1e-3)
    assert e.t_ent == pytest.approx(1.485, abs=1e-6)
    assert np.linalg.norm(e.x_ent) == pytest.approx(1e-3, rel=1e-9)


def test_entry_times_increase_toward_blowup():
    f = planar_example()
    times = [find_entry(f, np.array([-1.0, 0.0]), nu).t_ent for nu in (1e-2, 1e-3, 1e-4)]
    assert times[0] < times[1] < times[2] < 1.5


def test_find_entry_lorenz_brackets(lorenz):
    e = find_entry(lorenz, X0, 1e-5, POLICY)
    assert 1.0 < e.t_ent < blowup_time(lorenz, X0, POLICY)


def test_find_entry_failures():
    f = planar_example()
    with pytest.raises(NoEntryError):
        find_entry(f, np.array([1.0, 0.0]), 1e-3, t_max=1.0)
    with pytest.raises(DomainError):
        find_entry(f, np.array([1e-4, 0.0]), 1e-3)


def test_escape_delay_is_exact(lorenz):
    nu = 1e-4
    entry = find_entry(lorenz, X0, nu, POLICY)
    inner = blend_inner_field(lorenz, np.array([-1.0, 0.0, 0.0, 0.0]))
    esc = escape_via_flow(lorenz, inner, entry, nu, T=20.0, policy=POLICY)
    assert esc.t_esc - entry.t_ent == pytest.approx(nu ** (1 - lorenz.alpha) * 20.0, rel=1e-14)
    assert np.linalg.norm(esc.x_esc) > nu
    assert esc.x_esc[0] / np.linalg.norm(esc.x_esc) < 0.25


def test_regularized_flow_is_scale_equivariant(lorenz):
    # Phi_nu^t(x) = nu Phi_1^{t / nu^(1-alpha)}(x / nu) with matched step policies
    nu, t = 1e-4, 0.02
    k = 1 - lorenz.alpha
    h0 = np.array([[-1.0, 0.1, -0.2, 0.3]])
    x = np.array([[0.5, -0.2, 0.1, 0.3]]) * nu
    out_nu = np.empty((1, 1, 4))
    _integrate_rows(lorenz, nu, h0, x.copy(), np.zeros(1), np.array([t]), POLICY, out_nu)
    out_1 = np.empty((1, 1, 4))
    _integrate_rows(lorenz, 1.0, h0, x / nu, np.zeros(1), np.array([t / nu ** k]),
                    POLICY.rescaled(nu ** -k), out_1)
    np.testing.assert_allclose(out_nu[0, 0], nu * out_1[0, 0], rtol=1e-10)


def test_cap_sampler_support():
    s = SamplerSpec(family="cap")
    rng = np.random.default_rng(0)
    Z = np.array([s.draw(rng) for _ in range(2000)])
    np.testing.assert_allclose(np.linalg.norm(Z, axis=1), 2.0, rtol=1e-12)
    cosang = Z @ s.center / 2.0
    assert np.all(cosang >= math.cos(s.cap_angle) - 1e-12)
    assert np.all(Z[:, 0] / 2.0 < 0.25)


def test_point_and_gaussian_samplers():
    rng = np.random.default_rng(0)
    np.testing.assert_allclose(SamplerSpec(family="point").draw(rng), [-2.0, 0, 0, 0])
    g = SamplerSpec(family="gaussian", sigma=0.5)
    Z = np.array([g.draw(rng) for _ in range(500)])
    assert np.all(np.linalg.norm(Z, axis=1) > 1)
    with pytest.raises(InvalidSamplerError):
        SamplerSpec(family="cap", radius=0.5)
    with pytest.raises(InvalidSamplerError):
        SamplerSpec(family="uniform")


def test_sample_escape_is_reproducible_per_index():
    spec = RegularizationSpec(mode="map_stochastic", nu=1e-5, seed=3)
    entry = EntryEvent(1.0, np.array([-1e-5, 0, 0, 0]))
    a = sample_escape(spec, entry, 0)
    np.testing.assert_array_equal(a.x_esc, sample_escape(spec, entry, 0).x_esc)
    assert not np.array_equal(a.x_esc, sample_escape(spec, entry, 1).x_esc)
    assert np.linalg.norm(a.x_esc) == pytest.approx(2e-5)
    assert a.t_esc == pytest.approx(1.0 + (1e-5) ** (2 / 3) * 20.0)
    with pytest.raises(DomainError):
        sample_escape(RegularizationSpec(mode="direct"), entry, 0)


def test_continuation_identity_and_growth(lorenz):
    esc = EscapeSample(1.05, np.array([-2e-5, 1e-6, 0.0, 0.0]))
    c = continue_from_escape(lorenz, esc, [1.05, 1.5], POLICY, nu=1e-5)
    np.testing.assert_array_equal(c.states[0], esc.x_esc)
    assert np.linalg.norm(c.states[1]) > np.linalg.norm(esc.x_esc)
    assert not c.reentered.any()
    with pytest.raises(DomainError):
        continue_from_escape(lorenz, esc, [1.0], POLICY)


def test_planar_continuation_stays_on_positive_ray():
    esc = EscapeSample(0.0, np.array([1e-3, 0.0]))
    c = continue_from_escape(planar_example(), esc, [0.5, 1.0])
    np.testing.assert_allclose(c.states[:, 1], 0.0, atol=1e-15)
    assert 1e-3 < c.states[0, 0] < c.states[1, 0]


def test_spec_validation():
    with pytest.raises(DomainError):
        RegularizationSpec(mode="bogus")
    with pytest.raises(DomainError):
        RegularizationSpec(nu=0.0)
    with pytest.raises(DomainError):
        RegularizationSpec(mode="map_deterministic", T=0.0)
