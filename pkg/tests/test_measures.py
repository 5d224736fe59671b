import numpy as np
import pytest

from otrates.costs import power_cost
from otrates.errors import UsageError
from otrates.measures import (DiscreteMeasure, concentration_certificate,
                              gaussian, ground_truth_gaussian_w2,
                              ground_truth_location, lb_construction,
                              parse_sampler, point_mass, sample, translate,
                              uniform_ball, uniform_cube)

D = 5


def test_discrete_measure_rejects_unnormalized_weights():
    with pytest.raises(UsageError):
        DiscreteMeasure(np.zeros((3, 2)), np.array([0.5, 0.4, 0.2]))


def test_discrete_measure_rejects_negative_weights():
    with pytest.raises(UsageError):
        DiscreteMeasure(np.zeros((2, 2)), np.array([1.5, -0.5]))


def test_sampling_is_reproducible():
    s = uniform_ball([0.0] * D, 0.5)
    a = sample(s, 50, seed=11)
    b = sample(s, 50, seed=11)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, sample(s, 50, seed=12).points)


def test_ball_samples_stay_in_ball():
    s = uniform_ball([0.1] * D, 0.3)
    m = sample(s, 2000, seed=0)
    r = np.linalg.norm(m.points - 0.1, axis=1)
    assert r.max() <= 0.3 + 1e-12
    # a uniform draw on the ball should not concentrate near the center
    assert np.quantile(r, 0.5) > 0.2


def test_cube_samples_stay_in_cube():
    s = uniform_cube([0.0] * 3, 0.25, d=3)
    m = sample(s, 500, seed=4)
    assert np.abs(m.points).max() <= 0.25 + 1e-12


def test_point_mass_samples_are_constant():
    s = point_mass([1.0, 2.0])
    m = sample(s, 7, seed=3)
    np.testing.assert_array_equal(m.points, np.tile([1.0, 2.0], (7, 1)))


def test_gaussian_moments_match(gen):
    cov = np.diag([1.0, 2.0, 0.5])
    s = gaussian([1.0, -1.0, 0.0], cov)
    m = sample(s, 50000, seed=9)
    np.testing.assert_allclose(m.points.mean(axis=0), [1.0, -1.0, 0.0], atol=0.03)
    np.testing.assert_allclose(np.cov(m.points.T), cov, atol=0.05)


def test_translate_is_equivariant_sample_by_sample():
    base = uniform_ball([0.0] * D, 0.5)
    z0 = np.array([0.3, 0, 0, 0, 0.1])
    a = sample(base, 40, seed=21)
    b = sample(translate(base, z0), 40, seed=21)
    np.testing.assert_allclose(b.points, a.points + z0, rtol=0, atol=1e-15)


def test_oversized_support_warns():
    with pytest.warns(UserWarning):
        uniform_ball([0.0] * 3, 2.0)


# ---------------------------------------------------------------------------
# ground truths
# ---------------------------------------------------------------------------

def test_location_ground_truth_is_cost_at_shift():
    cost = power_cost(2, 2, D)
    z0 = np.array([0.5, 0, 0, 0, 0])
    pair = ground_truth_location(uniform_ball([0.0] * D, 0.25), z0, cost)
    assert pair.exact_value == pytest.approx(0.25)
    assert pair.provenance == "location_family"


def test_identical_pair_ground_truth_is_zero():
    cost = power_cost(1, 2, D)
    pair = ground_truth_location(uniform_ball([0.0] * D, 0.25), np.zeros(D), cost)
    assert pair.exact_value == 0.0
    assert pair.provenance == "identical_pair"


def test_gaussian_w2_spherical_case():
    # Equal spherical covariances: squared W2 is the squared mean distance.
    pair = ground_truth_gaussian_w2(np.zeros(D), np.eye(D),
                                    np.array([1.0, 0, 0, 0, 0]), np.eye(D))
    assert pair.exact_value == pytest.approx(1.0)


def test_gaussian_w2_commuting_covariances():
    # Diagonal covariances commute: W2^2 = ||m1-m2||^2 + sum (sqrt(a)-sqrt(b))^2.
    a = np.array([1.0, 4.0, 9.0])
    b = np.array([4.0, 1.0, 1.0])
    pair = ground_truth_gaussian_w2(np.zeros(3), np.diag(a), np.zeros(3), np.diag(b))
    expect = ((np.sqrt(a) - np.sqrt(b)) ** 2).sum()
    assert pair.exact_value == pytest.approx(expect, rel=1e-12)


def test_gaussian_w2_general_case_vs_sampled_rotation(gen):
    # Rotate a diagonal case: the value is rotation invariant.
    a, b = np.diag([1.0, 2.0, 3.0]), np.diag([0.5, 0.5, 2.0])
    Q, _ = np.linalg.qr(gen.normal(size=(3, 3)))
    base = ground_truth_gaussian_w2(np.zeros(3), a, np.zeros(3), b)
    rot = ground_truth_gaussian_w2(np.zeros(3), Q @ a @ Q.T, np.zeros(3), Q @ b @ Q.T)
    assert rot.exact_value == pytest.approx(base.exact_value, rel=1e-10)


def test_lower_bound_construction_reports_pair():
    cost = power_cost(2, 2, 3)
    pair = lb_construction(np.zeros(3), np.array([0.4, 0, 0]), 0.1, cost)
    assert pair.exact_value > 0


# ---------------------------------------------------------------------------
# concentration certificates
# ---------------------------------------------------------------------------

def test_compact_certificate_integral_below_two():
    meta = concentration_certificate(uniform_ball([0.0] * 3, 0.8), trials=20000)
    assert meta.beta == 2.0
    assert meta.analytic
    assert meta.mc_integral <= 2.0 + 3 * meta.mc_se


def test_gaussian_certificate_integral_below_two():
    meta = concentration_certificate(gaussian([0.5, 0, 0], np.eye(3)), trials=50000)
    assert meta.mc_integral <= 2.0 + 3 * meta.mc_se
    assert meta.gamma1 == pytest.approx(1.0)
    assert meta.gamma2 == pytest.approx(0.5)


def test_certificate_collapses_translations():
    base = gaussian([0.0, 0.0], np.eye(2))
    shifted = translate(base, [0.3, 0.4])
    meta = concentration_certificate(shifted, trials=1000)
    assert meta.gamma2 == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_parse_ball_and_cube():
    s = parse_sampler("ball:c=0,0,0;r=0.5", 3)
    assert s.kind == "uniform_ball" and s.radius == 0.5
    s = parse_sampler("cube:c=0.1,0.1;hw=0.2", 2)
    assert s.kind == "uniform_cube" and s.half_width == 0.2


def test_parse_gaussian_cov_forms():
    assert parse_sampler("gauss:m=0,0;cov=I", 2).cov == (1.0, 0.0, 0.0, 1.0)
    assert parse_sampler("gauss:m=0,0;cov=2", 2).cov == (2.0, 0.0, 0.0, 2.0)
    s = parse_sampler("gauss:m=0,0;cov=1,3", 2)
    assert s.cov == (1.0, 0.0, 0.0, 3.0)


def test_parse_translate_references_named_sampler():
    mu = parse_sampler("ball:c=0,0;r=0.5", 2)
    nu = parse_sampler("translate:mu;z0=0.1,0.2", 2, named={"mu": mu})
    assert nu.kind == "translate" and nu.inner == mu


@pytest.mark.parametrize("bad", ["ball:r=0.5", "ball:c=0,0;r=-1", "orb:c=0;r=1",
                                 "gauss:m=0,0;cov=1,2,3", "translate:xi;z0=0,0"])
def test_parse_rejects_malformed_samplers(bad):
    with pytest.raises(UsageError):
        parse_sampler(bad, 2, named={})
