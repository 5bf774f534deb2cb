import math

import numpy as np
from django.test import SimpleTestCase

from mixsel.exceptions import InvalidArgument, InvalidModel
from mixsel.services.density import LocationFamily, MixtureParams, ParamBall
from mixsel.services.divergence import build_grid, weighted_density
from mixsel.services.geometry import (
    SamplerBox,
    build_envelopes,
    build_partition,
    envelope_S_D,
    levelset_sandwich,
    pseudodistance,
    ratio_study,
)


class PartitionTests(SimpleTestCase):
    def setUp(self):
        self.fstar = MixtureParams.build([0.5, 0.5], [-1.0, 1.0])
        self.part = build_partition(self.fstar, seed=0)

    def test_one_dimensional_partition(self):
        self.assertEqual(self.part.epsilon, 2.0)
        self.assertEqual(self.part.radius, 0.5)
        self.assertTrue(self.part.is_disjoint())

    def test_assignment(self):
        idx = self.part.assign(np.array([[-1.2], [0.0], [1.4], [1.6]]))
        self.assertEqual(idx.tolist(), [1, 0, 2, 0])

    def test_duplicate_centers_rejected(self):
        with self.assertRaises(InvalidModel):
            build_partition(MixtureParams.build([0.5, 0.5], [1.0, 1.0]), seed=0)

    def test_overlapping_radius_rejected(self):
        with self.assertRaises(InvalidArgument):
            build_partition(self.fstar, seed=0, radius=1.5)

    def test_rotation_separates_planar_centers(self):
        fstar = MixtureParams.build([1 / 3, 1 / 3, 1 / 3], [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        part = build_partition(fstar, seed=4)
        self.assertGreater(part.epsilon, 0.0)
        self.assertTrue(part.is_disjoint())
        np.testing.assert_allclose(part.directions @ part.directions.T, np.eye(2), atol=1e-12)


class PseudodistanceTests(SimpleTestCase):
    def setUp(self):
        self.fstar = MixtureParams.build([0.5, 0.5], [-1.0, 1.0])
        self.part = build_partition(self.fstar, seed=0)

    def test_identical_parameters(self):
        self.assertEqual(pseudodistance(self.fstar, self.fstar, self.part), 0.0)

    def test_shifted_component(self):
        f = MixtureParams.build([0.5, 0.5], [-1.0, 1.1])
        self.assertAlmostEqual(pseudodistance(f, self.fstar, self.part), 0.0525, places=12)

    def test_all_mass_outside_the_balls(self):
        f = MixtureParams.build([0.5, 0.5], [0.0, 3.0])
        self.assertAlmostEqual(pseudodistance(f, self.fstar, self.part), 2.0, places=12)


class EnvelopeTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.fstar = MixtureParams.build([0.5, 0.5], [-1.0, 1.0])
        ball = ParamBall(1.0)
        grid = build_grid(self.fstar, self.family, None, ball)
        self.env = build_envelopes(self.fstar, self.family, ball, grid, ray_points=33, refine=False)

    def test_envelopes_are_square_integrable(self):
        self.assertTrue(self.env.assumption_a)
        self.assertEqual(set(self.env.norms), {"h0_4", "h1_4", "h2_4", "h3_2"})

    def test_d_envelope_doubles_s(self):
        bounds = envelope_S_D(self.env, 0.5)
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(bounds.D(x), 2.0 * bounds.S(x))
        self.assertGreater(bounds.s_norm4(), 0.0)

    def test_cstar_must_be_positive(self):
        with self.assertRaises(InvalidArgument):
            envelope_S_D(self.env, 0.0)

    def test_h0_closed_form_values(self):
        ball = ParamBall(2.0)
        grid = build_grid(self.fstar, self.family, None, ball)
        env = build_envelopes(self.fstar, self.family, ball, grid, ray_points=33, refine=False)

        def phi(z):
            return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

        def fstar(x):
            return 0.5 * phi(x + 1.0) + 0.5 * phi(x - 1.0)

        h0 = env.evaluate(np.array([0.0, 5.0]))[:, 0]
        # inside the ball the peak sits at θ = x; outside it is pinned to θ = T
        self.assertAlmostEqual(h0[0], phi(0.0) / fstar(0.0), places=10)
        self.assertAlmostEqual(h0[1] / (phi(3.0) / fstar(5.0)), 1.0, places=10)

    def test_h0_norm_matches_brute_force_grid(self):
        grid = self.env.grid
        thetas = np.linspace(-1.0, 1.0, 801)
        shifted = (grid.nodes[:, 0][:, None] - thetas[None, :])[..., None]
        log_sup = np.max(self.family.log_f0(shifted), axis=1)
        h0 = np.exp(log_sup - grid.log_fstar)
        brute = grid.expect(h0 ** 4) ** 0.25
        self.assertLess(abs(self.env.norms["h0_4"] - brute) / brute, 1e-4)


class RatioStudyTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.scaled(0.5, 1)
        self.fstar = MixtureParams.point_mass([0.5])
        self.part = build_partition(self.fstar, seed=0)
        self.box = SamplerBox(q=2, dim=1)

    def test_ratio_is_bounded_and_sandwich_is_reported(self):
        report = ratio_study(
            self.fstar, self.family, self.part, self.box, 2000, seed=9, epsilons=(0.05,), levelset_resolution=21
        )
        self.assertGreater(report.r_min, 0.0)
        self.assertLess(report.r_max, np.inf)
        self.assertEqual(report.sandwich["0.05"], report.sandwich_violations["0.05"] == 0)
        self.assertEqual(report.levelsets["coords"].shape[1], 3)

    def test_report_does_not_depend_on_threads(self):
        one = ratio_study(self.fstar, self.family, self.part, self.box, 3000, seed=2, threads=1)
        two = ratio_study(self.fstar, self.family, self.part, self.box, 3000, seed=2, threads=3)
        np.testing.assert_array_equal(one.h, two.h)
        np.testing.assert_array_equal(one.N, two.N)

    def test_too_few_samples_rejected(self):
        with self.assertRaises(InvalidArgument):
            ratio_study(self.fstar, self.family, self.part, self.box, 10, seed=0)

    def test_tightened_upper_ratio_breaks_the_sandwich(self):
        report = ratio_study(
            self.fstar, self.family, self.part, self.box, 2000, seed=9, epsilons=(0.05,), levelset_resolution=21
        )
        h, n_val = report.levelsets["h"], report.levelsets["N"]
        positive = n_val > 1e-9
        ratios = np.where(positive, h / np.where(positive, n_val, 1.0), -np.inf)
        j = int(np.argmax(ratios))
        self.assertLess(report.r_min, 0.999 * ratios[j])
        # ε just under h_j keeps N_j inside {N ≤ ε/r_min} while h_j > ε
        eps = 0.999 * h[j]
        holds, violations = levelset_sandwich(h, n_val, eps, report.r_min, report.r_min)
        self.assertFalse(holds)
        self.assertGreater(violations, 0)

    def test_ratio_bounds_are_stable_across_seeds(self):
        a = ratio_study(self.fstar, self.family, self.part, self.box, 5000, seed=21)
        b = ratio_study(self.fstar, self.family, self.part, self.box, 5000, seed=22)
        self.assertLess(abs(a.r_min - b.r_min) / a.r_min, 0.1)
        self.assertLess(abs(a.r_max - b.r_max) / a.r_max, 0.1)

    def test_weighted_density_stays_under_d_envelope(self):
        ball = ParamBall(1.0)
        grid = build_grid(self.fstar, self.family, None, ball)
        report = ratio_study(self.fstar, self.family, self.part, self.box, 2000, seed=5, grid=grid)
        env = build_envelopes(self.fstar, self.family, ball, grid, ray_points=65, refine=False)
        bounds = envelope_S_D(env, report.cstar)
        weights, locations = self.box.unpack(report.samples)
        x = np.linspace(-2.0, 3.0, 26)
        candidates = np.flatnonzero(report.N > 1e-3)[:20]
        self.assertEqual(len(candidates), 20)
        for i in candidates:
            f = MixtureParams.build(weights[i], locations[i])
            excess = bounds.check_d_bound(weighted_density(f, self.fstar, grid), x)
            self.assertLessEqual(float(np.max(excess)), 1e-9, f"sample {i}")


class LevelsetSandwichTests(SimpleTestCase):
    def setUp(self):
        self.n_val = np.linspace(0.01, 1.0, 200)
        ratio = np.where(np.arange(200) % 2 == 0, 1.0, 2.0)
        self.h = ratio * self.n_val

    def test_true_ratio_bounds_hold(self):
        self.assertEqual(levelset_sandwich(self.h, self.n_val, 0.5, 1.0, 2.0), (True, 0))

    def test_tightened_upper_bound_is_caught(self):
        holds, violations = levelset_sandwich(self.h, self.n_val, 0.5, 1.0, 1.5)
        self.assertFalse(holds)
        self.assertGreater(violations, 0)

    def test_raised_lower_bound_is_caught(self):
        holds, _ = levelset_sandwich(self.h, self.n_val, 0.5, 1.5, 2.0)
        self.assertFalse(holds)

    def test_inverted_bounds_rejected(self):
        with self.assertRaises(InvalidArgument):
            levelset_sandwich(self.h, self.n_val, 0.5, 2.0, 1.0)


class SamplerBoxTests(SimpleTestCase):
    def test_shrink_is_centered_and_clipped(self):
        box = SamplerBox(q=2, dim=1, theta_low=-1.0, theta_high=1.0)
        small = box.shrink_toward(np.array([0.5, 0.25]), 0.2)
        self.assertAlmostEqual(small.weight_low, 0.4)
        self.assertAlmostEqual(small.weight_high, 0.6)
        self.assertAlmostEqual(small.theta_low, 0.05)
        self.assertAlmostEqual(small.theta_high, 0.45)
        edge = box.shrink_toward(np.array([0.95, 0.0]), 0.5)
        self.assertEqual(edge.weight_high, 1.0)

    def test_shrunk_box_samples_stay_local(self):
        family = LocationFamily.scaled(0.5, 1)
        fstar = MixtureParams.point_mass([0.5])
        part = build_partition(fstar, seed=0)
        full = SamplerBox(q=2, dim=1)
        small = full.shrink_toward(np.array([0.5, 0.5]), 0.2)
        wide = ratio_study(fstar, family, part, full, 3000, seed=3)
        near = ratio_study(fstar, family, part, small, 3000, seed=3)
        self.assertTrue(np.all(near.samples >= small.lows() - 1e-12))
        self.assertTrue(np.all(near.samples <= small.highs() + 1e-12))
        self.assertLess(float(np.max(near.N)), float(np.max(wide.N)))
        self.assertGreaterEqual(near.r_min, 0.5 * wide.r_min)
        self.assertLessEqual(near.r_max, 2.0 * wide.r_max)
