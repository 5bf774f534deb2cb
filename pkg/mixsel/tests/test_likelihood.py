import math

import numpy as np
from django.test import SimpleTestCase

from mixsel.exceptions import InvalidArgument
from mixsel.services.density import Dataset, LocationFamily, MixtureParams, ParamBall, sample
from mixsel.services.divergence import build_grid, weighted_density
from mixsel.services.likelihood import (
    FitOptions,
    dyadic_schedule,
    fit_constrained,
    lil_path,
    lil_trajectory,
    log_likelihood,
    lr_statistic,
    nested_mean_lr,
    profile_scores,
    split_heaviest,
    strassen_trajectory,
)

FAST = FitOptions(starts=4, tol=1e-8, max_iter=200)


class FitConstrainedTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.fstar = MixtureParams.build([0.5, 0.5], [-1.5, 1.5])
        self.data = sample(self.fstar, self.family, 300, 21)

    def test_degenerate_data_at_origin(self):
        data = Dataset(points=np.zeros(50))
        fit = fit_constrained(1, data, self.family, ParamBall(5.0), starts=3, seed=0)
        self.assertAlmostEqual(float(fit.params.locations[0, 0]), 0.0, places=12)
        self.assertAlmostEqual(fit.loglik, 50 * self.family.max_log_density(), places=9)

    def test_mean_outside_ball_lands_on_boundary(self):
        data = Dataset(points=7.0 + np.linspace(-0.5, 0.5, 41))
        fit = fit_constrained(1, data, self.family, ParamBall(1.0), starts=3, seed=0)
        self.assertAlmostEqual(float(fit.params.locations[0, 0]), 1.0, places=9)

    def test_locations_stay_in_ball(self):
        fit = fit_constrained(3, self.data, self.family, ParamBall(1.0), starts=4, seed=3)
        self.assertTrue(ParamBall(1.0).contains(fit.params.locations))

    def test_same_inputs_same_fit(self):
        a = fit_constrained(2, self.data, self.family, ParamBall(10.0), starts=5, seed=8)
        b = fit_constrained(2, self.data, self.family, ParamBall(10.0), starts=5, seed=8)
        self.assertEqual(a.params, b.params)
        self.assertEqual(a.loglik, b.loglik)
        self.assertEqual(a.best_start_index, b.best_start_index)

    def test_fit_does_not_depend_on_threads(self):
        a = fit_constrained(2, self.data, self.family, ParamBall(10.0), starts=6, seed=8, threads=1)
        b = fit_constrained(2, self.data, self.family, ParamBall(10.0), starts=6, seed=8, threads=3)
        self.assertEqual(a.params, b.params)

    def test_two_component_fit_finds_the_centers(self):
        fit = fit_constrained(2, self.data, self.family, ParamBall(10.0), starts=6, seed=1)
        np.testing.assert_allclose(np.sort(fit.params.locations[:, 0]), [-1.5, 1.5], atol=0.4)
        self.assertAlmostEqual(fit.loglik, log_likelihood(fit.params, self.family, self.data), places=9)

    def test_warm_start_counts_as_extra_start(self):
        one = fit_constrained(1, self.data, self.family, ParamBall(10.0), starts=2, seed=0)
        two = fit_constrained(2, self.data, self.family, ParamBall(10.0), starts=2, seed=0, warm_start=one.params)
        self.assertEqual(two.starts_used, 3)
        self.assertGreaterEqual(two.loglik, one.loglik - 1e-9)

    def test_invalid_inputs(self):
        with self.assertRaises(InvalidArgument):
            fit_constrained(0, self.data, self.family, ParamBall(1.0))
        with self.assertRaises(InvalidArgument):
            fit_constrained(1, None, self.family, ParamBall(1.0))
        with self.assertRaises(InvalidArgument):
            fit_constrained(1, self.data, LocationFamily.standard(2), ParamBall(1.0))


class ProfileTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.data = sample(MixtureParams.build([0.5, 0.5], [-1.0, 1.0]), self.family, 200, 2)
        self.ball = ParamBall(10.0)

    def test_split_heaviest_preserves_density(self):
        mix = MixtureParams.build([0.3, 0.7], [-1.0, 2.0])
        grown = split_heaviest(mix, 3)
        self.assertEqual(grown.q, 3)
        x = np.linspace(-3, 3, 13).reshape(-1, 1)
        np.testing.assert_allclose(
            log_likelihood(grown, self.family, Dataset(points=x)), log_likelihood(mix, self.family, Dataset(points=x))
        )

    def test_scores_never_decrease(self):
        fits = profile_scores(self.data, self.family, self.ball, 4, FAST, seed=5)
        scores = [f.loglik for f in fits]
        self.assertEqual([f.q for f in fits], [1, 2, 3, 4])
        self.assertTrue(all(b >= a - 1e-9 for a, b in zip(scores, scores[1:])))

    def test_lr_statistic(self):
        self.assertEqual(lr_statistic(2, 2, self.data, self.family, self.ball, FAST, seed=5), 0.0)
        self.assertGreaterEqual(lr_statistic(3, 2, self.data, self.family, self.ball, FAST, seed=5), 0.0)
        with self.assertRaises(InvalidArgument):
            lr_statistic(1, 2, self.data, self.family, self.ball)

    def test_nested_mean_lr_closed_form(self):
        data = Dataset(points=np.array([0.1, 0.3]))
        self.assertAlmostEqual(nested_mean_lr(data, ParamBall(5.0), self.family), 2 * 0.2 ** 2 / 2)

    def test_nested_mean_lr_on_boundary(self):
        data = Dataset(points=np.array([3.0, 3.0]))
        # x̄ = 3 projected to 1: n/2·(9 − 4)
        self.assertAlmostEqual(nested_mean_lr(data, ParamBall(1.0), self.family), 5.0)


class TrajectoryTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.truth = MixtureParams.build([0.5, 0.5], [-1.0, 1.0])

    def test_dyadic_schedule(self):
        self.assertEqual(dyadic_schedule(4, 6), (16, 32, 64))
        with self.assertRaises(InvalidArgument):
            dyadic_schedule(3, 5)

    def test_regular_trajectory(self):
        origin = MixtureParams.point_mass([0.0])
        traj = lil_trajectory(4, 1, 0, dyadic_schedule(4, 9), origin, self.family, ParamBall(10.0), model="regular")
        self.assertEqual(traj.n_values, (16, 32, 64, 128, 256, 512))
        for lr, w, n in zip(traj.lr_values, traj.w_values, traj.n_values):
            self.assertGreaterEqual(lr, 0.0)
            self.assertAlmostEqual(w, lr / math.log(math.log(n)))

    def test_mixture_trajectory_is_nonnegative(self):
        traj = lil_trajectory(4, 3, 2, dyadic_schedule(5, 7), self.truth, self.family, ParamBall(10.0), FAST)
        self.assertEqual(len(traj.w_values), 3)
        self.assertTrue(all(w >= 0 for w in traj.w_values))

    def test_mixture_trajectory_needs_larger_order(self):
        with self.assertRaises(InvalidArgument):
            lil_trajectory(4, 2, 2, dyadic_schedule(4, 5), self.truth, self.family, ParamBall(10.0), FAST)

    def test_paths_are_shared_prefixes(self):
        path = lil_path(9, self.truth, self.family, 64)
        self.assertEqual(path.prefix(16), lil_path(9, self.truth, self.family, 64).prefix(16))

    def test_strassen_trajectory(self):
        grid = build_grid(self.truth, self.family)
        f = MixtureParams.build([0.5, 0.5], [-1.0, 1.5])
        g = weighted_density(f, self.truth, grid)
        path = lil_path(2, self.truth, self.family, 256)
        traj = strassen_trajectory(g, g.mean(), path, (16, 64, 256))
        self.assertEqual(traj.model, "strassen")
        self.assertEqual(traj.n_values, (16, 64, 256))
        self.assertTrue(all(math.isfinite(w) for w in traj.w_values))
