import math

import numpy as np
from django.test import SimpleTestCase

from mixsel.exceptions import DegenerateWeighting, GridTooSmall, InvalidArgument
from mixsel.services.density import Dataset, LocationFamily, MixtureParams, ParamBall, sample
from mixsel.services.divergence import (
    GridSpec,
    build_grid,
    chi_square,
    chi_square_direction_gap,
    empirical_process,
    hellinger,
    kl,
    likelihood_ratio_bound,
    strassen_normalized,
    total_variation,
    weighted_density,
)
from mixsel.services.seeding import derived_seed


def point(theta):
    return MixtureParams.point_mass([theta])


class GridTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.fstar = point(0.0)

    def test_grid_is_cached(self):
        self.assertIs(build_grid(self.fstar, self.family), build_grid(self.fstar, self.family))

    def test_tight_radius_refused(self):
        with self.assertRaises(GridTooSmall):
            build_grid(self.fstar, self.family, GridSpec.uniform(0.01, radius=1.0))

    def test_grid_integrates_fstar_to_one(self):
        grid = build_grid(self.fstar, self.family)
        self.assertAlmostEqual(grid.integrate(np.exp(grid.log_fstar)), 1.0, places=8)


class HellingerTests(SimpleTestCase):
    def test_identical_mixtures(self):
        family = LocationFamily.standard(1)
        grid = build_grid(point(0.0), family)
        self.assertEqual(hellinger(point(0.0), point(0.0), grid), 0.0)

    def test_unit_gaussians_closed_form(self):
        family = LocationFamily.standard(1)
        grid = build_grid(point(0.0), family)
        self.assertAlmostEqual(hellinger(point(0.0), point(1.0), grid), 0.484775, delta=1e-6)

    def test_quarter_variance_family(self):
        family = LocationFamily.scaled(0.5, 1)
        grid = build_grid(point(0.5), family)
        self.assertAlmostEqual(hellinger(point(0.5), point(0.6), grid), 0.0998752, delta=1e-7)

    def test_hellinger_below_total_variation_bound(self):
        family = LocationFamily.standard(1)
        grid = build_grid(point(0.0), family)
        h = hellinger(point(0.0), point(0.7), grid)
        tv = total_variation(point(0.0), point(0.7), grid)
        self.assertLessEqual(h * h, tv + 1e-9)


class RandomMixtureTests(SimpleTestCase):
    """Metric and ordering properties over 100 random mixtures in [−2, 2]."""

    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.grid = build_grid(point(0.0), self.family, None, ParamBall(2.0))
        self.mixtures = []
        for k in range(100):
            rng = np.random.default_rng(derived_seed(2024, "divergence-properties", k))
            q = int(rng.integers(1, 4))
            self.mixtures.append(MixtureParams.build(rng.dirichlet(np.ones(q)), rng.uniform(-2.0, 2.0, size=q)))

    def pairs(self):
        return zip(self.mixtures, self.mixtures[1:] + self.mixtures[:1])

    def test_self_distance_is_zero(self):
        for f in self.mixtures:
            copy = MixtureParams.build(f.weights.copy(), f.locations.copy())
            self.assertEqual(hellinger(f, copy, self.grid), 0.0)

    def test_symmetry(self):
        for f, g in self.pairs():
            self.assertAlmostEqual(hellinger(f, g, self.grid), hellinger(g, f, self.grid), places=12)

    def test_triangle_inequality(self):
        for i, (f, g) in enumerate(self.pairs()):
            k = self.mixtures[(i + 37) % len(self.mixtures)]
            lhs = hellinger(f, g, self.grid)
            self.assertLessEqual(lhs, hellinger(f, k, self.grid) + hellinger(k, g, self.grid) + 1e-9)

    def test_l1_at_most_twice_hellinger(self):
        for f, g in self.pairs():
            self.assertLessEqual(total_variation(f, g, self.grid), 2.0 * hellinger(f, g, self.grid) + 1e-6)

    def test_kl_dominates_squared_hellinger(self):
        for f, g in self.pairs():
            h = hellinger(f, g, self.grid)
            self.assertGreaterEqual(kl(f, g, self.grid), h * h - 1e-9)


class ChiSquareAndKlTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.grid = build_grid(point(0.0), self.family)

    def test_chi_square_self(self):
        self.assertEqual(chi_square(point(0.0), point(0.0), self.grid), 0.0)

    def test_chi_square_closed_form(self):
        self.assertAlmostEqual(chi_square(point(0.5), point(0.0), self.grid), math.exp(0.25) - 1, delta=1e-7)
        self.assertAlmostEqual(chi_square(point(1.0), point(0.0), self.grid), math.e - 1, delta=1e-7)

    def test_kl_closed_form(self):
        self.assertAlmostEqual(kl(point(0.0), point(1.0), self.grid), 0.5, delta=1e-8)


class WeightedDensityTests(SimpleTestCase):
    def setUp(self):
        self.family = LocationFamily.standard(1)
        self.fstar = MixtureParams.build([0.5, 0.5], [-1.0, 1.0])
        self.grid = build_grid(self.fstar, self.family)

    def test_unit_norm_and_mean(self):
        f = MixtureParams.build([0.4, 0.6], [-1.2, 0.9])
        wd = weighted_density(f, self.fstar, self.grid)
        self.assertAlmostEqual(wd.norm(), 1.0, places=6)
        self.assertAlmostEqual(wd.mean(), -wd.h / 2, places=6)

    def test_fstar_itself_is_degenerate(self):
        with self.assertRaises(DegenerateWeighting):
            weighted_density(self.fstar, self.fstar, self.grid)

    def test_chi_square_direction_gap_shrinks(self):
        gaps = []
        for shift in (0.4, 0.2, 0.1, 0.05):
            f = MixtureParams.build([0.5, 0.5], [-1.0, 1.0 + shift])
            gaps.append(chi_square_direction_gap(f, self.fstar, self.grid))
        self.assertEqual(gaps, sorted(gaps, reverse=True))

    def test_likelihood_inequality_on_sample(self):
        data = sample(self.fstar, self.family, 400, 3)
        f = MixtureParams.build([0.5, 0.5], [-1.0, 1.3])
        bound = likelihood_ratio_bound(f, self.fstar, data, self.grid)
        self.assertGreaterEqual(bound.slack, -1e-6)


class EmpiricalProcessTests(SimpleTestCase):
    def test_single_observation(self):
        data = Dataset(points=np.array([2.0]))
        self.assertAlmostEqual(empirical_process(lambda x: x[:, 0], data, 0.5), 1.5)

    def test_constant_function_is_centered(self):
        data = Dataset(points=np.linspace(-1, 1, 10))
        self.assertEqual(empirical_process(lambda x: np.full(x.shape[0], 3.0), data, 3.0), 0.0)
        self.assertEqual(strassen_normalized(lambda x: np.full(x.shape[0], 3.0), data, 3.0), 0.0)

    def test_strassen_needs_three_points(self):
        data = Dataset(points=np.array([0.0, 1.0]))
        with self.assertRaises(InvalidArgument):
            strassen_normalized(lambda x: x[:, 0], data, 0.0)
