import numpy as np
from django.test import SimpleTestCase

from dislocations.services.exceptions import ArgumentError, ConfigError
from dislocations.services.potential import PotentialSpec


class BuiltinPotentialTests(SimpleTestCase):

    def setUp(self):
        self.potential = PotentialSpec()

    def test_unit_curvature_at_the_wells(self):
        self.assertAlmostEqual(self.potential.beta, 1.0, places=12)
        self.assertAlmostEqual(self.potential.d2W(3.0), 1.0, places=12)

    def test_wells_at_the_integers(self):
        wells = np.array([-2.0, 0.0, 1.0, 5.0])
        np.testing.assert_allclose(self.potential.W(wells), 0.0, atol=1e-15)
        np.testing.assert_allclose(self.potential.dW(wells), 0.0, atol=1e-15)

    def test_periodic_and_symmetric(self):
        v = np.linspace(0.0, 1.0, 101)
        np.testing.assert_allclose(self.potential.W(v + 1.0), self.potential.W(v), atol=1e-15)
        np.testing.assert_allclose(self.potential.W(1.0 - v), self.potential.W(v), atol=1e-15)
        self.assertAlmostEqual(self.potential.d3W(0.0), 0.0, places=14)

    def test_derivatives_match_finite_differences(self):
        v = np.linspace(-0.7, 1.3, 41)
        h = 1e-5
        for order in (1, 2, 3):
            numeric = (self.potential.eval(v + h, order - 1) - self.potential.eval(v - h, order - 1)) / (2 * h)
            np.testing.assert_allclose(self.potential.eval(v, order), numeric, atol=1e-8)

    def test_scalar_in_scalar_out(self):
        self.assertIsInstance(self.potential.W(0.25), float)

    def test_bad_derivative_order(self):
        with self.assertRaises(ArgumentError):
            self.potential.eval(0.1, order=4)


class UserPotentialTests(SimpleTestCase):

    def test_curvature_sums_the_harmonics(self):
        potential = PotentialSpec('user-polynomial-of-cosines', (0.02, 0.005))
        expected = 0.02 * (2 * np.pi) ** 2 + 0.005 * (4 * np.pi) ** 2
        self.assertAlmostEqual(potential.beta, expected, places=12)
        self.assertFalse(potential.is_single_harmonic)

    def test_non_positive_curvature_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            PotentialSpec('user-polynomial-of-cosines', (0.01, -0.01))
        self.assertEqual(ctx.exception.key_path, 'potential.coefficients')

    def test_empty_coefficients_rejected(self):
        with self.assertRaises(ConfigError):
            PotentialSpec('user-polynomial-of-cosines', ())

    def test_unknown_kind(self):
        with self.assertRaises(ConfigError):
            PotentialSpec('quartic')

    def test_round_trip_through_config(self):
        potential = PotentialSpec('user-polynomial-of-cosines', (0.03, 0.001))
        self.assertEqual(PotentialSpec.from_config(potential.to_dict()), potential)
