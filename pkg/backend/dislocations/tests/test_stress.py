import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from dislocations.services.exceptions import ConfigError
from dislocations.services.stress import StressField


class StressSpecTests(SimpleTestCase):

    def test_zero(self):
        sigma = StressField.parse('zero')
        self.assertTrue(sigma.is_zero)
        self.assertEqual(sigma.lipschitz_bound, 0.0)
        np.testing.assert_array_equal(sigma(1.0, np.linspace(-1, 1, 5)), 0.0)

    def test_constant(self):
        sigma = StressField.parse('constant:-0.25')
        np.testing.assert_array_equal(sigma(3.0, [0.0, 7.0]), [-0.25, -0.25])
        np.testing.assert_array_equal(sigma.dx(3.0, [0.0]), [0.0])
        self.assertEqual(sigma.lipschitz_bound, 0.25)

    def test_sine_derivatives(self):
        sigma = StressField.parse('sine:0.5,2.0,3.0')
        x = np.linspace(-2.0, 2.0, 9)
        h = 1e-6
        np.testing.assert_allclose(sigma.dx(0.3, x), (sigma(0.3, x + h) - sigma(0.3, x - h)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(sigma.dt(0.3, x), (sigma(0.3 + h, x) - sigma(0.3 - h, x)) / (2 * h), atol=1e-8)
        self.assertLessEqual(sigma.check_bound((0.0, 2.0), (-3.0, 3.0), samples=41), sigma.lipschitz_bound)

    def test_malformed_specs(self):
        for spec in ('constant:abc', 'sine:1,2', 'quadratic:1', 'zero:1'):
            with self.assertRaises(ConfigError) as ctx:
                StressField.parse(spec)
            self.assertEqual(ctx.exception.key_path, 'particles.sigma')

    def test_parse_passes_fields_through(self):
        sigma = StressField.sine(1.0, 1.0, 1.0)
        self.assertIs(StressField.parse(sigma), sigma)


class TabulatedStressTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / 'sigma.npz'

    def test_bilinear_data_reproduced(self):
        t = np.linspace(0.0, 1.0, 6)
        x = np.linspace(-5.0, 5.0, 11)
        np.savez(self.path, t=t, x=x, values=0.1 * t[:, None] + 0.02 * x[None, :])
        sigma = StressField.parse(f'table:{self.path}')
        self.assertEqual(sigma.kind, 'tabulated')
        points = np.array([-4.3, 0.0, 2.7])
        np.testing.assert_allclose(sigma(0.35, points), 0.035 + 0.02 * points, rtol=1e-12)
        np.testing.assert_allclose(sigma.dx(0.35, points), 0.02, rtol=1e-6)
        np.testing.assert_allclose(sigma.dt(0.35, points), 0.1, rtol=1e-6)
        self.assertAlmostEqual(sigma.lipschitz_bound, 0.2, places=12)

    def test_shape_mismatch(self):
        np.savez(self.path, t=np.zeros(3), x=np.zeros(4), values=np.zeros((4, 3)))
        with self.assertRaises(ConfigError):
            StressField.parse(f'table:{self.path}')

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            StressField.parse(f'table:{self.path}')

    def test_held_constant_outside_the_table(self):
        t = np.linspace(0.0, 1.0, 6)
        x = np.linspace(-5.0, 5.0, 11)
        np.savez(self.path, t=t, x=x, values=0.1 * t[:, None] + 0.02 * x[None, :])
        sigma = StressField.parse(f'table:{self.path}')
        far = np.array([-50.0, -5.0, 5.0, 80.0])
        np.testing.assert_allclose(sigma(0.5, far), [0.05 - 0.1, 0.05 - 0.1, 0.05 + 0.1, 0.05 + 0.1], rtol=1e-12)
        np.testing.assert_allclose(sigma(3.0, far), sigma(1.0, far), rtol=1e-12)
        np.testing.assert_allclose(sigma(-1.0, np.array([0.0])), 0.0, atol=1e-14)
        self.assertEqual(sigma.dx(0.5, np.array([40.0]))[0], 0.0)
        self.assertLessEqual(np.max(np.abs(sigma(2.0, np.linspace(-100.0, 100.0, 41)))),
                             sigma.lipschitz_bound + 1e-12)

    def test_axes_must_increase(self):
        np.savez(self.path, t=np.array([0.0, 1.0, 1.0]), x=np.linspace(-1.0, 1.0, 4), values=np.zeros((3, 4)))
        with self.assertRaises(ConfigError):
            StressField.parse(f'table:{self.path}')
