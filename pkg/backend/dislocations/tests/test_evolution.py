from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from scipy import optimize
from scipy.integrate import solve_ivp

from dislocations.services import evolution
from dislocations.services.exceptions import ConfigError, InstabilityError
from dislocations.services.frac_operator import GridSpec, get_operator
from dislocations.services.harness import half_level_crossings
from dislocations.services.potential import PotentialSpec
from dislocations.services.stress import StressField

from .helpers import small_layer


class EvolutionConfigTests(SimpleTestCase):

    def test_validation(self):
        with self.assertRaises(ConfigError):
            evolution.EvolutionConfig(epsilon=0.0)
        with self.assertRaises(ConfigError):
            evolution.EvolutionConfig(scheme='crank-nicolson')
        with self.assertRaises(ConfigError):
            evolution.EvolutionConfig(dt_safety=1.5)
        with self.assertRaises(ConfigError):
            evolution.EvolutionConfig(tail='zero')


class ReactionFlowTests(SimpleTestCase):

    def test_single_harmonic_flow_is_exact(self):
        potential = PotentialSpec()
        values = np.array([-0.3, 0.1, 0.45, 0.55, 1.2, 1.9])
        rate, dt = 3.0, 0.4
        reference = solve_ivp(lambda t, v: -rate * potential.dW(v), (0.0, dt), values, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(evolution.integrate_reaction(values, potential, rate, dt),
                                   reference.y[:, -1], atol=1e-9)

    def test_multi_harmonic_substeps(self):
        potential = PotentialSpec('user-polynomial-of-cosines', (0.02, 0.004))
        values = np.array([0.2, 0.7, 1.4])
        rate, dt = 2.0, 0.5
        reference = solve_ivp(lambda t, v: -rate * potential.dW(v), (0.0, dt), values, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(evolution.integrate_reaction(values, potential, rate, dt),
                                   reference.y[:, -1], atol=1e-6)

    def test_wells_are_fixed_points(self):
        wells = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(evolution.integrate_reaction(wells, PotentialSpec(), 50.0, 1.0), wells,
                                   atol=1e-14)


class EvolutionTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.layer = small_layer()

    def config(self, **overrides):
        options = {'epsilon': 0.2, 'margin': 10.0}
        options.update(overrides)
        return evolution.EvolutionConfig(**options)

    def test_initial_condition_places_the_layers(self):
        positions = [-3.0, 3.5]
        state = evolution.initial_condition(self.layer, StressField.zero(), positions,
                                            config=self.config(margin=30.0))
        self.assertEqual(state.n_layers, 2)
        self.assertEqual(state.time, 0.0)
        self.assertAlmostEqual(state.field.dx, 0.2 * self.layer.u.dx, places=12)
        crossings = half_level_crossings(state.x, state.values, 2)
        self.assertLess(crossings[0], crossings[1])

        # heavy tails shift the level crossings of the superposition off the centres
        def superposition(x, level):
            return sum(self.layer.evaluate(np.array([(x - xi) / 0.2]))[0] for xi in positions) - level

        expected = [
            optimize.brentq(superposition, state.x[0], positions[0], args=(0.5,), xtol=1e-12),
            optimize.brentq(superposition, positions[1], state.x[-1], args=(1.5,), xtol=1e-12),
        ]
        np.testing.assert_allclose(crossings, expected, atol=1e-3)
        self.assertLess(crossings[0], positions[0])
        self.assertGreater(crossings[1], positions[1])
        self.assertEqual(state.field.tail.left_limit, 0.0)
        self.assertEqual(state.field.tail.right_limit, 2.0)
        self.assertLess(state.field.stitch_defect(), 1e-9)

    def test_single_layer_keeps_the_scaled_layer_tail(self):
        state = evolution.initial_condition(self.layer, StressField.zero(), [0.7], config=self.config())
        self.assertAlmostEqual(half_level_crossings(state.x, state.values, 1)[0], 0.7, delta=1e-3)
        tail, layer_tail = state.field.tail, self.layer.u.tail
        p, q = layer_tail.decay_exponent, layer_tail.correction_exponent
        self.assertAlmostEqual(tail.decay_coefficient, 0.2 ** p * layer_tail.decay_coefficient, places=12)
        self.assertAlmostEqual(tail.correction_coefficient, 0.2 ** q * layer_tail.correction_coefficient, places=12)
        self.assertAlmostEqual(tail.left_correction, 0.2 ** q * layer_tail.left_correction, places=12)
        self.assertEqual(tail.correction_exponent, q)
        self.assertLess(state.field.stitch_defect(), 1e-9)

    def test_under_resolved_grid(self):
        with self.assertRaises(ConfigError) as ctx:
            evolution.initial_condition(self.layer, StressField.zero(), [0.0], config=self.config(dx=0.05))
        self.assertEqual(ctx.exception.key_path, 'evolution.dx')

    def test_window_must_hold_the_positions(self):
        grid = GridSpec.from_window((-2.0, 2.0), 0.02)
        with self.assertRaises(ConfigError):
            evolution.initial_condition(self.layer, StressField.zero(), [0.0, 3.0], grid=grid, config=self.config())

    def test_imex_allows_larger_steps(self):
        explicit = evolution.initial_condition(self.layer, 'zero', [0.0], config=self.config(scheme='explicit'))
        imex = evolution.initial_condition(self.layer, 'zero', [0.0], config=self.config())
        self.assertGreaterEqual(imex.dt, explicit.dt)
        operator = get_operator(self.layer.s)
        bound = operator.spectral_radius_bound(imex.field) / 0.2
        self.assertAlmostEqual(imex.dt, 0.9 * 1.9 / bound, places=12)

    def test_single_layer_is_stationary(self):
        state = evolution.initial_condition(self.layer, StressField.zero(), [0.0], config=self.config())
        samples = evolution.run(state, t_end=0.2, sample_times=[0.0, 0.1, 0.2])
        self.assertEqual([round(sample.time, 12) for sample in samples], [0.0, 0.1, 0.2])
        for sample in samples:
            crossing = half_level_crossings(sample.x, sample.values, 1)[0]
            self.assertLess(abs(crossing), 0.02)
        self.assertGreater(samples[-1].steps, 0)

    def test_pair_separates(self):
        state = evolution.initial_condition(self.layer, StressField.zero(), [-1.0, 1.0], config=self.config())
        samples = evolution.run(state, t_end=0.3, sample_times=[0.0, 0.3])
        start, end = (half_level_crossings(s.x, s.values, 2) for s in samples)
        self.assertLess(end[0], start[0])
        self.assertGreater(end[1], start[1])

    def test_time_derivative_matches_a_step(self):
        state = evolution.initial_condition(self.layer, StressField.zero(), [0.0], config=self.config(scheme='explicit'))
        dt = 1e-3 * state.dt
        after = evolution.step(state, dt=dt)
        np.testing.assert_allclose((after.values - state.values) / dt, evolution.time_derivative(state),
                                   rtol=1e-7, atol=1e-7)

    def test_oversized_step_leaves_the_sanity_band(self):
        state = evolution.initial_condition(self.layer, StressField.zero(), [-1.0, 1.0], config=self.config(scheme='explicit'))
        with self.assertRaises(InstabilityError):
            evolution.step(state, dt=1000.0 * state.dt)

    def test_snapshots_are_immutable(self):
        state = evolution.initial_condition(self.layer, StressField.zero(), [0.0], config=self.config())
        after = evolution.step(state)
        self.assertIsNot(after.field, state.field)
        self.assertFalse(state.values.flags.writeable)
        self.assertEqual(after.steps, state.steps + 1)

    def test_stability_calibration(self):
        c = evolution.calibrate_stability(self.layer, epsilon=0.2, trial_steps=20, tol=0.2)
        self.assertGreater(c, 0.5)
        self.assertLessEqual(c, 4.0)
        state = evolution.initial_condition(self.layer, StressField.zero(), [0.0],
                                            config=replace(self.config(margin=5.0), scheme='explicit'))
        self.assertFalse(evolution._grows(state, c, 20, 1e-2))
