import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from dislocations.services import profile_store

from .helpers import small_corrector, small_layer, write_config


class CommandTestCase(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        cls.config = write_config(cls.dir)
        cls.layer_path = profile_store.save_profile(small_layer(), cls.dir / 'small_layer.npz')
        cls.corrector_path = profile_store.save_profile(small_corrector(), cls.dir / 'small_corrector.npz')

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def call(self, name, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command(name, config=str(self.config), stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue()

    def out_dir(self, name):
        path = self.dir / name
        path.mkdir(exist_ok=True)
        return path


class LayerCommandTests(CommandTestCase):

    def test_writes_archive_csv_and_summary(self):
        out = self.out_dir('layer') / 'u.npz'
        self.call('layer', out=str(out), dump_weights=str(out.with_name('weights.csv')))
        profile = profile_store.load_layer(out)
        self.assertLessEqual(profile.residual_norm, 1e-6)
        frame = profile_store.read_csv(out.with_suffix('.csv'))
        self.assertEqual(list(frame.columns), ['x', 'u', 'du'])
        self.assertEqual(len(frame), profile.u.n)
        summary = json.loads(out.with_suffix('.json').read_text())
        self.assertEqual(summary['kind'], 'layer')
        self.assertEqual(summary['s'], 0.25)
        weights = profile_store.read_csv(out.with_name('weights.csv'))
        self.assertEqual(list(weights.columns), ['k', 'y', 'weight'])
        self.assertEqual(weights['k'].iloc[0], 0)

    def test_order_out_of_range_exits_with_config_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('layer', s=0.7, out=str(self.out_dir('bad') / 'u.npz'))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('operator.s', str(ctx.exception))

    def test_unknown_config_key(self):
        path = self.dir / 'typo.json'
        path.write_text(json.dumps({'layer': {'tols': 1e-8}}))
        with self.assertRaises(CommandError) as ctx:
            call_command('layer', config=str(path), stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("did you mean 'tol'", str(ctx.exception))

    def test_missing_layer_archive(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('corrector', layer=str(self.dir / 'absent.npz'), out=str(self.out_dir('c') / 'psi.npz'))
        self.assertEqual(ctx.exception.returncode, 2)


class CorrectorCommandTests(CommandTestCase):

    def test_writes_archive_and_weak_residuals(self):
        out = self.out_dir('corrector') / 'psi.npz'
        self.call('corrector', layer=str(self.layer_path), out=str(out))
        profile = profile_store.load_corrector(out)
        self.assertLessEqual(profile.system_residual, 1e-6)
        self.assertGreater(profile.solvability_defect, 0.0)
        summary = json.loads(out.with_suffix('.json').read_text())
        self.assertEqual(len(summary['weak_residuals']), 4)
        self.assertTrue(all(item['relative_residual'] < 1e-8 for item in summary['weak_residuals']))
        self.assertTrue(all(item['unprojected_residual'] >= item['relative_residual']
                            for item in summary['weak_residuals']))
        self.assertIn('kernel_check', summary)
        self.assertEqual(list(profile_store.read_csv(out.with_suffix('.csv')).columns), ['x', 'psi'])

    def test_layer_for_another_order(self):
        config = write_config(self.out_dir('s03'), operator={'s': 0.3})
        with self.assertRaises(CommandError) as ctx:
            call_command('corrector', config=str(config), layer=str(self.layer_path),
                         out=str(self.out_dir('c3') / 'psi.npz'), stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)


class ParticlesCommandTests(CommandTestCase):

    def test_two_body_columns(self):
        out = self.out_dir('particles') / 'traj.csv'
        stdout = self.call('particles', layer=str(self.layer_path), out=str(out))
        self.assertIn('Two-body gap relative error', stdout)
        frame = profile_store.read_csv(out)
        self.assertEqual(list(frame.columns), ['t', 'x_1', 'x_2', 'gap', 'gap_exact'])
        self.assertEqual(len(frame), 3)
        relative = (frame['gap'] / frame['gap_exact'] - 1.0).abs().max()
        self.assertLess(relative, 1e-6)

    def test_output_is_deterministic(self):
        first = self.out_dir('det') / 'a.csv'
        second = self.out_dir('det') / 'b.csv'
        options = {'gamma': 1.0, 'positions': [-2.0, 0.0, 1.5], 'sigma': 'sine:0.3,1.0,2.0'}
        self.call('particles', out=str(first), **options)
        self.call('particles', out=str(second), **options)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertTrue(first.read_text().startswith('# tool=dislocations 0.1.0 config_hash='))

    def test_gamma_required_without_a_layer(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('particles', out=str(self.out_dir('p') / 'p.csv'))
        self.assertEqual(ctx.exception.returncode, 2)


class EvolveCommandTests(CommandTestCase):

    def test_samples_and_crossings(self):
        out = self.out_dir('evolve')
        self.call('evolve', layer=str(self.layer_path), epsilon=0.2, out=str(out))
        snapshots = sorted(path.name for path in out.glob('v_eps=0.2_*.csv'))
        self.assertEqual(snapshots, ['v_eps=0.2_000.csv', 'v_eps=0.2_001.csv', 'v_eps=0.2_002.csv'])
        crossings = profile_store.read_csv(out / 'crossings_eps=0.2.csv')
        self.assertEqual(list(crossings.columns), ['t', 'xi_1', 'xi_2'])
        np.testing.assert_allclose(crossings['t'], [0.0, 0.25, 0.5], atol=1e-12)
        self.assertTrue((crossings['xi_1'] < crossings['xi_2']).all())


class SweepCommandTests(CommandTestCase):

    def test_compare_report(self):
        out = self.out_dir('compare')
        self.call('compare', layer=str(self.layer_path), no_acceptance=True, out=str(out))
        report = json.loads((out / 'convergence.json').read_text())
        self.assertEqual(report['epsilons'], [0.2, 0.1])
        self.assertEqual(len(report['crossing_errors']), 2)
        self.assertEqual(len(report['crossing_errors'][0]), 3)
        frame = profile_store.read_csv(out / 'crossing_errors.csv')
        self.assertEqual(frame['epsilon'].tolist(), [0.2, 0.1])
        self.assertTrue((out / 'l1_errors.csv').exists())
        self.assertTrue((out / 'evolution_eps=0.1.csv').exists())

    def test_compare_acceptance_failure(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('compare', layer=str(self.layer_path), epsilons=[0.2], max_final_error=1e-12,
                      out=str(self.out_dir('compare_fail')))
        self.assertEqual(ctx.exception.returncode, 4)

    def test_supersolution_report(self):
        out = self.out_dir('supersol')
        stdout = self.call('supersol', layer=str(self.layer_path), corrector=str(self.corrector_path),
                           no_acceptance=True, out=str(out))
        self.assertIn('eps* =', stdout)
        summary = json.loads((out / 'supersolution.json').read_text())
        self.assertEqual(summary['delta'], 0.1)
        self.assertEqual([report['epsilon'] for report in summary['reports']], [0.2, 0.1])
        self.assertEqual([report['delta'] for report in summary['doubled_delta']], [0.2, 0.2])
        frame = profile_store.read_csv(out / 'supersolution_min_I.csv')
        self.assertEqual(list(frame.columns), ['epsilon', 'min_I', 'min_I_doubled_delta'])
        self.assertTrue((out / 'supersol_eps=0.2_delta=0.1.csv').exists())

    def test_supersolution_needs_a_positive_delta(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('supersol', layer=str(self.layer_path), corrector=str(self.corrector_path), delta=0.0,
                      no_acceptance=True, out=str(self.out_dir('supersol_zero')))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_full_sweep_with_archived_profiles(self):
        out = self.out_dir('sweep')
        self.call('sweep', layer=str(self.layer_path), corrector=str(self.corrector_path), epsilons=[0.2],
                  supersol_epsilons=[0.2], no_acceptance=True, jobs=2, out=str(out))
        summary = json.loads((out / 'sweep.json').read_text())
        self.assertEqual(sorted(summary), ['config_hash', 'convergence', 'supersolution'])
        self.assertEqual(summary['convergence']['epsilons'], [0.2])
        self.assertEqual(len(summary['supersolution']['reports']), 1)
        self.assertFalse((out / 'layer.npz').exists())
