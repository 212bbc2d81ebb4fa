import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from dislocations.services.config_schema import apply_overrides, parse_config, validate_config
from dislocations.services.exceptions import ConfigError

from .helpers import small_config, write_config


class DefaultsTests(SimpleTestCase):

    def test_empty_document_takes_the_defaults(self):
        config = validate_config({})
        self.assertEqual(config.operator['s'], 0.25)
        self.assertEqual(config.potential['kind'], 'builtin-cosine')
        self.assertEqual(config.layer['window'], [-200.0, 200.0])
        self.assertEqual(config.particles['positions'], [-1.0, 1.0])
        self.assertEqual(config.harness['epsilons'], [0.2, 0.1, 0.05])
        self.assertIsNone(config.evolution['dx'])
        self.assertEqual(config, parse_config())

    def test_null_sections_are_defaulted(self):
        self.assertEqual(validate_config({'layer': None}).layer['dx'], 0.05)

    def test_to_dict_has_every_section(self):
        self.assertEqual(sorted(validate_config({}).to_dict()),
                         ['corrector', 'evolution', 'harness', 'layer', 'operator', 'particles', 'potential'])


class ValidationTests(SimpleTestCase):

    def assertRejected(self, data, key_path):
        with self.assertRaises(ConfigError) as ctx:
            validate_config(data)
        self.assertEqual(ctx.exception.key_path, key_path)
        self.assertEqual(ctx.exception.exit_code, 2)
        return ctx.exception

    def test_order_out_of_range(self):
        self.assertRejected({'operator': {'s': 0.7}}, 'operator.s')
        self.assertRejected({'operator': {'s': 0.0}}, 'operator.s')

    def test_unknown_section_suggests_the_closest(self):
        error = self.assertRejected({'potentail': {}}, 'potentail')
        self.assertIn("did you mean 'potential'", str(error))

    def test_unknown_nested_key(self):
        error = self.assertRejected({'layer': {'tols': 1e-8}}, 'layer.tols')
        self.assertIn("'tol'", str(error))

    def test_windows(self):
        self.assertRejected({'layer': {'window': [10.0, -10.0]}}, 'layer.window')
        self.assertRejected({'layer': {'window': [1.0, 10.0]}}, 'layer.window')
        self.assertRejected({'corrector': {'window': [0.0]}}, 'corrector.window')
        self.assertRejected({'corrector': {'window': []}}, 'corrector.window')
        self.assertRejected({'layer': {'window': [-10.0, 0.0, 10.0]}}, 'layer.window')
        self.assertRejected({'layer': {'window': '-10,10'}}, 'layer.window')

    def test_positions_strictly_increasing(self):
        self.assertRejected({'particles': {'positions': [1.0, 1.0]}}, 'particles.positions')

    def test_stress_spec_checked(self):
        self.assertRejected({'particles': {'sigma': 'sine:1'}}, 'particles.sigma')

    def test_non_finite_and_non_positive(self):
        self.assertRejected({'layer': {'dx': 0.0}}, 'layer.dx')
        self.assertRejected({'layer': {'tol': float('nan')}}, 'layer.tol')
        self.assertRejected({'harness': {'epsilons': []}}, 'harness.epsilons')

    def test_choices(self):
        self.assertRejected({'evolution': {'scheme': 'leapfrog'}}, 'evolution.scheme')
        self.assertRejected({'harness': {'mode': 'spectral'}}, 'harness.mode')

    def test_document_must_be_an_object(self):
        with self.assertRaises(ConfigError):
            validate_config([1, 2])
        with self.assertRaises(ConfigError):
            validate_config('layer', overrides={'layer.tol': 1e-8})


class OverrideTests(SimpleTestCase):

    def test_dotted_keys(self):
        data = apply_overrides({'layer': {'tol': 1e-6}}, {'layer.tol': 1e-8, 'operator.s': 0.3, 'layer.dx': None})
        self.assertEqual(data, {'layer': {'tol': 1e-8}, 'operator': {'s': 0.3}})

    def test_source_mapping_untouched(self):
        source = {'layer': {'tol': 1e-6}}
        apply_overrides(source, {'layer.tol': 1e-8})
        self.assertEqual(source['layer']['tol'], 1e-6)

    def test_non_object_documents_and_sections(self):
        with self.assertRaises(ConfigError):
            apply_overrides([1, 2], {'layer.tol': 1e-8})
        with self.assertRaises(ConfigError) as ctx:
            apply_overrides({'layer': 5}, {'layer.tol': 1e-8})
        self.assertEqual(ctx.exception.key_path, 'layer')

    def test_overrides_are_validated(self):
        with self.assertRaises(ConfigError) as ctx:
            validate_config({}, {'operator.s': 0.7})
        self.assertEqual(ctx.exception.key_path, 'operator.s')


class HashTests(SimpleTestCase):

    def test_stable_across_key_order(self):
        forward = validate_config(small_config())
        reverse = validate_config(dict(reversed(list(small_config().items()))))
        self.assertEqual(forward.hash, reverse.hash)
        self.assertEqual(len(forward.hash), 16)
        int(forward.hash, 16)

    def test_defaults_hash_like_explicit_values(self):
        self.assertEqual(validate_config({}).hash, validate_config({'operator': {'s': 0.25}}).hash)

    def test_changes_with_content(self):
        self.assertNotEqual(validate_config({}).hash, validate_config({}, {'layer.tol': 1e-8}).hash)


class ParseConfigTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_reads_a_file(self):
        config = parse_config(write_config(self.tmp.name), {'operator.s': 0.3})
        self.assertEqual(config.layer['window'], [-30.0, 30.0])
        self.assertEqual(config.operator['s'], 0.3)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            parse_config(Path(self.tmp.name) / 'absent.json')

    def test_invalid_json(self):
        path = Path(self.tmp.name) / 'bad.json'
        path.write_text('{"layer": ', encoding='utf-8')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(path)
        self.assertIn('not valid JSON', str(ctx.exception))

    def test_top_level_array(self):
        path = Path(self.tmp.name) / 'list.json'
        path.write_text(json.dumps([1, 2]), encoding='utf-8')
        with self.assertRaises(ConfigError):
            parse_config(path)
