import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from dislocations.services import profile_store
from dislocations.services.exceptions import ProfileFormatError, UnsupportedVersionError

from .helpers import small_corrector, small_layer


class ProfileArchiveTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.layer = small_layer()
        cls.corrector = small_corrector()

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def rewrite_header(self, source, target, **changes):
        with np.load(source) as data:
            arrays = {name: np.array(data[name]) for name in data.files}
        header = json.loads(str(arrays['header']))
        header.update(changes)
        arrays['header'] = np.array(json.dumps(header))
        np.savez(target, **arrays)

    def test_layer_round_trip_is_bit_exact(self):
        path = profile_store.save_profile(self.layer, self.dir / 'layer.npz', config_hash='abc')
        loaded = profile_store.load_layer(path)
        np.testing.assert_array_equal(loaded.u.values, self.layer.u.values)
        np.testing.assert_array_equal(loaded.du.values, self.layer.du.values)
        self.assertEqual(loaded.u.x_min, self.layer.u.x_min)
        self.assertEqual(loaded.u.dx, self.layer.u.dx)
        self.assertEqual(loaded.u.tail, self.layer.u.tail)
        for name in ('s', 'gamma', 'eta', 'beta', 'residual_norm'):
            self.assertEqual(getattr(loaded, name), getattr(self.layer, name))
        self.assertEqual(loaded.potential, self.layer.potential)

    def test_corrector_round_trip(self):
        path = profile_store.save_profile(self.corrector, self.dir / 'corrector.npz')
        loaded = profile_store.load_corrector(path)
        np.testing.assert_array_equal(loaded.psi.values, self.corrector.psi.values)
        self.assertEqual(loaded.gauge, self.corrector.gauge)
        self.assertEqual(loaded.multiplier, self.corrector.multiplier)
        self.assertEqual(loaded.system_residual, self.corrector.system_residual)
        self.assertEqual(loaded.compatibility, self.corrector.compatibility)

    def test_resave_is_byte_identical(self):
        first = profile_store.save_profile(self.layer, self.dir / 'a.npz', config_hash='abc')
        second = profile_store.save_profile(profile_store.load_layer(first), self.dir / 'b.npz', config_hash='abc')
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_no_temporary_files_left(self):
        profile_store.save_profile(self.layer, self.dir / 'layer.npz')
        self.assertEqual([p.name for p in self.dir.iterdir()], ['layer.npz'])

    def test_truncated_archive(self):
        path = profile_store.save_profile(self.layer, self.dir / 'layer.npz')
        truncated = self.dir / 'truncated.npz'
        truncated.write_bytes(path.read_bytes()[:200])
        with self.assertRaises(ProfileFormatError):
            profile_store.load_layer(truncated)

    def test_missing_archive(self):
        with self.assertRaises(ProfileFormatError):
            profile_store.load_profile(self.dir / 'absent.npz')

    def test_version_mismatch(self):
        path = profile_store.save_profile(self.layer, self.dir / 'layer.npz')
        future = self.dir / 'future.npz'
        self.rewrite_header(path, future, format_version=99)
        with self.assertRaises(UnsupportedVersionError) as ctx:
            profile_store.load_layer(future)
        self.assertEqual(ctx.exception.found, 99)

    def test_missing_header_key(self):
        path = profile_store.save_profile(self.layer, self.dir / 'layer.npz')
        broken = self.dir / 'broken.npz'
        self.rewrite_header(path, broken, n=3)
        with self.assertRaises(ProfileFormatError):
            profile_store.load_layer(broken)

    def test_kind_is_checked(self):
        path = profile_store.save_profile(self.corrector, self.dir / 'corrector.npz')
        with self.assertRaises(ProfileFormatError):
            profile_store.load_layer(path)
        with self.assertRaises(TypeError):
            profile_store.save_profile(object(), self.dir / 'other.npz')


class OutputFileTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def test_csv_comment_and_header(self):
        frame = pd.DataFrame({'t': [0.0, 0.1], 'x_1': [1.0 / 3.0, -2.5]})
        path = profile_store.write_csv(frame, self.dir / 'out.csv', config_hash='0123456789abcdef')
        lines = path.read_text(encoding='utf-8').splitlines()
        self.assertEqual(lines[0], '# tool=dislocations 0.1.0 config_hash=0123456789abcdef')
        self.assertEqual(lines[1], 't,x_1')
        self.assertEqual(float(lines[2].split(',')[1]), 1.0 / 3.0)
        pd.testing.assert_frame_equal(profile_store.read_csv(path), frame)

    def test_json_sorted_keys(self):
        path = profile_store.write_json({'b': np.float64(1.5), 'a': np.arange(2)}, self.dir / 'out.json')
        text = path.read_text(encoding='utf-8')
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {'a': [0, 1], 'b': 1.5})

    def test_profile_frame_columns(self):
        self.assertEqual(list(profile_store.profile_frame(small_layer()).columns), ['x', 'u', 'du'])
