"""Versioned profile archives and plot-ready output files.

A profile archive is an .npz file holding the data columns and a `header`
entry with a JSON document. Every file is written to a temporary sibling
and moved into place with os.replace, so readers never see partial output.
"""
import json
import logging
import os
import tempfile
import zipfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings

from .corrector_solver import CorrectorProfile
from .exceptions import ProfileFormatError, UnsupportedVersionError
from .frac_operator import GridFunction, TailModel
from .layer_solver import LayerProfile
from .potential import PotentialSpec

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

REQUIRED_HEADER = {
    'layer': ('s', 'gamma', 'eta', 'beta', 'residual_norm', 'x_min', 'dx', 'u_tail', 'du_tail', 'potential'),
    'corrector': ('s', 'solvability_defect', 'orthogonality_defect', 'residual_norm', 'multiplier',
                  'system_residual', 'compatibility', 'lipschitz_bound', 'edge_ratio', 'gauge', 'x_min', 'dx'),
}
COLUMNS = {
    'layer': ('x', 'u', 'du'),
    'corrector': ('x', 'psi'),
}


def tool_signature():
    return f"{getattr(settings, 'TOOL_NAME', 'dislocations')} {getattr(settings, 'TOOL_VERSION', '0.0.0')}"


def _atomic_write(path, write):
    """Run write(fileobj) on a temporary file next to `path`, then rename it over `path`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'wb') as fh:
            write(fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text):
    return _atomic_write(path, lambda fh: fh.write(text.encode('utf-8')))


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(data):
    """Sorted keys; floats keep their shortest round-trip repr"""
    return json.dumps(data, sort_keys=True, indent=2, default=_json_default) + '\n'


def write_json(data, path):
    path = atomic_write_text(path, dumps(data))
    logger.info(f"Wrote {path}")
    return path


def write_csv(frame, path, config_hash=None):
    """CSV with a '# tool=... config_hash=...' comment line, a header row and %.17g floats"""
    comment = f"# tool={tool_signature()} config_hash={config_hash or 'none'}\n"
    body = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
    path = atomic_write_text(path, comment + body)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_csv(path):
    return pd.read_csv(path, comment='#')


def _write_npz(fh, arrays):
    """np.savez layout with fixed member timestamps so reruns are byte-identical"""
    with zipfile.ZipFile(fh, mode='w', compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f'{name}.npy', date_time=(1980, 1, 1, 0, 0, 0))
            with archive.open(info, 'w', force_zip64=True) as member:
                np.lib.format.write_array(member, np.asanyarray(arrays[name]), allow_pickle=False)


def profile_frame(profile):
    if isinstance(profile, LayerProfile):
        return pd.DataFrame({'x': profile.u.x, 'u': profile.u.values, 'du': profile.du.values})
    return pd.DataFrame({'x': profile.psi.x, 'psi': profile.psi.values})


def save_profile(profile, path, config_hash=None):
    if isinstance(profile, LayerProfile):
        header = profile.header()
        grid = profile.u
        columns = {'x': grid.x, 'u': profile.u.values, 'du': profile.du.values}
    elif isinstance(profile, CorrectorProfile):
        header = profile.header()
        grid = profile.psi
        columns = {'x': grid.x, 'psi': profile.psi.values}
    else:
        raise TypeError(f"cannot archive {type(profile).__name__}")
    header.update({
        'format_version': FORMAT_VERSION,
        'tool': tool_signature(),
        'config_hash': config_hash,
        'x_min': grid.x_min,
        'dx': grid.dx,
        'n': grid.n,
    })
    arrays = {name: np.ascontiguousarray(values, dtype=np.float64) for name, values in columns.items()}
    arrays['header'] = np.array(json.dumps(header, sort_keys=True))
    path = _atomic_write(path, lambda fh: _write_npz(fh, arrays))
    logger.info(f"Saved {header['kind']} profile to {path}")
    return path


def _read_archive(path):
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data['header']))
            arrays = {name: np.array(data[name]) for name in data.files if name != 'header'}
    except FileNotFoundError as e:
        raise ProfileFormatError(f"profile {path} not found") from e
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, json.JSONDecodeError) as e:
        raise ProfileFormatError(f"profile {path} is unreadable: {e}") from e
    if not isinstance(header, dict):
        raise ProfileFormatError(f"profile {path} has a malformed header")
    return header, arrays


def load_profile(path):
    """LayerProfile or CorrectorProfile; never returns a partially read profile"""
    header, arrays = _read_archive(path)
    version = header.get('format_version')
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(version, FORMAT_VERSION)
    kind = header.get('kind')
    if kind not in REQUIRED_HEADER:
        raise ProfileFormatError(f"profile {path} has unknown kind {kind!r}")
    missing = [key for key in REQUIRED_HEADER[kind] if key not in header]
    missing += [name for name in COLUMNS[kind] if name not in arrays]
    if missing:
        raise ProfileFormatError(f"profile {path} lacks {', '.join(missing)}")
    n = header.get('n')
    if any(arrays[name].shape != (n,) for name in COLUMNS[kind]):
        raise ProfileFormatError(f"profile {path} columns do not match n={n}")

    x_min, dx = header['x_min'], header['dx']
    try:
        if kind == 'layer':
            potential = header['potential']
            return LayerProfile(
                u=GridFunction(x_min, dx, arrays['u'], TailModel.from_dict(header['u_tail'])),
                du=GridFunction(x_min, dx, arrays['du'], TailModel.from_dict(header['du_tail'])),
                s=header['s'],
                gamma=header['gamma'],
                eta=header['eta'],
                beta=header['beta'],
                residual_norm=header['residual_norm'],
                potential=PotentialSpec(potential['kind'], tuple(potential['coefficients'])),
                iterations=header.get('iterations', 0),
                fitted_coefficient=header.get('fitted_coefficient', float('nan')),
            )
        return CorrectorProfile(
            psi=GridFunction(x_min, dx, arrays['psi'], TailModel.zero()),
            s=header['s'],
            solvability_defect=header['solvability_defect'],
            orthogonality_defect=header['orthogonality_defect'],
            residual_norm=header['residual_norm'],
            multiplier=header['multiplier'],
            system_residual=header['system_residual'],
            compatibility=header['compatibility'],
            lipschitz_bound=header['lipschitz_bound'],
            edge_ratio=header['edge_ratio'],
            gauge=header['gauge'],
        )
    except (TypeError, KeyError) as e:
        raise ProfileFormatError(f"profile {path} has a malformed header: {e}") from e


def load_layer(path):
    profile = load_profile(path)
    if not isinstance(profile, LayerProfile):
        raise ProfileFormatError(f"{path} holds a {type(profile).__name__}, a layer profile is required")
    return profile


def load_corrector(path):
    profile = load_profile(path)
    if not isinstance(profile, CorrectorProfile):
        raise ProfileFormatError(f"{path} holds a {type(profile).__name__}, a corrector profile is required")
    return profile
