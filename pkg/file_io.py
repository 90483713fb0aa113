# file_io.py
"""
Readers and writers for the toolkit's JSON and CSV files.

All writes go to a temporary file in the target directory and are moved
into place with os.replace, so the final path never holds a partial file.
Floats are written with 17 significant digits.
"""

import io
import json
import logging
import os
import tempfile

import numpy as np
import pandas as pd

from fem_core import MeshError, load_problem
from material_data import LocalDataSet
from material_models import EnergyModel
from tensor_core import flatten, unflatten

logger = logging.getLogger('DD-IO')

FLOAT_FORMAT = '%.17g'


class ParseError(ValueError):
    """Malformed input file; the message names the file and line"""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}" if line else f"{path}: {message}")
        self.path = path
        self.line = line


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w') as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug(f"Wrote {path}")


def dumps_json(data):
    """Canonical JSON text: sorted keys, repr floats"""
    return json.dumps(data, sort_keys=True, indent=2) + '\n'


def write_json(path, data):
    atomic_write_text(path, dumps_json(data))


def read_json(path):
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.msg)


def load_model(path):
    spec = read_json(path)
    try:
        return EnergyModel.from_dict(spec)
    except (ValueError, TypeError, KeyError) as e:
        raise ParseError(path, None, f"invalid model: {e}")


def load_mesh_problem(mesh_path, bc_path=None):
    """Mesh JSON, or a saved problem {"mesh": ..., "bc": ...} whose bc a bc file overrides"""
    mesh = read_json(mesh_path)
    bc = {}
    if isinstance(mesh, dict) and 'mesh' in mesh:
        bc = mesh.get('bc') or {}
        mesh = mesh['mesh']
    if bc_path:
        bc = read_json(bc_path)
    try:
        return load_problem(mesh, bc, name=os.path.basename(mesh_path))
    except MeshError as e:
        raise ParseError(mesh_path, None, str(e))


# -- data sets ----------------------------------------------------------------

def _matrix_columns(prefix, n):
    return [f"{prefix}{i + 1}{j + 1}" for i in range(n) for j in range(n)]


def save_dataset(path, D):
    """
    Cloud CSV: line 1 'n,kind', line 2 the values, line 3 the column
    header F11..Fnn,P11..Pnn, then one row per point. Metadata goes to
    the sidecar <path>.meta.json.
    """
    if D.kind != 'cloud':
        raise ValueError("only point clouds can be written as CSV")
    columns = _matrix_columns('F', D.n) + _matrix_columns('P', D.n)
    frame = pd.DataFrame(np.hstack([flatten(D.F), flatten(D.P)]), columns=columns)
    buffer = io.StringIO()
    buffer.write(f"n,kind\n{D.n},{D.kind}\n")
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT)
    atomic_write_text(path, buffer.getvalue())
    write_json(f"{path}.meta.json", D.metadata)
    logger.info(f"Saved {len(D)} phase points to {path}")


def load_dataset(path):
    try:
        with open(path, 'r') as f:
            head = [f.readline().strip(), f.readline().strip()]
    except UnicodeDecodeError as e:
        raise ParseError(path, 1, f"not a text file: {e}")
    if head[0].replace(' ', '') != 'n,kind':
        raise ParseError(path, 1, "expected header 'n,kind'")
    try:
        n_text, kind = head[1].split(',')
        n = int(n_text)
    except ValueError:
        raise ParseError(path, 2, f"expected '<n>,<kind>', got '{head[1]}'")
    if n not in (2, 3) or kind != 'cloud':
        raise ParseError(path, 2, f"unsupported data set n={n}, kind={kind}")

    columns = _matrix_columns('F', n) + _matrix_columns('P', n)
    try:
        frame = pd.read_csv(path, skiprows=2, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(path, 3, str(e))
    if list(frame.columns) != columns:
        raise ParseError(path, 3, f"expected columns {','.join(columns)}")
    values = frame.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    bad = ~np.all(np.isfinite(values), axis=1)
    if np.any(bad):
        raise ParseError(path, int(np.argmax(bad)) + 4, "non-numeric or non-finite entry")

    meta_path = f"{path}.meta.json"
    metadata = read_json(meta_path) if os.path.exists(meta_path) else {'source': path}
    F = unflatten(values[:, :n * n], n)
    P = unflatten(values[:, n * n:], n)
    logger.info(f"Loaded {len(F)} phase points from {path}")
    return LocalDataSet(n, 'cloud', F=F, P=P, metadata=metadata)


# -- tables and fields --------------------------------------------------------

def write_table(path, frame):
    atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT))


def read_table(path):
    try:
        return pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(path, None, str(e))


def nodes_path(path):
    root, ext = os.path.splitext(path)
    return f"{root}.nodes{ext or '.csv'}"


def element_frame(mp, F, P, F_data=None, P_data=None):
    centroids = mp.centroids
    table = {'element': np.arange(mp.num_elements), 'cx': centroids[:, 0], 'cy': centroids[:, 1]}
    blocks = [('F', F), ('P', P), ('Fd', F_data), ('Pd', P_data)]
    for prefix, values in blocks:
        if values is None:
            continue
        flat = flatten(values)
        for k, name in enumerate(_matrix_columns(prefix, 2)):
            table[name] = flat[:, k]
    return pd.DataFrame(table)


def write_fields(path, mp, u, F, P, F_data=None, P_data=None):
    """Per-element CSV at path (F, P and optional data branch), per-node u next to it"""
    write_table(path, element_frame(mp, F, P, F_data, P_data))
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    write_table(nodes_path(path), pd.DataFrame({
        'node': np.arange(mp.num_nodes), 'x': mp.nodes[:, 0], 'y': mp.nodes[:, 1],
        'u1': u[:, 0], 'u2': u[:, 1],
    }))
    logger.info(f"Wrote element fields to {path} and nodal displacements to {nodes_path(path)}")


def read_fields(path):
    """Inverse of write_fields: dict of arrays u, F, P (and Fd, Pd when present)"""
    elements = read_table(path)
    nodes = read_table(nodes_path(path))
    out = {'u': nodes[['u1', 'u2']].to_numpy(dtype=float)}
    for prefix in ('F', 'P', 'Fd', 'Pd'):
        cols = _matrix_columns(prefix, 2)
        if all(c in elements.columns for c in cols):
            out[prefix] = unflatten(elements[cols].to_numpy(dtype=float), 2)
    return out
