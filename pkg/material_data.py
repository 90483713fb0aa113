# material_data.py
"""
Material data sets in phase space and the deviation functions that measure
distance to them.

A LocalDataSet is either the graph {(F, T(F))} of a stress function or a
finite cloud of phase points (F, P). Clouds answer nearest-point queries
exactly through a k-d tree over an embedding in which the quadratic
deviation is Euclidean.
"""

import logging
import threading
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.spatial import cKDTree
from scipy.stats import qmc

from material_models import EnergyModel, as_stress_law
from settings import SOLVER_DEFAULTS, CERTIFICATE_DEFAULTS, TOLERANCES
from tensor_core import (
    DimensionError, det, dim_of, dot, flatten, frobenius_norm, moment_residual,
    random_rotation, rotation_2d,
)

logger = logging.getLogger('DD-MaterialData')


class EmptyDataSetError(ValueError):
    """Raised when a query hits a data set without points"""


@dataclass(frozen=True)
class DeviationPair:
    """
    Convex deviation V and its conjugate V*.

    form 'quadratic': V = (C/2)|xi|^2, V* = |eta|^2/(2C)
    form 'power':     V = |xi|^p/p,   V* = |eta|^q/q,  q = p/(p-1)
    """
    form: str = 'quadratic'
    C: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.form == 'quadratic':
            if not self.C > 0:
                raise ValueError(f"deviation modulus C must be positive, got {self.C}")
            object.__setattr__(self, 'p', 2.0)
        elif self.form == 'power':
            if not self.p > 1:
                raise ValueError(f"deviation exponent p must be > 1, got {self.p}")
        else:
            raise ValueError(f"unknown deviation form '{self.form}'")

    @classmethod
    def quadratic(cls, C=1.0):
        return cls(form='quadratic', C=float(C))

    @classmethod
    def power(cls, p):
        return cls(form='power', p=float(p))

    @property
    def q(self):
        return self.p / (self.p - 1.0)

    @property
    def c_p(self):
        return 0.5 * self.C if self.form == 'quadratic' else 1.0 / self.p

    @property
    def c_q(self):
        return 0.5 / self.C if self.form == 'quadratic' else 1.0 / self.q

    @property
    def is_quadratic(self):
        return self.form == 'quadratic'

    def V(self, xi):
        if self.is_quadratic:
            return 0.5 * self.C * dot(xi, xi)
        return frobenius_norm(xi) ** self.p / self.p

    def V_star(self, eta):
        if self.is_quadratic:
            return dot(eta, eta) / (2.0 * self.C)
        return frobenius_norm(eta) ** self.q / self.q

    def grad_V(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.is_quadratic:
            return self.C * xi
        return (frobenius_norm(xi) ** (self.p - 2.0))[..., None, None] * xi

    def grad_V_star(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.is_quadratic:
            return eta / self.C
        norm = frobenius_norm(eta)
        with np.errstate(divide='ignore', invalid='ignore'):
            scale = np.where(norm > 0, norm ** (self.q - 2.0), 0.0)
        return scale[..., None, None] * eta

    def deviation(self, F, P, F_data, P_data):
        return self.V(np.asarray(F) - F_data) + self.V_star(np.asarray(P) - P_data)

    def numeric_conjugate(self, eta, radii=None):
        """sup over xi of xi.eta - V(xi), searched along eta/|eta| on a radial grid"""
        eta = np.asarray(eta, dtype=float)
        norm = float(frobenius_norm(eta))
        if norm == 0.0:
            return 0.0
        if radii is None:
            guess = norm / self.C if self.is_quadratic else norm ** (1.0 / (self.p - 1.0))
            radii = np.linspace(0.0, 3.0 * guess + 1.0, 200001)
        direction = eta / norm
        values = radii * norm - self.V(radii[:, None, None] * direction)
        return float(np.max(values))

    def fenchel_young_gap(self, xi, eta):
        return self.V(xi) + self.V_star(eta) - dot(xi, eta)

    def to_dict(self):
        if self.is_quadratic:
            return {'form': 'quadratic', 'C': self.C}
        return {'form': 'power', 'p': self.p}

    @classmethod
    def from_dict(cls, spec):
        spec = spec or {}
        if spec.get('form', 'quadratic') == 'quadratic':
            return cls.quadratic(spec.get('C', 1.0))
        return cls.power(spec['p'])


@dataclass(frozen=True)
class PhasePoint:
    """Pointwise state (F, P): deformation gradient and first Piola-Kirchhoff stress"""
    F: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        P = np.asarray(self.P, dtype=float)
        if dim_of(F) != dim_of(P) or F.shape != P.shape:
            raise DimensionError(f"F and P shapes differ: {F.shape} vs {P.shape}")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(P))):
            raise ValueError("phase point entries must be finite")
        object.__setattr__(self, 'F', F)
        object.__setattr__(self, 'P', P)

    @property
    def n(self):
        return self.F.shape[-1]


class LocalDataSet:
    """
    Queryable local material data set.

    kind 'graph': wraps a stress law T, membership means P = T(F).
    kind 'cloud': stores arrays F, P of shape (N, n, n).
    Data sets are treated as immutable once built.
    """

    def __init__(self, n, kind, F=None, P=None, law=None, metadata=None):
        if kind not in ('graph', 'cloud'):
            raise ValueError(f"unknown data set kind '{kind}'")
        self.n = int(n)
        self.kind = kind
        self.law = law
        self.metadata = dict(metadata or {})
        self._trees = {}
        self._lock = threading.Lock()

        if kind == 'graph':
            if law is None:
                raise ValueError("graph data sets need a stress law")
            self.F = self.P = None
            return

        F = np.asarray(F, dtype=float).reshape(-1, self.n, self.n)
        P = np.asarray(P, dtype=float).reshape(-1, self.n, self.n)
        if F.shape != P.shape:
            raise DimensionError(f"cloud F and P shapes differ: {F.shape} vs {P.shape}")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(P))):
            raise ValueError("cloud points must be finite")
        self.F, self.P = F, P

    @classmethod
    def graph(cls, model_or_law, metadata=None):
        law = as_stress_law(model_or_law)
        meta = {'source': 'graph', 'law': law.name}
        if isinstance(model_or_law, EnergyModel):
            meta['model'] = model_or_law.to_dict()
        meta.update(metadata or {})
        return cls(law.n, 'graph', law=law, metadata=meta)

    @classmethod
    def from_states(cls, F, P, metadata=None):
        F = np.asarray(F, dtype=float)
        return cls(dim_of(F), 'cloud', F=F, P=P, metadata=metadata)

    def __len__(self):
        return 0 if self.kind == 'graph' else len(self.F)

    @property
    def model(self):
        """Generating EnergyModel when known"""
        if self.law is not None and isinstance(self.law.model, EnergyModel):
            return self.law.model
        spec = self.metadata.get('model')
        return EnergyModel.from_dict(spec) if spec else None

    def point(self, i):
        return PhasePoint(self.F[i], self.P[i])

    def require_points(self):
        if self.kind == 'cloud' and len(self) == 0:
            raise EmptyDataSetError("material data set has no points")

    def embedding(self, C):
        root_c = np.sqrt(C)
        return np.concatenate([root_c * flatten(self.F), flatten(self.P) / root_c], axis=1)

    def tree(self, C=1.0):
        """k-d tree over the embedding for modulus C, built once per C"""
        with self._lock:
            if C not in self._trees:
                self._trees[C] = cKDTree(self.embedding(C))
            return self._trees[C]

    def resolution_bound(self, F, P):
        """Largest gap a rotated member may have to the set (0 for graphs and plain clouds)"""
        angle = self.metadata.get('orbit_covering_angle')
        if self.kind == 'graph' or angle is None:
            return np.zeros(np.shape(F)[:-2])
        norm = np.sqrt(dot(F, F) + dot(P, P))
        return 2.0 * np.sin(0.5 * angle) * norm

    def sample_members(self, count, rng, scale=3.0):
        """Random members: cloud rows, or graph points over Gaussian F"""
        if self.kind == 'cloud':
            self.require_points()
            idx = rng.integers(0, len(self), size=count)
            return self.F[idx], self.P[idx]
        F = scale * rng.standard_normal((count, self.n, self.n)) / self.n
        return F, self.law(F)

    def summary(self):
        return {'n': self.n, 'kind': self.kind, 'size': len(self), **self.metadata}


# -- sampling -----------------------------------------------------------------

def sample_graph(m, box, count, noise=0.0, seed=0, filter_det=False, center=None):
    """
    Sample a point cloud from the graph of T = DW.

    Parameters:
    -----------
    m : EnergyModel
        Generating model
    box : float or array
        Half-width of the sampling box around center, per matrix entry
    count : int
        Number of points
    noise : float
        Relative noise: P_i = T(F_i) + eps_i with RMS |eps_i| = noise |T(F_i)|
    seed : int
        Seed for the generator
    filter_det : bool
        Keep only samples with det F > 0
    center : array, optional
        Box center, identity by default
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    n = m.n
    half = np.broadcast_to(np.asarray(box, dtype=float), (n, n))
    if np.any(half < 0):
        raise ValueError("box half-widths must be nonnegative")
    center = np.eye(n) if center is None else np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)

    accepted = []
    total = 0
    draws = 0
    while total < count:
        F = center + half * rng.uniform(-1.0, 1.0, size=(count, n, n))
        draws += count
        if filter_det:
            F = F[det(F) > 0]
        accepted.append(F)
        total += len(F)
        if total < count and draws >= 1000 * count:
            raise ValueError(f"empty box: only {total} of {count} samples have det F > 0")
    F = np.concatenate(accepted)[:count]

    P = m.stress(F)
    if noise > 0:
        sigma = noise * frobenius_norm(P) / n
        P = P + sigma[:, None, None] * rng.standard_normal(P.shape)

    metadata = {
        'source': 'graph-sample',
        'model': m.to_dict(),
        'box': half.tolist(),
        'center': center.tolist(),
        'count': int(count),
        'noise': float(noise),
        'seed': int(seed),
        'filter_det': bool(filter_det),
    }
    logger.info(f"Sampled {count} graph points from {m.flavor} (noise={noise}, seed={seed})")
    return LocalDataSet(n, 'cloud', F=F, P=P, metadata=metadata)


# -- queries ------------------------------------------------------------------

def nearest_index_linear(D, dev, F, P, chunk=256):
    """Exact arg-min by linear scan; ties go to the lowest index"""
    D.require_points()
    F = np.asarray(F, dtype=float).reshape(-1, D.n, D.n)
    P = np.asarray(P, dtype=float).reshape(-1, D.n, D.n)
    idx = np.empty(len(F), dtype=int)
    values = np.empty(len(F))
    for start in range(0, len(F), chunk):
        sl = slice(start, start + chunk)
        dev_all = dev.deviation(F[sl, None], P[sl, None], D.F[None], D.P[None])
        idx[sl] = np.argmin(dev_all, axis=1)
        values[sl] = dev_all[np.arange(len(idx[sl])), idx[sl]]
    return idx, values


def nearest_index(D, dev, F, P):
    """
    Exact nearest cloud points for a batch of queries.

    Quadratic deviations use the k-d tree; the candidate ball around the tree
    answer is re-scored in the original metric so ties resolve to the lowest
    index, exactly as a linear scan would.
    """
    D.require_points()
    if D.kind != 'cloud':
        raise ValueError("nearest_index needs a cloud data set")
    if not dev.is_quadratic:
        return nearest_index_linear(D, dev, F, P)

    F = np.asarray(F, dtype=float).reshape(-1, D.n, D.n)
    P = np.asarray(P, dtype=float).reshape(-1, D.n, D.n)
    root_c = np.sqrt(dev.C)
    X = np.concatenate([root_c * flatten(F), flatten(P) / root_c], axis=1)
    tree = D.tree(dev.C)
    dist, _ = tree.query(X, k=1)
    radius = dist * (1.0 + 1e-9) + 1e-12
    candidates = tree.query_ball_point(X, r=radius)

    idx = np.empty(len(F), dtype=int)
    values = np.empty(len(F))
    for i, cand in enumerate(candidates):
        cand = np.sort(np.asarray(cand, dtype=int))
        scores = dev.deviation(F[i], P[i], D.F[cand], D.P[cand])
        j = int(np.argmin(scores))
        idx[i] = cand[j]
        values[i] = scores[j]
    return idx, values


def nearest(D, dev, z):
    """Nearest stored point to z; graphs are routed through psi"""
    if D.kind == 'graph':
        return psi(D, dev, z)[1]
    idx, _ = nearest_index(D, dev, z.F, z.P)
    return D.point(idx[0])


def _graph_objective(D, dev, F, P):
    law = D.law
    model = law.model if isinstance(law.model, EnergyModel) else None
    n = D.n

    def objective(x):
        Fp = x.reshape(n, n)
        Pp = law(Fp)
        value = float(dev.V(F - Fp) + dev.V_star(P - Pp))
        if model is None:
            return value
        # DT is symmetric for T = DW
        grad = -dev.grad_V(F - Fp) - model.stress_tangent(Fp, dev.grad_V_star(P - Pp))
        return value, grad.ravel()

    return objective, model is not None


def _graph_starts(D, F):
    n = D.n
    box = D.metadata.get('box')
    scale = SOLVER_DEFAULTS['graph_psi_perturbation'] * (
        float(np.max(box)) if box is not None else 1.0 + float(frobenius_norm(F)))
    if n == 2:
        directions = np.eye(4).reshape(4, 2, 2)
    else:
        directions = np.random.default_rng(0).standard_normal((4, 3, 3))
        directions /= frobenius_norm(directions)[:, None, None]
    starts = [F]
    for H in directions:
        starts.extend([F + scale * H, F - scale * H])
    return starts[:SOLVER_DEFAULTS['graph_psi_starts']]


def psi(D, dev, z):
    """
    Minimum deviation from z to the data set and the arg-min data point.

    Clouds: exact nearest-point search. Graphs: multi-start local descent
    over F' (9 starts), so the value is an upper bound, not certified.
    """
    if D.n != z.n:
        raise DimensionError(f"data set has n={D.n}, query has n={z.n}")
    if D.kind == 'cloud':
        idx, values = nearest_index(D, dev, z.F, z.P)
        return float(values[0]), D.point(idx[0])

    objective, has_jac = _graph_objective(D, dev, z.F, z.P)
    best_value, best_F = np.inf, None
    for start in _graph_starts(D, z.F):
        res = minimize(objective, np.asarray(start, dtype=float).ravel(), jac=has_jac,
                       method='BFGS', options={'gtol': 1e-12, 'maxiter': 500})
        value = float(res.fun)
        if value < best_value:
            best_value, best_F = value, res.x.reshape(D.n, D.n)
        if best_value == 0.0:
            break
    best_F = np.asarray(best_F)
    return max(best_value, 0.0), PhasePoint(best_F, D.law(best_F))


def assign(D, dev, F, P):
    """
    Batched assignment step: data-branch states closest to each (F_e, P_e).

    Returns:
    --------
    tuple
        (F_data, P_data, indices or None for graphs, deviations)
    """
    if D.kind == 'cloud':
        idx, values = nearest_index(D, dev, F, P)
        return D.F[idx], D.P[idx], idx, values
    F_data = np.empty_like(F)
    P_data = np.empty_like(P)
    values = np.empty(len(F))
    for e in range(len(F)):
        values[e], point = psi(D, dev, PhasePoint(F[e], P[e]))
        F_data[e], P_data[e] = point.F, point.P
    return F_data, P_data, None, values


# -- transformations ----------------------------------------------------------

def filter_moment_equilibrium(D, tol=None):
    """Keep exactly the points with |PF^T - FP^T| <= tol (1 + |F||P|)"""
    if D.kind != 'cloud':
        raise ValueError("moment-equilibrium filtering applies to clouds")
    tol = TOLERANCES['moment_equilibrium'] if tol is None else float(tol)
    residual = moment_residual(D.F, D.P)
    keep = residual <= tol * (1.0 + frobenius_norm(D.F) * frobenius_norm(D.P))
    removed = int(np.count_nonzero(~keep))
    metadata = dict(D.metadata)
    metadata['moment_filter'] = {'tol': tol, 'removed': removed, 'kept': int(np.count_nonzero(keep))}
    logger.info(f"Moment-equilibrium filter removed {removed} of {len(D)} points")
    return LocalDataSet(D.n, 'cloud', F=D.F[keep], P=D.P[keep], law=D.law, metadata=metadata)


def _quaternion_to_matrix(q):
    x, y, z, w = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], axis=-1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], axis=-1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], axis=-1),
    ], axis=-2)


def orbit_rotations(n, m_rot):
    """
    Rotation set used for orbit augmentation, identity first.

    n=2: equispaced angles 2*pi*j/m_rot. n=3: identity plus Sobol points
    mapped to unit quaternions.
    """
    if m_rot < 1:
        raise ValueError(f"m_rot must be >= 1, got {m_rot}")
    if n == 2:
        return rotation_2d(2.0 * np.pi * np.arange(m_rot) / m_rot)
    if m_rot == 1:
        return np.eye(3)[None]
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        u = qmc.Sobol(d=3, scramble=False).random(m_rot)[1:]
    a = np.sqrt(1.0 - u[:, 0])
    b = np.sqrt(u[:, 0])
    q = np.stack([a * np.sin(2 * np.pi * u[:, 1]), a * np.cos(2 * np.pi * u[:, 1]),
                  b * np.sin(2 * np.pi * u[:, 2]), b * np.cos(2 * np.pi * u[:, 2])], axis=1)
    return np.concatenate([np.eye(3)[None], _quaternion_to_matrix(q)])


def covering_angle(rotations, samples=None, seed=0):
    """Largest angle from a sampled rotation to the nearest member of the set"""
    n = rotations.shape[-1]
    if n == 2:
        return np.pi / len(rotations)
    samples = samples or CERTIFICATE_DEFAULTS['orbit_covering_samples']
    R = random_rotation(3, seed, size=samples)
    traces = np.einsum('pki,mki->pm', R, rotations)
    angles = np.arccos(np.clip(0.5 * (traces - 1.0), -1.0, 1.0))
    # sampled maximum underestimates the true covering radius
    return float(1.1 * np.max(np.min(angles, axis=1)))


def augment_orbit(D, m_rot):
    """Replace each base point by its m_rot rotated copies (Q_j F, Q_j P)"""
    if D.kind != 'cloud':
        raise ValueError("orbit augmentation applies to clouds")
    Q = orbit_rotations(D.n, m_rot)
    F = np.einsum('mij,njk->nmik', Q, D.F).reshape(-1, D.n, D.n)
    P = np.einsum('mij,njk->nmik', Q, D.P).reshape(-1, D.n, D.n)
    metadata = dict(D.metadata)
    metadata['orbit_augmentation'] = int(m_rot) * int(metadata.get('orbit_augmentation', 1))
    metadata['orbit_covering_angle'] = covering_angle(Q) if m_rot > 1 else metadata.get('orbit_covering_angle')
    if metadata['orbit_covering_angle'] is None:
        metadata.pop('orbit_covering_angle')
    logger.info(f"Orbit augmentation x{m_rot}: {len(D)} -> {len(F)} points")
    return LocalDataSet(D.n, 'cloud', F=F, P=P, law=D.law, metadata=metadata)
