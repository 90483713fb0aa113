# dd_solver.py
"""
Alternating minimization for the Data-Driven problem

    J(F, P; F', P') = sum_e w_e (V(F_e - F'_e) + V*(P_e - P'_e))

over mechanically admissible (F, P) and data points (F'_e, P'_e) in D.
Each outer iteration projects the current data branch onto the
admissible set and reassigns every element to its nearest data point.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from fem_core import (
    ElementFields, discrete_diagnostics, lumped_l2_norm, project_compatible,
    project_equilibrium, solve_classical,
)
from material_data import DeviationPair, assign, sample_graph
from material_models import EnergyModel
from settings import NUM_THREADS, SOLVER_DEFAULTS, TOLERANCES

logger = logging.getLogger('DD-Solver')

INIT_MODES = ('zero-state', 'classical-warm-start', 'random-data-assignment')
STRONG = 'strong'
GENERALIZED = 'generalized'
NON_CONVERGED = 'non-converged'


@dataclass
class DDConfig:
    dev: DeviationPair = field(default_factory=DeviationPair.quadratic)
    max_outer: int = SOLVER_DEFAULTS['dd_max_outer']
    tol_J: float = None
    seed: int = 0
    init: str = None
    model: EnergyModel = None

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")
        if self.tol_J is not None and self.tol_J < 0:
            raise ValueError(f"tol_J must be >= 0, got {self.tol_J}")
        if self.init is not None and self.init not in INIT_MODES:
            raise ValueError(f"unknown init '{self.init}', expected one of {INIT_MODES}")

    def resolved_tol(self, mp):
        """Default floor scales with the element count and the deviation modulus"""
        if self.tol_J is not None:
            return float(self.tol_J)
        return TOLERANCES['strong_J_per_element'] * mp.num_elements * self.dev.C

    def resolved_init(self, D):
        if self.init is not None:
            return self.init
        model = self.model or D.model
        return 'classical-warm-start' if model is not None and model.n == 2 else 'random-data-assignment'

    def to_dict(self):
        spec = {'deviation': self.dev.to_dict(), 'max_outer': self.max_outer,
                'tol_J': self.tol_J, 'seed': self.seed, 'init': self.init}
        if self.model is not None:
            spec['model'] = self.model.to_dict()
        return spec

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec or {})
        if 'seed' not in spec:
            raise ValueError("DD config needs an explicit 'seed'")
        model = spec.get('model')
        return cls(dev=DeviationPair.from_dict(spec.get('deviation')),
                   max_outer=int(spec.get('max_outer', SOLVER_DEFAULTS['dd_max_outer'])),
                   tol_J=spec.get('tol_J'), seed=int(spec['seed']), init=spec.get('init'),
                   model=EnergyModel.from_dict(model) if model else None)


@dataclass(eq=False)
class SolveReport:
    J_history: list
    classification: str
    iterations: int
    tol_J: float
    stagnated: bool
    monotone: bool
    init: str
    fields: ElementFields = None
    F_data: np.ndarray = None
    P_data: np.ndarray = None
    data_indices: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)
    data_summary: dict = field(default_factory=dict)
    wall_time: float = None

    @property
    def J(self):
        return self.J_history[-1]

    def to_dict(self, include_fields=False, timing=False):
        out = {
            'J_history': [float(j) for j in self.J_history],
            'J': float(self.J),
            'classification': self.classification,
            'iterations': int(self.iterations),
            'tol_J': float(self.tol_J),
            'stagnated': bool(self.stagnated),
            'J_nonincreasing': bool(self.monotone),
            'init': self.init,
            'diagnostics': {k: float(v) for k, v in self.diagnostics.items()},
            'data': self.data_summary,
        }
        if timing and self.wall_time is not None:
            out['wall_time'] = float(self.wall_time)
        if include_fields and self.fields is not None:
            out['fields'] = {
                'u': self.fields.u.tolist(),
                'F': self.fields.F.tolist(),
                'P': self.fields.P.tolist(),
                'F_data': self.F_data.tolist(),
                'P_data': self.P_data.tolist(),
            }
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            report = cls(J_history=list(data['J_history']), classification=data['classification'],
                         iterations=int(data['iterations']), tol_J=float(data['tol_J']),
                         stagnated=bool(data.get('stagnated', False)),
                         monotone=bool(data.get('J_nonincreasing', True)),
                         init=data.get('init'), diagnostics=dict(data.get('diagnostics', {})),
                         data_summary=dict(data.get('data', {})), wall_time=data.get('wall_time'))
        except (KeyError, TypeError) as e:
            raise ValueError(f"not a DD report: missing or malformed field {e}")
        fields = data.get('fields')
        if fields:
            report.fields = ElementFields(u=np.asarray(fields['u']), F=np.asarray(fields['F']),
                                          P=np.asarray(fields['P']))
            report.F_data = np.asarray(fields['F_data'])
            report.P_data = np.asarray(fields['P_data'])
        return report


def _assign(D, dev, F, P):
    """Cloud queries run batched; graph queries are split over worker threads in order"""
    if D.kind == 'cloud' or len(F) < 2 * NUM_THREADS:
        return assign(D, dev, F, P)
    chunks = np.array_split(np.arange(len(F)), NUM_THREADS)
    with ThreadPoolExecutor(max_workers=NUM_THREADS) as pool:
        parts = list(pool.map(lambda idx: assign(D, dev, F[idx], P[idx]), chunks))
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
            None, np.concatenate([p[3] for p in parts]))


def _assignment_unchanged(D, old, new):
    if D.kind == 'cloud':
        return old[2] is not None and np.array_equal(old[2], new[2])
    scale = 1.0 + max(np.max(np.abs(new[0])), np.max(np.abs(new[1])))
    return (np.allclose(old[0], new[0], rtol=0.0, atol=1e-10 * scale)
            and np.allclose(old[1], new[1], rtol=0.0, atol=1e-10 * scale))


def _initial_assignment(mp, D, cfg, init, classical):
    E = mp.num_elements
    if init == 'random-data-assignment':
        rng = np.random.default_rng(cfg.seed)
        if D.kind == 'cloud':
            idx = rng.integers(0, len(D), size=E)
            return D.F[idx], D.P[idx], idx
        F = np.eye(2) + 0.1 * rng.standard_normal((E, 2, 2))
        return F, D.law(F), None

    if init == 'zero-state':
        F = np.zeros((E, 2, 2))
        P = np.zeros((E, 2, 2))
    else:
        if classical is None:
            model = cfg.model or D.model
            if model is None:
                raise ValueError("classical-warm-start needs a generating model")
            classical = solve_classical(mp, model)
        _, F, P = classical[:3]
    F_data, P_data, idx, _ = _assign(D, cfg.dev, F, P)
    return F_data, P_data, idx


def solve_dd(mp, D, cfg=None, classical=None):
    """
    Run the alternating scheme until J <= tol_J (strong), the assignment
    stops changing (generalized, a local minimizer only) or max_outer
    iterations pass (non-converged).

    Parameters:
    -----------
    mp : MeshProblem
    D : LocalDataSet
    cfg : DDConfig, optional
    classical : tuple, optional
        Precomputed (u, F, P) for the warm start
    """
    cfg = cfg or DDConfig()
    D.require_points()
    if D.n != 2:
        raise ValueError(f"the DD solver runs on 2D meshes, data set has n={D.n}")
    if not cfg.dev.is_quadratic:
        raise ValueError("solve_dd needs a quadratic deviation pair")
    started = time.perf_counter()
    tol_J = cfg.resolved_tol(mp)
    init = cfg.resolved_init(D)
    logger.info(f"DD solve: {mp.num_elements} elements, {D.kind} data set "
                f"({len(D)} points), init={init}, tol_J={tol_J:.3e}")

    F_data, P_data, idx = _initial_assignment(mp, D, cfg, init, classical)
    history = []
    stagnated = False
    u = F = P = lam = None
    for k in range(cfg.max_outer):
        u, F = project_compatible(mp, F_data, cfg.dev)
        P, lam = project_equilibrium(mp, P_data, cfg.dev)
        J = float(np.sum(mp.areas * cfg.dev.deviation(F, P, F_data, P_data)))
        history.append(J)
        logger.debug(f"Outer iteration {k + 1}: J = {J:.6e}")
        if J <= tol_J:
            break
        new = _assign(D, cfg.dev, F, P)
        if _assignment_unchanged(D, (F_data, P_data, idx), new):
            stagnated = True
            break
        F_data, P_data, idx = new[0], new[1], new[2]

    monotone = all(b <= a + 1e-12 * (1.0 + abs(a)) for a, b in zip(history, history[1:]))
    if not monotone:
        logger.warning(f"J history is not non-increasing: {history}")

    fields = ElementFields(u=u, F=F, P=P, lam=lam)
    report = SolveReport(
        J_history=history, classification=NON_CONVERGED, iterations=len(history), tol_J=tol_J,
        stagnated=stagnated, monotone=monotone, init=init, fields=fields,
        F_data=F_data, P_data=P_data, data_indices=idx,
        diagnostics=discrete_diagnostics(mp, fields, F_data, P_data, cfg.dev),
        data_summary={'n': D.n, 'kind': D.kind, 'size': len(D)},
    )
    report.classification = classify_solution(report, tol_J)
    report.wall_time = time.perf_counter() - started
    logger.info(f"DD solve finished: {report.classification} after {report.iterations} iterations, "
                f"J = {report.J:.6e}")
    return report


def classify_solution(report, tol_J=None):
    """strong if J <= tol_J; generalized if the assignment stagnated; else non-converged"""
    tol_J = report.tol_J if tol_J is None else tol_J
    if report.J <= tol_J:
        return STRONG
    if report.stagnated:
        return GENERALIZED
    return NON_CONVERGED


def branch_agreement(report):
    """max_e (|F_e - F'_e| + |P_e - P'_e|)"""
    dF = report.fields.F - report.F_data
    dP = report.fields.P - report.P_data
    return float(np.max(np.sqrt(np.einsum('eij,eij->e', dF, dF)) + np.sqrt(np.einsum('eij,eij->e', dP, dP))))


def study_box(F, factor=None):
    """Center and half-width of a box spanning factor x the per-entry range of the states"""
    factor = SOLVER_DEFAULTS['study_box_factor'] if factor is None else factor
    lo, hi = F.min(axis=0), F.max(axis=0)
    center = 0.5 * (lo + hi)
    half = np.maximum(0.5 * factor * (hi - lo), 1e-3)
    return center, half


def study_convergence(mp, m, counts, noise=0.0, seed=0, cfg=None):
    """
    Paired DD runs on graph samples of increasing size.

    Returns:
    --------
    pandas.DataFrame
        One row per count with J, the discrete L2 distance to the classical
        displacement, the data-branch residuals and the noise floor estimate
    """
    if m.n != 2:
        raise ValueError(f"study_convergence needs a 2D model, got n={m.n}")
    counts = sorted(int(c) for c in counts)
    if not counts or counts[0] < 1:
        raise ValueError("counts must be a nonempty list of positive integers")
    base = cfg or DDConfig(seed=seed)
    dev = base.dev

    classical = solve_classical(mp, m)
    u_c, F_c, P_c = classical
    center, half = study_box(F_c)
    noise_deviation = float(np.sum(mp.areas * dev.V_star(noise * P_c)))
    logger.info(f"Convergence study: counts {counts}, noise {noise}, box half-width {half.max():.4g}")

    rows = []
    for count in counts:
        D = sample_graph(m, half, count, noise=noise, seed=seed, center=center)
        run_cfg = DDConfig(dev=dev, max_outer=base.max_outer, tol_J=base.tol_J, seed=seed,
                           init=base.init, model=m)
        report = solve_dd(mp, D, run_cfg, classical=classical)
        rows.append({
            'count': count,
            'noise': float(noise),
            'J': report.J,
            'u_error_l2': lumped_l2_norm(mp, report.fields.u - u_c),
            'delta_gap': report.diagnostics['delta_gap'],
            'curl_residual': report.diagnostics['curl_residual'],
            'div_residual': report.diagnostics['div_residual'],
            'classification': report.classification,
            'iterations': report.iterations,
            'noise_deviation': noise_deviation,
        })
        logger.info(f"count={count}: J={report.J:.6e}, {report.classification}")
    return pd.DataFrame(rows, columns=['count', 'noise', 'J', 'u_error_l2', 'delta_gap',
                                       'curl_residual', 'div_residual', 'classification',
                                       'iterations', 'noise_deviation'])
