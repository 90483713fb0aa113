# certificates.py
"""
Witness searches for the structural hypotheses on a stress function or a
material data set: coercivity, polymonotonicity (2D and 3D),
quasimonotonicity, growth, frame indifference and moment equilibrium.

A certificate never claims an inequality holds. Its verdict is either
"no-violation-found" after `samples_tested` samples, or "violated" with a
witness that reproduces the violation when replayed.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from material_data import DeviationPair, LocalDataSet, nearest_index
from material_models import EnergyModel, as_stress_law
from settings import CERTIFICATE_DEFAULTS, NUM_THREADS, TOLERANCES
from tensor_core import (
    det, dot, frobenius_norm, minors, moment_residual, random_rotation,
)

logger = logging.getLogger('DD-Certificates')

PROPERTIES = (
    'coercivity', 'polymonotonicity_2d', 'polymonotonicity_3d', 'quasimonotonicity',
    'growth', 'frame_indifference', 'moment_equilibrium',
)
NO_VIOLATION = 'no-violation-found'
VIOLATED = 'violated'


@dataclass
class Certificate:
    property: str
    verdict: str
    samples_tested: int
    seed: int
    min_margin: float
    constants_used: dict = field(default_factory=dict)
    witness: dict = None
    notes: dict = field(default_factory=dict)

    @property
    def violated(self):
        return self.verdict == VIOLATED

    def to_dict(self):
        return _jsonable(asdict(self))

    def to_json(self):
        """Canonical JSON: equal certificates give identical bytes"""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: data.get(k) for k in (
            'property', 'verdict', 'samples_tested', 'seed', 'min_margin',
            'constants_used', 'witness', 'notes')})

    def replay(self, subject=None):
        """Margin of the stored witness re-evaluated against subject"""
        return replay_witness(self, subject)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if np.isfinite(v) else str(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


# -- sampling helpers ---------------------------------------------------------

def sample_matrices(rng, count, n, lo, hi):
    """Gaussian directions rescaled to log-uniform norms in [lo, hi]"""
    Z = rng.standard_normal((count, n, n))
    Z /= frobenius_norm(Z)[:, None, None]
    norms = np.exp(rng.uniform(np.log(lo), np.log(hi), size=count))
    return norms[:, None, None] * Z


def _run_batches(evaluate, budget, seed, batch_size=None):
    """
    Evaluate `budget` samples in batches seeded by (seed, batch_index).

    `evaluate(rng, size)` returns a dict with arrays 'margin' and 'scale'
    plus the sample arrays. The witness is the sample with the smallest
    margin relative to its scale; ties go to the earliest batch and index.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    batch_size = batch_size or CERTIFICATE_DEFAULTS['batch_size']
    sizes = [min(batch_size, budget - start) for start in range(0, budget, batch_size)]

    def work(i):
        return evaluate(np.random.default_rng([seed, i]), sizes[i])

    with ThreadPoolExecutor(max_workers=NUM_THREADS) as pool:
        results = list(pool.map(work, range(len(sizes))))

    best = None
    min_margin = np.inf
    for i, res in enumerate(results):
        margin = np.where(np.isnan(res['margin']), -np.inf, res['margin'])
        min_margin = min(min_margin, float(np.min(margin)))
        with np.errstate(invalid='ignore'):
            relative = margin / res['scale']
        relative = np.where(np.isnan(relative), -np.inf, relative)
        j = int(np.argmin(relative))
        if best is None or relative[j] < best[0]:
            best = (float(relative[j]), i, j)
    relative, i, j = best
    witness = {k: v[j] for k, v in results[i].items()}
    return min_margin, relative, witness


def _verdict(relative):
    return VIOLATED if relative < -TOLERANCES['margin_roundoff'] else NO_VIOLATION


def _certificate(prop, relative, min_margin, witness, budget, seed, constants, notes=None):
    verdict = _verdict(relative)
    cert = Certificate(
        property=prop, verdict=verdict, samples_tested=int(budget), seed=int(seed),
        min_margin=float(min_margin), constants_used=constants,
        witness=_jsonable(witness) if verdict == VIOLATED else None, notes=notes or {},
    )
    logger.info(f"{prop}: {verdict} after {budget} samples (min margin {min_margin:.6g})")
    return cert


# -- coercivity ---------------------------------------------------------------

def _check_exponent(p, minimum=1.0, strict=True):
    if p is None or not np.isfinite(p) or (p <= minimum if strict else p < minimum):
        raise ValueError(f"invalid exponent p={p}")


def coercivity_sides(law, xi, p, constants):
    """(xi.T(xi), |xi|^p/c_F + |T|^q/c_P - c)"""
    q = p / (p - 1.0)
    with np.errstate(over='ignore', invalid='ignore'):
        T = law(xi)
        lhs = dot(xi, T)
        rhs = (frobenius_norm(xi) ** p / constants['c_F']
               + frobenius_norm(T) ** q / constants['c_P'] - constants['c'])
    return lhs, rhs


def fit_coercivity_constants(law, p, seed, fit_radius=10.0):
    """
    Coarse radial fit of (c_F, c_P, c).

    The decay rate kappa = min xi.T / (|xi|^p + |T|^q) is read off the radii
    beyond fit_radius and halved; c then covers the radii up to fit_radius.
    """
    q = p / (p - 1.0)
    rng = np.random.default_rng([seed, 7919])
    radii = np.logspace(-2, 3, CERTIFICATE_DEFAULTS['coarse_radii'])
    directions = rng.standard_normal((CERTIFICATE_DEFAULTS['coarse_directions'], law.n, law.n))
    directions /= frobenius_norm(directions)[:, None, None]
    xi = radii[:, None, None, None] * directions[None]
    with np.errstate(over='ignore', invalid='ignore'):
        T = law(xi)
        work = dot(xi, T)
        growth = frobenius_norm(xi) ** p + frobenius_norm(T) ** q
        ratio = work / growth
    outer = radii >= fit_radius
    kappa = np.nanmin(ratio[outer]) if np.any(np.isfinite(ratio[outer])) else -np.inf
    alpha = 0.5 * kappa if kappa > 0 else 1e-6
    inner = ~outer
    with np.errstate(over='ignore', invalid='ignore'):
        excess = alpha * growth[inner] - work[inner]
    c = 2.0 * max(0.0, float(np.nanmax(excess))) + 1.0
    return {'c_F': 1.0 / alpha, 'c_P': 1.0 / alpha, 'c': c, 'kappa': float(kappa), 'p': p, 'q': q}


def check_coercivity(T, p, budget, seed, n=None):
    """Search for xi with |xi|^p/c_F + |T(xi)|^q/c_P - c > xi.T(xi)"""
    _check_exponent(p)
    law = as_stress_law(T, n)
    constants = fit_coercivity_constants(law, p, seed)
    lo, hi = CERTIFICATE_DEFAULTS['norm_range']

    def evaluate(rng, size):
        xi = sample_matrices(rng, size, law.n, lo, hi)
        lhs, rhs = coercivity_sides(law, xi, p, constants)
        return {'margin': lhs - rhs, 'scale': 1.0 + np.abs(lhs) + np.abs(rhs),
                'xi': xi, 'lhs': lhs, 'rhs': rhs}

    min_margin, relative, witness = _run_batches(evaluate, budget, seed)
    notes = {'law': law.name, 'fit': 'coarse radial grid, kappa/2 decay, c over |xi|<=10'}
    if isinstance(law.model, EnergyModel):
        notes['model'] = law.model.to_dict()
        notes['flags'] = law.model.flags
    return _certificate('coercivity', relative, min_margin, witness, budget, seed, constants, notes)


# -- polymonotonicity ---------------------------------------------------------

def _require_model(m, n):
    if not isinstance(m, EnergyModel) or m.n != n:
        expected = 'W2/hatW2' if n == 2 else 'W3/hatW3'
        raise ValueError(f"this check needs a {expected} model, got {getattr(m, 'flavor', type(m).__name__)}")


def polymonotone_2d_sides(m, F, G):
    """
    Left: (DW2(F+G) - DW2(F)).G
    Right: 1/4 a (|G|^2 + 3F.G)^2 + A(F).M(G) + (1 - b/2)|G|^2
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    b, _ = m.g.bounds()
    lhs = dot(m.stress(F + G) - m.stress(F), G)
    g2 = dot(G, G)
    null_part = np.einsum('...k,...k->...', m.null_lagrangian_coefficients(F), minors(G))
    rhs = 0.25 * m.a * (g2 + 3.0 * dot(F, G)) ** 2 + null_part + (1.0 - 0.5 * b) * g2
    return lhs, rhs


def polymonotone_3d_sides(m, F, G, c_prime):
    """
    Left: (DW3(F+G) - DW3(F)).G
    Right: c' e |G|^6 + g'(det F)(F.cof G + det G) + g'(0)(F.cof G + 2 det G)
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    lhs = dot(m.stress(F + G) - m.stress(F), G)
    null_part = np.einsum('...k,...k->...', m.null_lagrangian_coefficients(F), minors(G))
    rhs = c_prime * m.e * dot(G, G) ** 3 + null_part
    return lhs, rhs


def check_polymonotone_2d(m, budget, seed):
    _require_model(m, 2)
    hi = CERTIFICATE_DEFAULTS['poly_norm_max']
    b, d = m.g.bounds()

    def evaluate(rng, size):
        F = sample_matrices(rng, size, 2, 1e-2, hi)
        G = sample_matrices(rng, size, 2, 1e-2, hi)
        lhs, rhs = polymonotone_2d_sides(m, F, G)
        return {'margin': lhs - rhs, 'scale': 1.0 + np.abs(lhs) + np.abs(rhs),
                'F': F, 'G': G, 'lhs': lhs, 'rhs': rhs}

    min_margin, relative, witness = _run_batches(evaluate, budget, seed)
    constants = {'a': m.a, 'b': b, 'd': d}
    notes = {'model': m.to_dict(), 'flags': m.flags}
    if m.flags.get('boundary_case'):
        notes['boundary_case'] = 'b = 2: gap B vanishes, polymonotone only in the limiting sense'
    return _certificate('polymonotonicity_2d', relative, min_margin, witness, budget, seed, constants, notes)


def check_polymonotone_3d(m, budget, seed, c_prime=None, cstar=None):
    """
    Monte Carlo test of the 3D polymonotone bound.

    c' defaults to the estimate from estimate_cstar_constants(seed).
    """
    _require_model(m, 3)
    if cstar is None and c_prime is None:
        cstar = estimate_cstar_constants(seed)
    if c_prime is None:
        c_prime = cstar['c_prime']
    hi = CERTIFICATE_DEFAULTS['poly_norm_max']

    def evaluate(rng, size):
        F = sample_matrices(rng, size, 3, 1e-2, hi)
        G = sample_matrices(rng, size, 3, 1e-2, hi)
        lhs, rhs = polymonotone_3d_sides(m, F, G, c_prime)
        return {'margin': lhs - rhs, 'scale': 1.0 + np.abs(lhs) + np.abs(rhs),
                'F': F, 'G': G, 'lhs': lhs, 'rhs': rhs}

    min_margin, relative, witness = _run_batches(evaluate, budget, seed)
    _, d = m.g.bounds()
    constants = {'c_prime': float(c_prime), 'e': m.e, 'd': d}
    notes = {'model': m.to_dict(), 'flags': m.flags}
    if cstar is not None:
        constants['c_star'] = cstar['c_star']
        constants['c_star_star'] = cstar['c_star_star']
        constants['C_star'] = cstar['C_star']
        notes['closedness_window_3d'] = {'value': m.closedness_window_3d(cstar['c_star']),
                                         'label': 'empirical'}
    return _certificate('polymonotonicity_3d', relative, min_margin, witness, budget, seed, constants, notes)


# -- constants of the 3D estimate ---------------------------------------------

def six_monotonicity_ratio(F, G):
    """E(F,G) / ((|F|^4 + |G|^4)|G|^2) with E = (DW_six(F+G) - DW_six(F)).G, W_six = |F|^6/6"""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    FG = F + G
    E = dot(dot(FG, FG)[..., None, None] ** 2 * FG - dot(F, F)[..., None, None] ** 2 * F, G)
    g2 = dot(G, G)
    return E / ((dot(F, F) ** 2 + g2 ** 2) * g2)


def six_hessian_form(F, H):
    """D^2 W_six(F)(H, H) = 4|F|^2 (F.H)^2 + |F|^4 |H|^2"""
    f2 = dot(F, F)
    return 4.0 * f2 * dot(F, H) ** 2 + f2 ** 2 * dot(H, H)


def remainder_ratio(F, G):
    """|det(F+G)| (|F|/sqrt3 + 2|G|/3^1.5) / (|F|^4 + |G|^4), the ratio bounded by C*"""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    nf, ng = frobenius_norm(F), frobenius_norm(G)
    return np.abs(det(F + G)) * (nf / np.sqrt(3.0) + 2.0 * ng / 3.0 ** 1.5) / (nf ** 4 + ng ** 4)


def _split(x):
    return x[:9].reshape(3, 3), x[9:].reshape(3, 3)


def _extremize(fn, seed, budget, sign, starts=8):
    """Sample the unit sphere in R^18, then locally refine the best samples"""
    rng = np.random.default_rng([seed, 104729])
    X = rng.standard_normal((budget, 18))
    X /= np.linalg.norm(X, axis=1)[:, None]
    keep = np.linalg.norm(X[:, 9:], axis=1) > 1e-3
    X = X[keep]
    values = sign * fn(X[:, :9].reshape(-1, 3, 3), X[:, 9:].reshape(-1, 3, 3))
    best_value = float(np.min(values))
    for k in np.argsort(values)[:starts]:
        res = minimize(lambda x: sign * float(fn(*_split(x / np.linalg.norm(x)))),
                       X[k], method='Nelder-Mead',
                       options={'maxiter': 20000, 'xatol': 1e-10, 'fatol': 1e-14})
        if np.isfinite(res.fun) and res.fun < best_value:
            best_value = float(res.fun)
    return sign * best_value


def estimate_cstar_constants(seed=0, budget=20000):
    """
    Numerical estimates of the non-explicit 3D constants.

    c**: min of E(F,G)/((|F|^4+|G|^4)|G|^2) on |F|^2+|G|^2 = 1
    C*:  max of the remainder ratio bounding |R_2| / (d |G|^2 (|F|^4+|G|^4))
    c' = c**/2, c* = c**/(2 C*)
    """
    c_ss = _extremize(six_monotonicity_ratio, seed, budget, sign=1.0)
    C_s = _extremize(remainder_ratio, seed, budget, sign=-1.0)
    constants = {
        'c_star_star': c_ss,
        'c_prime': 0.5 * c_ss,
        'C_star': C_s,
        'c_star': 0.5 * c_ss / C_s,
        'seed': int(seed),
        'budget': int(budget),
        'label': 'empirical',
    }
    logger.info(f"Estimated c**={c_ss:.6g}, C*={C_s:.6g}, c*={constants['c_star']:.6g}")
    return constants


# -- quasimonotonicity --------------------------------------------------------

def _bump(t, margin):
    """Smooth bump supported in (margin, 1 - margin) and its derivative"""
    s = (2.0 * t - 1.0) / (1.0 - 2.0 * margin)
    inside = np.abs(s) < 1.0
    one_minus = np.where(inside, 1.0 - s * s, 1.0)
    value = np.where(inside, np.exp(1.0 - 1.0 / one_minus), 0.0)
    ds_dt = 2.0 / (1.0 - 2.0 * margin)
    deriv = np.where(inside, value * (-2.0 * s / one_minus ** 2) * ds_dt, 0.0)
    return value, deriv


def cell_midpoints(n, grid):
    if grid < 8:
        raise ValueError(f"quadrature grid must be >= 8, got {grid}")
    axis = (np.arange(grid) + 0.5) / grid
    mesh = np.meshgrid(*([axis] * n), indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=1)


def random_test_gradient(rng, n, grid, amplitude):
    """
    Gradient D(phi) at the cell midpoints of a bump-modulated sum of
    up to five Fourier modes, phi vanishing near the cube boundary.
    Scaled so that max |D phi| = amplitude.
    """
    x = cell_midpoints(n, grid)
    margin = CERTIFICATE_DEFAULTS['bump_margin']
    modes = int(rng.integers(1, CERTIFICATE_DEFAULTS['quasimonotone_modes'] + 1))
    waves = rng.integers(-3, 4, size=(modes, n))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=modes)
    amps = rng.standard_normal((modes, n))

    arg = 2.0 * np.pi * x @ waves.T + phases          # (cells, modes)
    m = np.sin(arg) @ amps                              # (cells, n)
    Dm = np.einsum('cm,mj,mi->cji', np.cos(arg), amps, 2.0 * np.pi * waves)

    values, derivs = _bump(x, margin)                   # (cells, n) each
    b = np.prod(values, axis=1)
    grad_b = np.empty_like(x)
    for i in range(n):
        others = np.prod(np.delete(values, i, axis=1), axis=1)
        grad_b[:, i] = derivs[:, i] * others

    Dphi = m[:, :, None] * grad_b[:, None, :] + b[:, None, None] * Dm
    peak = np.max(frobenius_norm(Dphi))
    return Dphi * (amplitude / peak) if peak > 0 else Dphi


def gap_function(spec):
    """B(F, G) from {'kind': 'quadratic'|'sextic', 'coef': c}: c|G|^2 or c|G|^6"""
    kind, coef = spec['kind'], float(spec['coef'])
    power = {'quadratic': 1, 'sextic': 3}[kind]
    return lambda G: coef * dot(G, G) ** power


def default_gap(m, seed, cstar=None):
    if not isinstance(m, EnergyModel):
        raise ValueError("a gap B(F,G) is required for laws without a generating model")
    if m.n == 2:
        b, _ = m.g.bounds()
        return {'kind': 'quadratic', 'coef': 1.0 - 0.5 * b}
    cstar = cstar or estimate_cstar_constants(seed)
    return {'kind': 'sextic', 'coef': cstar['c_prime'] * m.e}


def quasimonotone_sides(law, F, Dphi, grid, gap):
    """
    Left: sum_cells h^n (T(F + D phi) - T(F)).D phi
    Right: sum_cells h^n B(F, D phi)
    """
    F = np.asarray(F, dtype=float)
    Dphi = np.asarray(Dphi, dtype=float)
    weight = (1.0 / grid) ** law.n
    lhs = weight * np.sum(dot(law(F + Dphi) - law(F), Dphi), axis=-1)
    rhs = weight * np.sum(gap_function(gap)(Dphi), axis=-1)
    return lhs, rhs


def check_quasimonotone(T, n, grid, budget, seed, gap=None, cstar=None):
    law = as_stress_law(T, n)
    if law.n != n:
        raise ValueError(f"law dimension {law.n} differs from n={n}")
    if grid is None:
        grid = CERTIFICATE_DEFAULTS['quasimonotone_grid'][n]
    cell_midpoints(n, grid)
    gap = gap or default_gap(law.model, seed, cstar)

    def evaluate(rng, size):
        F = sample_matrices(rng, size, n, 1e-2, CERTIFICATE_DEFAULTS['poly_norm_max'])
        amplitudes = np.exp(rng.uniform(np.log(1e-2), np.log(3.0), size=size))
        Dphi = np.stack([random_test_gradient(rng, n, grid, amplitudes[k]) for k in range(size)])
        lhs, rhs = quasimonotone_sides(law, F[:, None], Dphi, grid, gap)
        return {'margin': lhs - rhs, 'scale': 1.0 + np.abs(lhs) + np.abs(rhs),
                'F': F, 'Dphi': Dphi, 'lhs': lhs, 'rhs': rhs}

    min_margin, relative, witness = _run_batches(evaluate, budget, seed, batch_size=32)
    constants = {'grid': int(grid), 'gap': gap}
    notes = {'law': law.name, 'test_fields': 'bump-modulated Fourier modes, midpoint quadrature'}
    return _certificate('quasimonotonicity', relative, min_margin, witness, budget, seed, constants, notes)


# -- growth -------------------------------------------------------------------

def growth_ratio(law, F, G, p):
    """|T(F+G) - T(F)| / ((|F|^(p-2) + |G|^(p-2) + 1)|G|), 0 where G = 0"""
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        num = frobenius_norm(law(F + G) - law(F))
        ng = frobenius_norm(G)
        den = (frobenius_norm(F) ** (p - 2) + ng ** (p - 2) + 1.0) * ng
        ratio = np.where(ng > 0, num / np.where(ng > 0, den, 1.0), 0.0)
    return np.where(np.isnan(ratio), np.inf, ratio)


def growth_sides(law, F, G, p, c_ref):
    """(c_ref (|F|^(p-2)+|G|^(p-2)+1)|G|, |T(F+G) - T(F)|)"""
    with np.errstate(over='ignore', invalid='ignore'):
        ng = frobenius_norm(G)
        bound = c_ref * (frobenius_norm(F) ** (p - 2) + ng ** (p - 2) + 1.0) * ng
        change = frobenius_norm(law(F + G) - law(F))
    return bound, np.where(np.isnan(change), np.inf, change)


def check_growth(T, p, budget, seed, n=None):
    """
    Largest observed growth constant along a radial ladder of |F|.

    Verdict is violated only when the ladder maxima diverge: a non-finite
    ratio, or a top-rung maximum exceeding the first rung's by the
    configured divergence factor.
    """
    _check_exponent(p, minimum=2.0, strict=False)
    law = as_stress_law(T, n)
    ladder = CERTIFICATE_DEFAULTS['growth_ladder']
    per_rung = max(1, budget // len(ladder))

    rung_max = []
    rung_samples = []
    for r, radius in enumerate(ladder):
        def evaluate(rng, size, radius=radius):
            F = sample_matrices(rng, size, law.n, radius, radius)
            G = sample_matrices(rng, size, law.n, 1e-3, 1e3)
            ratio = growth_ratio(law, F, G, p)
            return {'margin': -ratio, 'scale': np.ones(size), 'F': F, 'G': G, 'ratio': ratio}
        neg_max, _, witness = _run_batches(evaluate, per_rung, seed + 7 * r)
        rung_max.append(-neg_max)
        rung_samples.append(witness)

    finite = [v for v in rung_max if np.isfinite(v)]
    c_ref = CERTIFICATE_DEFAULTS['growth_divergence_factor'] * max(rung_max[0], 1e-300)
    worst = int(np.argmax([v if np.isfinite(v) else np.inf for v in rung_max]))
    witness = rung_samples[worst]
    bound, change = growth_sides(law, witness['F'], witness['G'], p, c_ref)
    margin = float(bound - change) if np.isfinite(change) else -np.inf
    diverges = (len(finite) < len(rung_max)) or rung_max[-1] > c_ref
    relative = -np.inf if diverges else 0.0
    witness = {**witness, 'bound': bound, 'change': change}

    constants = {
        'c': max(finite) if finite else np.inf,
        'c_ref': c_ref,
        'ladder': list(ladder),
        'rung_max_ratio': rung_max,
        'p': p,
    }
    return _certificate('growth', relative, margin if diverges else 0.0, witness,
                        per_rung * len(ladder), seed, constants, {'law': law.name})


# -- data-set properties ------------------------------------------------------

def _as_data_set(D):
    if isinstance(D, LocalDataSet):
        return D
    return LocalDataSet.graph(D)


def frame_gap(D, F, P):
    """
    Distance of (F, P) to the data set in sqrt(|dF|^2 + |dP|^2): exact
    |T(F) - P| for graphs, nearest-point distance for clouds.
    """
    if D.kind == 'graph':
        return frobenius_norm(D.law(F) - P)
    _, values = nearest_index(D, DeviationPair.quadratic(1.0), F, P)
    return np.sqrt(2.0 * np.maximum(values, 0.0))


def check_frame_indifference(D, budget, seed):
    D = _as_data_set(D)
    tol = TOLERANCES['frame_indifference']

    def evaluate(rng, size):
        F, P = D.sample_members(size, rng)
        Q = random_rotation(D.n, rng, size=size)
        QF = np.einsum('kij,kjl->kil', Q, F)
        QP = np.einsum('kij,kjl->kil', Q, P)
        gap = frame_gap(D, QF, QP)
        allowed = D.resolution_bound(QF, QP) + tol * (1.0 + np.sqrt(dot(P, P) + dot(F, F)))
        return {'margin': allowed - gap, 'scale': np.ones(size),
                'F': F, 'P': P, 'Q': Q, 'gap': gap, 'allowed': allowed}

    min_margin, relative, witness = _run_batches(evaluate, budget, seed, batch_size=1024)
    constants = {'tolerance': tol, 'orbit_covering_angle': D.metadata.get('orbit_covering_angle', 0.0)}
    return _certificate('frame_indifference', relative, min_margin, witness, budget, seed,
                        constants, {'data_set': D.summary() if D.kind == 'graph' else
                                    {'n': D.n, 'kind': D.kind, 'size': len(D)}})


def check_moment_equilibrium(D, budget, seed):
    D = _as_data_set(D)
    tol = TOLERANCES['moment_equilibrium']
    exhaustive = D.kind == 'cloud' and budget >= len(D)

    def evaluate(rng, size):
        if exhaustive:
            F, P = D.F, D.P
        else:
            F, P = D.sample_members(size, rng)
        residual = moment_residual(F, P)
        allowed = tol * (1.0 + frobenius_norm(F) * frobenius_norm(P))
        return {'margin': allowed - residual, 'scale': np.ones(len(F)),
                'F': F, 'P': P, 'residual': residual}

    samples = len(D) if exhaustive else budget
    min_margin, relative, witness = _run_batches(
        evaluate, samples, seed, batch_size=samples if exhaustive else None)
    constants = {'tolerance': tol}
    return _certificate('moment_equilibrium', relative, min_margin, witness, samples, seed,
                        constants, {'exhaustive': exhaustive})


# -- dispatch and replay ------------------------------------------------------

def certify(subject, prop, budget, seed, p=None, grid=None, c_prime=None, gap=None):
    """Run one certificate by property name"""
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property '{prop}', expected one of {PROPERTIES}")
    if prop == 'coercivity':
        if p is None:
            p = 4.0 if getattr(subject, 'n', 2) == 2 else 6.0
        return check_coercivity(subject, p, budget, seed)
    if prop == 'polymonotonicity_2d':
        return check_polymonotone_2d(subject, budget, seed)
    if prop == 'polymonotonicity_3d':
        return check_polymonotone_3d(subject, budget, seed, c_prime=c_prime)
    if prop == 'quasimonotonicity':
        law = as_stress_law(subject)
        return check_quasimonotone(law, law.n, grid, budget, seed, gap=gap)
    if prop == 'growth':
        if p is None:
            p = 4.0 if getattr(subject, 'n', 2) == 2 else 6.0
        return check_growth(subject, p, budget, seed)
    if prop == 'frame_indifference':
        return check_frame_indifference(subject, budget, seed)
    return check_moment_equilibrium(subject, budget, seed)


# -- margins and replay -------------------------------------------------------

def _margin(sides):
    lhs, rhs = sides
    with np.errstate(invalid='ignore'):
        margin = np.asarray(lhs - rhs, dtype=float)
    return np.where(np.isnan(margin), -np.inf, margin)


def coercivity_margin(T, xi, p, constants):
    return _margin(coercivity_sides(as_stress_law(T), xi, p, constants))


def polymonotone_2d_margin(m, F, G):
    return _margin(polymonotone_2d_sides(m, F, G))


def polymonotone_3d_margin(m, F, G, c_prime):
    return _margin(polymonotone_3d_sides(m, F, G, c_prime))


def quasimonotone_margin(T, F, Dphi, grid, gap):
    return _margin(quasimonotone_sides(as_stress_law(T), F, Dphi, grid, gap))


def growth_margin(T, F, G, p, c_ref):
    return _margin(growth_sides(as_stress_law(T), F, G, p, c_ref))


def frame_indifference_margin(D, F, P, Q, tolerance):
    D = _as_data_set(D)
    QF, QP = Q @ F, Q @ P
    allowed = D.resolution_bound(QF, QP) + tolerance * (1.0 + np.sqrt(dot(P, P) + dot(F, F)))
    return _margin((allowed, frame_gap(D, QF[None], QP[None])[0]))


def moment_margin(F, P, tolerance):
    allowed = tolerance * (1.0 + frobenius_norm(F) * frobenius_norm(P))
    return _margin((allowed, moment_residual(F, P)))


def replay_witness(cert, subject=None):
    """Re-evaluate a violated certificate's witness; returns its margin (< 0 if reproduced)"""
    if cert.witness is None:
        raise ValueError("certificate has no witness")
    w = {k: np.asarray(v, dtype=float) if isinstance(v, list) else v for k, v in cert.witness.items()}
    c = cert.constants_used
    if cert.property == 'coercivity':
        margin = coercivity_margin(subject, w['xi'], c['p'], c)
    elif cert.property == 'polymonotonicity_2d':
        margin = polymonotone_2d_margin(subject, w['F'], w['G'])
    elif cert.property == 'polymonotonicity_3d':
        margin = polymonotone_3d_margin(subject, w['F'], w['G'], c['c_prime'])
    elif cert.property == 'quasimonotonicity':
        margin = quasimonotone_margin(subject, w['F'], w['Dphi'], c['grid'], c['gap'])
    elif cert.property == 'growth':
        margin = growth_margin(subject, w['F'], w['G'], c['p'], c['c_ref'])
    elif cert.property == 'frame_indifference':
        margin = frame_indifference_margin(subject, w['F'], w['P'], w['Q'], c['tolerance'])
    else:
        margin = moment_margin(w['F'], w['P'], c['tolerance'])
    return float(margin)
