# material_models.py
"""
Frame-indifferent stored-energy families and their stress functions.

    W(xi) = 1/2 |xi|^2 + 1/4 a |xi|^4 + 1/6 e |xi|^6 + g(det xi)
    T(xi) = DW(xi) = xi + a|xi|^2 xi + e|xi|^4 xi + g'(det xi) cof xi

Flavors:
    W2    n=2, a > 0, any convex g
    W3    n=3, e > 0, any convex g
    hatW2 n=2, g(t) = 1/2 beta (t - 1 - (1+2a)/beta)^2
    hatW3 n=3, g(t) = 1/2 beta (t - 1 - (1+3a+9e)/beta)^2

The hat flavors are minimized exactly on SO(n).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from tensor_core import (
    DimensionError, cof, det, dim_of, dot, frobenius_norm,
    orthogonality_residual, MINOR_COUNT,
)

logger = logging.getLogger('DD-Models')

FLAVORS = ('W2', 'W3', 'hatW2', 'hatW3')


@dataclass(frozen=True)
class ConvexScalarG:
    """
    Convex scalar function g of the determinant.

    kind 'quadratic': g(t) = 1/2 beta (t - t0)^2
    kind 'table': g' piecewise linear through (knots, slopes), constant
    outside the table; g'' is not available for tables.
    """
    kind: str = 'quadratic'
    beta: float = 0.0
    t0: float = 0.0
    knots: tuple = ()
    slopes: tuple = ()

    def __post_init__(self):
        if self.kind == 'quadratic':
            if self.beta < 0:
                raise ValueError(f"g curvature beta must be >= 0, got {self.beta}")
        elif self.kind == 'table':
            t = np.asarray(self.knots, dtype=float)
            s = np.asarray(self.slopes, dtype=float)
            if t.size < 2 or t.shape != s.shape:
                raise ValueError("tabulated g needs at least two (knot, slope) pairs")
            if np.any(np.diff(t) <= 0):
                raise ValueError("tabulated g knots must be strictly increasing")
            if np.any(np.diff(s) < 0):
                raise ValueError("tabulated g' must be non-decreasing (g convex)")
        else:
            raise ValueError(f"unknown g kind '{self.kind}'")

    @classmethod
    def shifted_quadratic(cls, beta, t0):
        return cls(kind='quadratic', beta=float(beta), t0=float(t0))

    @classmethod
    def zero(cls):
        return cls(kind='quadratic', beta=0.0, t0=0.0)

    @property
    def has_second_derivative(self):
        return self.kind == 'quadratic'

    def _table_integrals(self):
        t = np.asarray(self.knots, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * np.diff(t))])
        return t, s, cumulative

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == 'quadratic':
            return 0.5 * self.beta * (t - self.t0) ** 2
        knots, s, cumulative = self._table_integrals()
        k = np.clip(np.searchsorted(knots, t, side='right') - 1, 0, len(knots) - 2)
        dt = t - knots[k]
        slope_rate = (s[k + 1] - s[k]) / (knots[k + 1] - knots[k])
        inside = cumulative[k] + s[k] * dt + 0.5 * slope_rate * dt ** 2
        left = s[0] * (t - knots[0])
        right = cumulative[-1] + s[-1] * (t - knots[-1])
        return np.where(t < knots[0], left, np.where(t > knots[-1], right, inside))

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == 'quadratic':
            return self.beta * (t - self.t0)
        return np.interp(t, np.asarray(self.knots, float), np.asarray(self.slopes, float))

    def d2(self, t):
        if self.kind != 'quadratic':
            return None
        return np.full(np.shape(t), self.beta)

    def bounds(self):
        """Constants (b, d) with |g'(t)| <= b + d|t|"""
        if self.kind == 'quadratic':
            return abs(self.beta * self.t0), self.beta
        return float(np.max(np.abs(self.slopes))), 0.0

    def to_dict(self):
        if self.kind == 'quadratic':
            return {'kind': 'quadratic', 'beta': self.beta, 't0': self.t0}
        return {'kind': 'table', 'knots': list(self.knots), 'slopes': list(self.slopes)}

    @classmethod
    def from_dict(cls, spec):
        if spec is None:
            return cls.zero()
        kind = spec.get('kind', 'quadratic')
        if kind == 'quadratic':
            return cls.shifted_quadratic(spec.get('beta', 0.0), spec.get('t0', 0.0))
        return cls(kind='table', knots=tuple(float(x) for x in spec['knots']),
                   slopes=tuple(float(x) for x in spec['slopes']))


@dataclass(frozen=True)
class EnergyModel:
    flavor: str
    n: int
    a: float = 0.0
    e: float = 0.0
    beta: float = 0.0
    g: ConvexScalarG = field(default_factory=ConvexScalarG.zero)
    flags: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor '{self.flavor}', expected one of {FLAVORS}")
        expected_n = 2 if self.flavor in ('W2', 'hatW2') else 3
        if self.n != expected_n:
            raise DimensionError(f"{self.flavor} requires n={expected_n}, got n={self.n}")
        if self.a < 0 or self.e < 0:
            raise ValueError("coefficients a and e must be nonnegative")
        if self.flavor == 'W2' and not self.a > 0:
            raise ValueError("W2 requires a > 0")
        if self.flavor == 'W3' and not self.e > 0:
            raise ValueError("W3 requires e > 0")
        if self.n == 2 and self.e != 0:
            raise ValueError("the sextic coefficient e is only used for n=3")
        if self.flavor.startswith('hat'):
            if not self.beta > 0:
                raise ValueError(f"{self.flavor} requires beta > 0")
            shift = (1 + 2 * self.a) if self.n == 2 else (1 + 3 * self.a + 9 * self.e)
            object.__setattr__(self, 'g', ConvexScalarG.shifted_quadratic(self.beta, 1.0 + shift / self.beta))
        object.__setattr__(self, 'flags', self._window_flags())

    # -- construction -------------------------------------------------------

    @classmethod
    def hat_w2(cls, a, beta):
        return cls(flavor='hatW2', n=2, a=float(a), beta=float(beta))

    @classmethod
    def hat_w3(cls, a, e, beta):
        return cls(flavor='hatW3', n=3, a=float(a), e=float(e), beta=float(beta))

    @classmethod
    def w2(cls, a, g=None):
        return cls(flavor='W2', n=2, a=float(a), g=g or ConvexScalarG.zero())

    @classmethod
    def w3(cls, a, e, g=None):
        return cls(flavor='W3', n=3, a=float(a), e=float(e), g=g or ConvexScalarG.zero())

    @classmethod
    def from_dict(cls, spec):
        """Build from model JSON, e.g. {"flavor":"hatW2","n":2,"a":0.25,"beta":0.4}"""
        try:
            flavor = spec['flavor']
        except (KeyError, TypeError):
            raise ValueError("model spec needs a 'flavor' field")
        n = int(spec.get('n', 2 if flavor in ('W2', 'hatW2') else 3))
        a = float(spec.get('a', 0.0))
        e = float(spec.get('e', 0.0))
        if flavor.startswith('hat'):
            return cls(flavor=flavor, n=n, a=a, e=e, beta=float(spec.get('beta', 0.0)))
        return cls(flavor=flavor, n=n, a=a, e=e, g=ConvexScalarG.from_dict(spec.get('g')))

    def to_dict(self):
        spec = {'flavor': self.flavor, 'n': self.n, 'a': self.a}
        if self.n == 3:
            spec['e'] = self.e
        if self.flavor.startswith('hat'):
            spec['beta'] = self.beta
        else:
            spec['g'] = self.g.to_dict()
        return spec

    def _window_flags(self):
        b, d = self.g.bounds()
        flags = {'b': b, 'd': d}
        if self.n == 2:
            flags['coercivity_window'] = bool(self.a > 0 and b > 0 and 0 <= d < 2 * self.a)
            flags['polymonotone_window'] = bool(b <= 2 and d <= 3 * self.a)
            flags['boundary_case'] = bool(b == 2)
            if self.flavor == 'hatW2':
                flags['closedness_window_2d'] = bool(0 < self.a <= 0.25 and 0 < self.beta < 2 * self.a)
        else:
            flags['coercivity_window'] = bool(self.e > 0 and b > 0 and 0 <= d < 3 * self.e)
        return flags

    def closedness_window_3d(self, c_star):
        """beta < min(3, c*) e, with c* a numerical estimate (empirical flag)"""
        if self.n != 3:
            raise DimensionError("the 3D closedness window applies to n=3 models")
        _, d = self.g.bounds()
        return bool(d < min(3.0, c_star) * self.e)

    # -- evaluation ---------------------------------------------------------

    def _check(self, xi):
        xi = np.asarray(xi, dtype=float)
        if dim_of(xi) != self.n:
            raise DimensionError(f"{self.flavor} expects {self.n}x{self.n} input, got shape {xi.shape}")
        return xi

    def energy(self, xi):
        xi = self._check(xi)
        s = dot(xi, xi)
        return 0.5 * s + 0.25 * self.a * s ** 2 + self.e * s ** 3 / 6.0 + self.g.value(det(xi))

    def stress(self, xi):
        xi = self._check(xi)
        s = dot(xi, xi)
        scale = 1.0 + self.a * s + self.e * s ** 2
        return scale[..., None, None] * xi + self.g.d1(det(xi))[..., None, None] * cof(xi)

    def stress_tangent(self, xi, H):
        """Directional derivative DT(xi)[H]"""
        xi = self._check(xi)
        H = np.broadcast_to(self._check(H), np.broadcast_shapes(xi.shape, np.shape(H)))
        xi = np.broadcast_to(xi, H.shape)
        if not self.g.has_second_derivative:
            return self._tangent_fd(xi, H)
        s = dot(xi, xi)[..., None, None]
        xh = dot(xi, H)[..., None, None]
        J = det(xi)
        cof_xi = cof(xi)
        out = (1.0 + self.a * s + self.e * s ** 2) * H + (2.0 * self.a + 4.0 * self.e * s) * xh * xi
        out = out + (self.g.d2(J) * dot(cof_xi, H))[..., None, None] * cof_xi
        return out + self.g.d1(J)[..., None, None] * _cof_derivative(xi, H, cof_xi)

    def _tangent_fd(self, xi, H):
        h_norm = frobenius_norm(H)[..., None, None]
        safe = np.where(h_norm > 0, h_norm, 1.0)
        step = 1e-5 * (1.0 + frobenius_norm(xi))[..., None, None] / safe
        diff = (self.stress(xi + step * H) - self.stress(xi - step * H)) / (2.0 * step)
        return np.where(h_norm > 0, diff, 0.0)

    def minimum_energy(self):
        """Closed-form minimum over all matrices (hat flavors only)"""
        a, e, beta = self.a, self.e, self.beta
        if self.flavor == 'hatW2':
            return 2.0 / beta * (a + 0.5) ** 2 + a + 1.0
        if self.flavor == 'hatW3':
            return 1.5 + 2.25 * a + 4.5 * e + (1 + 3 * a + 9 * e) ** 2 / (2.0 * beta)
        return None

    def coercivity_lower_bound(self, xi):
        """
        Analytic lower bound on xi.T(xi):
        n=2: (a - d/2)|xi|^4 - b|xi|^2
        n=3: (e - d/3)|xi|^6 - 3b|det xi|
        """
        xi = self._check(xi)
        b, d = self.g.bounds()
        s = dot(xi, xi)
        if self.n == 2:
            return (self.a - 0.5 * d) * s ** 2 - b * s
        return (self.e - d / 3.0) * s ** 3 - 3.0 * b * np.abs(det(xi))

    def null_lagrangian_coefficients(self, F):
        """
        A(F) in minor-vector layout so that A(F).M(G) is the null-Lagrangian
        part of the polymonotone lower bound.
        """
        F = self._check(F)
        lead = F.shape[:-2]
        A = np.zeros(lead + (MINOR_COUNT[self.n],))
        gF = self.g.d1(det(F))
        if self.n == 2:
            A[..., 4] = gF
        else:
            g0 = self.g.d1(0.0)
            A[..., 9:18] = ((gF + g0)[..., None, None] * F).reshape(lead + (9,))
            A[..., 18] = gF + 2.0 * g0
        return A

    def as_stress_law(self):
        return StressLaw(fn=self.stress, n=self.n, name=self.flavor, model=self)


@dataclass(frozen=True)
class StressLaw:
    """A stress function T acting on (..., n, n) arrays"""
    fn: object
    n: int
    name: str = 'custom'
    model: object = None

    def __call__(self, xi):
        return self.fn(np.asarray(xi, dtype=float))


def as_stress_law(obj, n=None):
    """Accept an EnergyModel, a StressLaw or a bare callable plus n"""
    if isinstance(obj, StressLaw):
        return obj
    if isinstance(obj, EnergyModel):
        return obj.as_stress_law()
    if callable(obj):
        if n is None:
            n = getattr(obj, 'n', None)
        if n is None:
            raise ValueError("a bare stress callable needs its dimension n")
        return StressLaw(fn=obj, n=int(n), name=getattr(obj, '__name__', 'custom'))
    raise TypeError(f"cannot interpret {type(obj).__name__} as a stress law")


def _negative_identity(xi):
    return -np.asarray(xi, dtype=float)


def _exponential_norm(xi):
    xi = np.asarray(xi, dtype=float)
    with np.errstate(over='ignore'):
        return np.exp(frobenius_norm(xi))[..., None, None] * xi


# Reference laws that fail coercivity and growth respectively
BUILTIN_LAWS = {
    'negative-identity': _negative_identity,
    'exponential-norm': _exponential_norm,
}


def builtin_law(name, n):
    if name not in BUILTIN_LAWS:
        raise ValueError(f"unknown law '{name}', expected one of {sorted(BUILTIN_LAWS)}")
    if n not in (2, 3):
        raise DimensionError(f"law dimension must be 2 or 3, got {n}")
    return StressLaw(fn=BUILTIN_LAWS[name], n=int(n), name=name)


def energy(m, xi):
    return m.energy(xi)


def stress(m, xi):
    return m.stress(xi)


def stress_tangent(m, xi, H):
    return m.stress_tangent(xi, H)


def _cof_derivative(xi, H, cof_xi):
    """D cof(xi)[H]: cof H for n=2; for n=3 cof is quadratic, so cof(xi+H) - cof xi - cof H"""
    if xi.shape[-1] == 2:
        return cof(H)
    return cof(xi + H) - cof_xi - cof(H)


def _hessian(model, xi):
    n = model.n
    basis = np.eye(n * n).reshape(n * n, n, n)
    cols = model.stress_tangent(np.broadcast_to(xi, basis.shape), basis)
    return cols.reshape(n * n, n * n).T


def find_minimizers(model, starts=100, seed=0, radius=3.0, polish_steps=8):
    """
    Multi-start local minimization of the stored energy.

    Each start is drawn with |xi0| <= radius, descended with BFGS and
    polished with pseudo-inverse Newton steps (the Hessian is singular
    along the rotation orbit).

    Returns:
    --------
    list of dict
        One record per start: xi, energy, orthogonality_residual, gradient_norm
    """
    n = model.n
    rng = np.random.default_rng(seed)
    results = []

    def objective(x):
        xi = x.reshape(n, n)
        return float(model.energy(xi)), model.stress(xi).ravel()

    for k in range(starts):
        direction = rng.standard_normal((n, n))
        x0 = direction / np.linalg.norm(direction) * radius * rng.uniform(0.05, 1.0)
        res = minimize(objective, x0.ravel(), jac=True, method='BFGS',
                       options={'gtol': 1e-10, 'maxiter': 5000})
        xi = res.x.reshape(n, n)
        current = float(model.energy(xi))
        for _ in range(polish_steps):
            grad = model.stress(xi).ravel()
            if np.linalg.norm(grad) < 1e-14:
                break
            step = np.linalg.lstsq(_hessian(model, xi), -grad, rcond=1e-10)[0]
            trial = xi + step.reshape(n, n)
            trial_energy = float(model.energy(trial))
            if trial_energy > current + 1e-13 * abs(current):
                break
            xi, current = trial, trial_energy
        results.append({
            'start': k,
            'xi': xi,
            'energy': current,
            'orthogonality_residual': float(orthogonality_residual(xi)),
            'gradient_norm': float(np.linalg.norm(model.stress(xi))),
        })

    logger.info(f"Multi-start minimization of {model.flavor}: {starts} starts, "
                f"lowest energy {min(r['energy'] for r in results):.12g}")
    return results
