# test_material_models.py
"""Checks for the stored-energy families"""

import numpy as np
import pytest

from material_models import (
    ConvexScalarG, EnergyModel, StressLaw, as_stress_law, builtin_law, find_minimizers,
)
from tensor_core import DimensionError, dot, random_rotation, rotation_2d


def _hat_w2():
    return EnergyModel.hat_w2(a=0.25, beta=0.4)


def _hat_w3():
    return EnergyModel.hat_w3(a=0.1, e=0.5, beta=0.5)


def test_construction_rejects_bad_parameters():
    with pytest.raises(ValueError):
        EnergyModel.w2(a=0.0)
    with pytest.raises(ValueError):
        EnergyModel.w3(a=0.1, e=0.0)
    with pytest.raises(ValueError):
        EnergyModel.hat_w2(a=0.25, beta=0.0)
    with pytest.raises(DimensionError):
        EnergyModel(flavor='hatW2', n=3, a=0.25, beta=0.4)
    with pytest.raises(ValueError):
        ConvexScalarG(kind='table', knots=(0.0, 1.0), slopes=(1.0, 0.0))


def test_hat_w2_vanishes_stress_on_rotations():
    m = _hat_w2()
    for theta in np.linspace(0.0, 2 * np.pi, 7):
        Q = rotation_2d(theta)
        assert np.max(np.abs(m.stress(Q))) < 1e-12
        assert abs(m.energy(Q) - 4.0625) < 1e-12


def test_hat_w3_vanishes_stress_on_rotations():
    m = _hat_w3()
    Q = random_rotation(3, 5, size=20)
    assert np.max(np.abs(m.stress(Q))) < 1e-12
    assert np.allclose(m.energy(Q), m.minimum_energy(), atol=1e-12)


def test_minimum_energy_closed_form():
    assert _hat_w2().minimum_energy() == pytest.approx(4.0625, abs=1e-15)
    assert EnergyModel.w2(a=1.0).minimum_energy() is None


def test_frame_indifference():
    rng = np.random.default_rng(11)
    for m in (_hat_w2(), _hat_w3(), EnergyModel.w2(0.5, ConvexScalarG.shifted_quadratic(0.3, 1.2))):
        xi = rng.standard_normal((50, m.n, m.n))
        Q = random_rotation(m.n, 3, size=50)
        rotated = Q @ xi
        assert np.allclose(m.energy(rotated), m.energy(xi), rtol=1e-12)
        assert np.allclose(m.stress(rotated), Q @ m.stress(xi), rtol=1e-11, atol=1e-11)


def _observed_order(exact, approx):
    """log10 of the error ratio between h = 1e-3 and h = 1e-4"""
    errors = [np.linalg.norm(np.ravel(a - exact)) for a in approx]
    return np.log10(errors[0] / errors[1])


def test_stress_is_energy_gradient():
    rng = np.random.default_rng(12)
    for m in (_hat_w2(), _hat_w3()):
        xi = rng.standard_normal((100, m.n, m.n))
        H = rng.standard_normal((100, m.n, m.n))
        H /= np.linalg.norm(H, axis=(1, 2))[:, None, None]
        exact = dot(m.stress(xi), H)
        approx = [(m.energy(xi + h * H) - m.energy(xi - h * H)) / (2 * h) for h in (1e-3, 1e-4)]
        # central differences are second order
        assert _observed_order(exact, approx) >= 1.9


def test_stress_tangent_matches_differences():
    rng = np.random.default_rng(13)
    for m in (_hat_w2(), _hat_w3()):
        xi = rng.standard_normal((100, m.n, m.n))
        H = rng.standard_normal((100, m.n, m.n))
        H /= np.linalg.norm(H, axis=(1, 2))[:, None, None]
        exact = m.stress_tangent(xi, H)
        approx = [(m.stress(xi + h * H) - m.stress(xi - h * H)) / (2 * h) for h in (1e-3, 1e-4)]
        assert _observed_order(exact, approx) >= 1.9


def test_tangent_is_symmetric():
    rng = np.random.default_rng(14)
    for m in (_hat_w2(), _hat_w3()):
        xi, H, K = rng.standard_normal((3, m.n, m.n))
        assert dot(m.stress_tangent(xi, H), K) == pytest.approx(
            dot(m.stress_tangent(xi, K), H), rel=1e-10, abs=1e-10)


def test_table_g_matches_quadratic():
    quad = ConvexScalarG.shifted_quadratic(2.0, 0.5)
    knots = np.linspace(-3.0, 3.0, 13)
    table = ConvexScalarG(kind='table', knots=tuple(knots), slopes=tuple(quad.d1(knots)))
    t = np.linspace(-2.9, 2.9, 31)
    assert np.allclose(table.d1(t), quad.d1(t))
    assert np.allclose(table.value(t) - table.value(0.5), quad.value(t), atol=1e-12)
    assert table.d2(t) is None


def test_flags():
    flags = _hat_w2().flags
    assert flags['coercivity_window'] and flags['polymonotone_window']
    assert flags['closedness_window_2d']
    assert not flags['boundary_case']
    outside = EnergyModel.hat_w2(a=0.25, beta=0.6).flags
    assert not outside['closedness_window_2d']
    assert _hat_w3().closedness_window_3d(c_star=3.0) is True
    with pytest.raises(DimensionError):
        _hat_w2().closedness_window_3d(1.0)


def test_coercivity_lower_bound_holds():
    rng = np.random.default_rng(15)
    m = _hat_w2()
    xi = rng.standard_normal((200, 2, 2)) * rng.uniform(0.1, 10.0, (200, 1, 1))
    assert np.all(dot(xi, m.stress(xi)) >= m.coercivity_lower_bound(xi) - 1e-9)


def test_dict_round_trip():
    for m in (_hat_w2(), _hat_w3(), EnergyModel.w2(0.3, ConvexScalarG.shifted_quadratic(0.1, 1.0))):
        assert EnergyModel.from_dict(m.to_dict()) == m
    with pytest.raises(ValueError):
        EnergyModel.from_dict({'n': 2})


def test_stress_laws():
    law = as_stress_law(_hat_w2())
    assert isinstance(law, StressLaw) and law.n == 2
    neg = builtin_law('negative-identity', 2)
    assert np.array_equal(neg(np.eye(2)), -np.eye(2))
    with pytest.raises(ValueError):
        builtin_law('unknown', 2)
    with pytest.raises(ValueError):
        as_stress_law(lambda xi: xi)
    assert as_stress_law(lambda xi: xi, n=3).n == 3


def test_dimension_mismatch_on_evaluation():
    with pytest.raises(DimensionError):
        _hat_w2().stress(np.eye(3))


def test_find_minimizers_reaches_rotations():
    m = _hat_w2()
    results = find_minimizers(m, starts=100, seed=1)
    assert len(results) == 100
    for r in results:
        assert r['energy'] - m.minimum_energy() <= 1e-8
        assert r['orthogonality_residual'] < 1e-6
    assert m.minimum_energy() == pytest.approx(4.0625, abs=1e-15)


def test_find_minimizers_reaches_3d_rotations():
    m = EnergyModel.hat_w3(a=1.0, e=1.0, beta=0.5)
    results = find_minimizers(m, starts=100, seed=2)
    for r in results:
        assert r['energy'] - m.minimum_energy() <= 1e-8
        assert r['orthogonality_residual'] < 1e-6
        assert np.linalg.det(r['xi']) > 0


TESTS = [
    test_construction_rejects_bad_parameters, test_hat_w2_vanishes_stress_on_rotations,
    test_hat_w3_vanishes_stress_on_rotations, test_minimum_energy_closed_form,
    test_frame_indifference, test_stress_is_energy_gradient, test_stress_tangent_matches_differences,
    test_tangent_is_symmetric, test_table_g_matches_quadratic, test_flags,
    test_coercivity_lower_bound_holds, test_dict_round_trip, test_stress_laws,
    test_dimension_mismatch_on_evaluation, test_find_minimizers_reaches_rotations,
    test_find_minimizers_reaches_3d_rotations,
]


def main():
    """Run every check and print a pass/fail line for each"""
    print("MATERIAL MODEL CHECKS")
    print("=" * 60)
    failed = 0
    for test in TESTS:
        try:
            test()
            print(f"PASS  {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"FAIL  {test.__name__}: {e!r}")
    print(f"\n{len(TESTS) - failed}/{len(TESTS)} passed")
    return failed == 0


if __name__ == "__main__":
    main()
