# test_tensor_core.py
"""Checks for the small-matrix algebra"""

import numpy as np
import pytest

from tensor_core import (
    DimensionError, cof, cof_increment_defect, det, det_expansion_defect, dot,
    frobenius_norm, minors, moment_residual, orthogonality_residual,
    polar_rotation_part, random_rotation, rotation_2d,
)


def test_dot_examples():
    assert dot(np.eye(2), np.eye(2)) == 2.0
    assert dot(np.arange(4.0).reshape(2, 2), np.zeros((2, 2))) == 0.0
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]])
    e22 = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert dot(e11, e22) == 0.0


def test_dot_is_symmetric_and_matches_norm():
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 50, 3, 3))
    assert np.allclose(dot(A, B), dot(B, A))
    assert np.allclose(dot(A, A), frobenius_norm(A) ** 2)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        dot(np.eye(2), np.eye(3))
    with pytest.raises(DimensionError):
        det(np.eye(4))


def test_cof_examples():
    assert np.array_equal(cof(np.eye(2)), np.eye(2))
    assert np.array_equal(cof(np.diag([2.0, 3.0])), np.diag([3.0, 2.0]))
    assert np.array_equal(cof(np.diag([1.0, 2.0, 3.0])), np.diag([6.0, 3.0, 2.0]))
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(cof(A), np.array([[4.0, -3.0], [-2.0, 1.0]]))


def test_cof_identities():
    rng = np.random.default_rng(1)
    for n in (2, 3):
        A = rng.standard_normal((100, n, n))
        scale = 1.0 + frobenius_norm(A) ** n
        assert np.all(np.abs(dot(A, cof(A)) - n * det(A)) <= 1e-12 * scale)
        invertible = np.abs(det(A)) > 1e-3
        expected = det(A)[:, None, None] * np.linalg.inv(A).transpose(0, 2, 1)
        assert np.allclose(cof(A)[invertible], expected[invertible], atol=1e-10)


def test_det_and_cof_expansions():
    rng = np.random.default_rng(2)
    for n in (2, 3):
        A, B = rng.standard_normal((2, 200, n, n))
        scale = (1.0 + frobenius_norm(A) + frobenius_norm(B)) ** n
        assert np.all(np.abs(det_expansion_defect(A, B)) <= 1e-12 * scale)
        assert np.all(np.abs(cof_increment_defect(A, B)) <= 1e-12 * scale)


def test_minors_layout():
    assert np.array_equal(minors(np.zeros((2, 2))), np.zeros(5))
    assert np.array_equal(minors(np.eye(2)), np.array([1.0, 0.0, 0.0, 1.0, 1.0]))
    m3 = minors(np.eye(3))
    assert m3.shape == (19,)
    assert np.array_equal(m3[:9], np.eye(3).ravel())
    assert np.array_equal(m3[9:18], np.eye(3).ravel())
    assert m3[18] == 1.0


def test_rotation_examples():
    assert np.allclose(rotation_2d(0.0), np.eye(2), atol=0.0)
    assert np.allclose(rotation_2d(np.pi / 2), np.array([[0.0, -1.0], [1.0, 0.0]]), atol=1e-16)


def test_random_rotation_is_special_orthogonal():
    for n in (2, 3):
        Q = random_rotation(n, 42)
        assert orthogonality_residual(Q) < 1e-14
        assert abs(det(Q) - 1.0) < 1e-14
        assert np.array_equal(Q, random_rotation(n, 42))
        batch = random_rotation(n, 7, size=500)
        assert np.all(orthogonality_residual(batch) < 1e-14)
        assert np.all(np.abs(det(batch) - 1.0) < 1e-14)
    with pytest.raises(DimensionError):
        random_rotation(4, 0)


def test_polar_rotation_part():
    assert np.allclose(polar_rotation_part(np.eye(2)), np.eye(2))
    assert np.allclose(polar_rotation_part(2.0 * np.eye(2)), np.eye(2))
    Q = rotation_2d(0.7)
    U = np.array([[2.0, 0.3], [0.3, 1.5]])
    assert np.allclose(polar_rotation_part(Q @ U), Q, atol=1e-12)
    with pytest.raises(ValueError):
        polar_rotation_part(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        polar_rotation_part(np.diag([1.0, -1.0]))


def test_moment_residual():
    assert moment_residual(np.eye(2), np.eye(2)) == 0.0
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert moment_residual(np.eye(2), e12) > 0.0
    rng = np.random.default_rng(3)
    F = rng.standard_normal((10, 3, 3))
    S = rng.standard_normal((10, 3, 3))
    S = S + S.transpose(0, 2, 1)
    # P = S F^{-T} gives P F^T = S symmetric
    P = S @ np.linalg.inv(F).transpose(0, 2, 1)
    assert np.all(moment_residual(F, P) < 1e-9 * (1.0 + frobenius_norm(S)))


TESTS = [
    test_dot_examples, test_dot_is_symmetric_and_matches_norm, test_dimension_mismatch_raises,
    test_cof_examples, test_cof_identities, test_det_and_cof_expansions, test_minors_layout,
    test_rotation_examples, test_random_rotation_is_special_orthogonal,
    test_polar_rotation_part, test_moment_residual,
]


def main():
    """Run every check and print a pass/fail line for each"""
    print("TENSOR CORE CHECKS")
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
