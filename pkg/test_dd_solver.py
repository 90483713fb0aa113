# test_dd_solver.py
"""Checks for the alternating Data-Driven solver and the convergence study"""

import json

import numpy as np
import pytest

from dd_solver import (
    GENERALIZED, NON_CONVERGED, STRONG, DDConfig, SolveReport, branch_agreement,
    classify_solution, solve_dd, study_box, study_convergence,
)
from fem_core import lumped_l2_norm, load_problem, solve_classical, square_mesh, stretch_bc
from material_data import DeviationPair, LocalDataSet, augment_orbit, orbit_rotations, sample_graph
from material_models import EnergyModel

STRETCH_BC = {'g_D': [{'side': 'left', 'A': np.eye(2).tolist()},
                      {'side': 'right', 'A': np.eye(2).tolist(), 'c': [0.2, 0.0]}]}


def _model():
    return EnergyModel.hat_w2(a=0.25, beta=0.4)


def _stretch(N=4):
    return load_problem(square_mesh(N), STRETCH_BC)


def test_zero_singleton_is_strong():
    mp = load_problem(square_mesh(3))
    D = LocalDataSet.from_states(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)))
    report = solve_dd(mp, D, DDConfig(seed=0, init='random-data-assignment'))
    assert report.classification == STRONG
    assert report.J == 0.0
    assert report.iterations == 1


def test_incompatible_singleton_is_generalized():
    mp = load_problem(square_mesh(3), {'g_D': {'A': np.eye(2).tolist()}})
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]])
    D = LocalDataSet.from_states(np.eye(2)[None], e12[None])
    report = solve_dd(mp, D, DDConfig(seed=0, init='random-data-assignment'))
    assert report.classification == GENERALIZED
    assert report.stagnated
    assert report.J > report.tol_J
    assert np.allclose(report.fields.F, np.eye(2))


def test_iteration_cap_gives_non_converged():
    mp = _stretch()
    D = sample_graph(_model(), 0.3, 200, seed=1)
    report = solve_dd(mp, D, DDConfig(seed=2, max_outer=1, init='random-data-assignment'))
    assert report.classification == NON_CONVERGED
    assert report.iterations == 1


def test_data_holding_the_classical_states_is_strong():
    mp = _stretch()
    u, F, P = solve_classical(mp, _model())
    D = LocalDataSet.from_states(F, P)
    report = solve_dd(mp, D, DDConfig(seed=0, init='classical-warm-start'), classical=(u, F, P))
    assert report.classification == STRONG
    assert lumped_l2_norm(mp, report.fields.u - u) < 1e-9
    assert branch_agreement(report) < 1e-8


def test_graph_data_set_recovers_the_classical_solution():
    mp = _stretch()
    classical = solve_classical(mp, _model())
    report = solve_dd(mp, LocalDataSet.graph(_model()), DDConfig(seed=0, model=_model()))
    assert report.init == 'classical-warm-start'
    assert report.classification == STRONG
    assert lumped_l2_norm(mp, report.fields.u - classical[0]) < 1e-9


def test_history_is_non_increasing():
    mp = _stretch()
    D = sample_graph(_model(), 0.3, 2000, seed=3)
    report = solve_dd(mp, D, DDConfig(seed=4, init='random-data-assignment'))
    history = report.J_history
    assert report.monotone
    assert all(b <= a + 1e-12 * (1.0 + a) for a, b in zip(history, history[1:]))
    assert report.diagnostics['projection_residual'] < 1e-9


def test_more_data_lowers_J():
    table = study_convergence(_stretch(), _model(), [100, 10000], seed=5)
    assert list(table['count']) == [100, 10000]
    assert table['J'].iloc[1] <= table['J'].iloc[0]
    assert set(table.columns) >= {'u_error_l2', 'delta_gap', 'noise_deviation'}
    assert np.all(table['noise_deviation'] == 0.0)


def test_report_round_trip():
    mp = _stretch()
    D = sample_graph(_model(), 0.3, 300, seed=6)
    report = solve_dd(mp, D, DDConfig(seed=7, model=_model()))
    data = json.loads(json.dumps(report.to_dict(include_fields=True, timing=True)))
    restored = SolveReport.from_dict(data)
    assert restored.J_history == report.J_history
    assert restored.classification == report.classification
    assert np.allclose(restored.fields.u, report.fields.u)
    assert np.allclose(restored.P_data, report.P_data)
    assert data['J_nonincreasing'] is True
    assert 'wall_time' in data
    assert 'wall_time' not in report.to_dict()
    with pytest.raises(ValueError):
        SolveReport.from_dict({'classification': STRONG})


def test_classify_solution():
    report = SolveReport(J_history=[1.0, 0.5], classification=None, iterations=2, tol_J=0.1,
                         stagnated=False, monotone=True, init='zero-state')
    assert classify_solution(report) == NON_CONVERGED
    assert classify_solution(report, tol_J=0.5) == STRONG
    report.stagnated = True
    assert classify_solution(report) == GENERALIZED


def test_config_validation():
    with pytest.raises(ValueError):
        DDConfig.from_dict({'max_outer': 10})
    with pytest.raises(ValueError):
        DDConfig(init='warm')
    with pytest.raises(ValueError):
        DDConfig(max_outer=0)
    cfg = DDConfig.from_dict({'seed': 3, 'deviation': {'form': 'quadratic', 'C': 2.0}, 'tol_J': 1e-6})
    assert cfg.dev.C == 2.0 and cfg.resolved_tol(_stretch()) == 1e-6
    assert DDConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_solver_input_errors():
    mp = _stretch()
    D = sample_graph(_model(), 0.3, 50, seed=8)
    with pytest.raises(ValueError):
        solve_dd(mp, D, DDConfig(dev=DeviationPair.power(4.0)))
    D3 = sample_graph(EnergyModel.hat_w3(a=0.1, e=0.5, beta=0.5), 0.3, 50, seed=8)
    with pytest.raises(ValueError):
        solve_dd(mp, D3)
    with pytest.raises(ValueError):
        solve_dd(mp, LocalDataSet.from_states(D.F, D.P), DDConfig(init='classical-warm-start'))


def test_study_box_spans_the_states():
    F = np.array([np.eye(2), 2.0 * np.eye(2)])
    center, half = study_box(F, factor=1.0)
    assert np.allclose(center, 1.5 * np.eye(2))
    assert np.allclose(half, np.where(np.eye(2) > 0, 0.5, 1e-3))


def test_study_on_the_stretch_benchmark_converges():
    mp = load_problem(square_mesh(8), stretch_bc(0.04))
    table = study_convergence(mp, _model(), [100, 1000, 10000], seed=0)
    assert list(table['count']) == [100, 1000, 10000]
    J = table['J'].to_numpy()
    gap = table['delta_gap'].to_numpy()
    assert J[1] < J[0] and J[2] < J[1]
    assert gap[1] <= gap[0] and gap[2] <= gap[1]


def test_dd_solve_is_translation_invariant():
    shift = np.array([0.3, -0.1])
    D = sample_graph(_model(), 0.3, 500, seed=12)
    plain = solve_dd(load_problem(square_mesh(4), stretch_bc(0.04)), D, DDConfig(seed=0, model=_model()))
    moved = solve_dd(load_problem(square_mesh(4), stretch_bc(0.04, shift=shift)), D,
                     DDConfig(seed=0, model=_model()))
    assert moved.J == pytest.approx(plain.J, rel=1e-9, abs=1e-14)
    assert np.allclose(moved.fields.u, plain.fields.u + shift, atol=1e-8)
    assert np.allclose(moved.F_data, plain.F_data) and np.allclose(moved.P_data, plain.P_data)


def test_rotated_problem_with_orbit_data_gives_rotated_solution():
    m_rot = 4
    Q = orbit_rotations(2, m_rot)[1]
    D = augment_orbit(sample_graph(_model(), 0.3, 500, seed=13), m_rot)
    plain = solve_dd(load_problem(square_mesh(4), stretch_bc(0.04)), D, DDConfig(seed=0, model=_model()))
    turned = solve_dd(load_problem(square_mesh(4), stretch_bc(0.04, rotation=Q)), D,
                      DDConfig(seed=0, model=_model()))
    assert turned.J == pytest.approx(plain.J, rel=1e-9, abs=1e-14)
    assert np.allclose(turned.fields.u, plain.fields.u @ Q.T, atol=1e-8)
    assert np.allclose(turned.P_data, Q @ plain.P_data, atol=1e-10)
    assert turned.classification == plain.classification


TESTS = [
    test_zero_singleton_is_strong, test_incompatible_singleton_is_generalized,
    test_iteration_cap_gives_non_converged, test_data_holding_the_classical_states_is_strong,
    test_graph_data_set_recovers_the_classical_solution, test_history_is_non_increasing,
    test_more_data_lowers_J, test_report_round_trip, test_classify_solution,
    test_config_validation, test_solver_input_errors, test_study_box_spans_the_states,
    test_study_on_the_stretch_benchmark_converges, test_dd_solve_is_translation_invariant,
    test_rotated_problem_with_orbit_data_gives_rotated_solution,
]


def main():
    """Run every check and print a pass/fail line for each"""
    print("DATA-DRIVEN SOLVER CHECKS")
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
