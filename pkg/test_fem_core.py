# test_fem_core.py
"""Checks for the P1/P0 discretization, projections and the Newton reference solve"""

import numpy as np
import pytest

from fem_core import (
    MeshError, _accept_step, boundary_reaction, curl_residual, div_residual, duality_defect,
    equilibrium_residual, load_problem, project_compatible, project_equilibrium,
    solve_classical, square_mesh, stretch_bc, total_energy,
)
from material_data import DeviationPair
from material_models import EnergyModel
from tensor_core import rotation_2d

STRETCH_BC = {'g_D': [{'side': 'left', 'A': np.eye(2).tolist()},
                      {'side': 'right', 'A': np.eye(2).tolist(), 'c': [0.2, 0.0]}]}


def _model():
    return EnergyModel.hat_w2(a=0.25, beta=0.4)


def _loaded_problem(N=1):
    bc = {'g_D': {'A': [[1.0, 0.0], [0.0, 1.0]], 'c': [0.0, 0.0]}, 'f': [0.3, -0.2], 'h_N': [0.1, 0.0]}
    return load_problem(square_mesh(N, ('left',)), bc)


def test_square_mesh_geometry():
    mp = load_problem(square_mesh(3))
    assert mp.num_nodes == 16 and mp.num_elements == 18
    assert np.sum(mp.areas) == pytest.approx(1.0)
    assert len(mp.dirichlet_edges) == 6 and len(mp.neumann_edges) == 6
    assert len(mp.interior_edges()) == 3 * 18 // 2 - 6
    normals = mp.outward_normals(mp.dirichlet_edges)
    left = mp.nodes[mp.dirichlet_edges[:, 0], 0] == 0.0
    assert np.allclose(normals[left], [-1.0, 0.0]) and np.allclose(normals[~left], [1.0, 0.0])


def test_invalid_meshes_raise():
    mesh = square_mesh(2)
    with pytest.raises(MeshError):
        load_problem({**mesh, 'dirichlet_edges': []})
    with pytest.raises(MeshError):
        load_problem({**mesh, 'neumann_edges': mesh['neumann_edges'][1:]})
    flipped = [list(reversed(t)) if k == 0 else t for k, t in enumerate(mesh['triangles'])]
    with pytest.raises(MeshError):
        load_problem({**mesh, 'triangles': flipped})
    with pytest.raises(MeshError):
        square_mesh(2, ('left', 'front'))
    with pytest.raises(MeshError):
        load_problem(mesh, {'h_N': [[1.0, 0.0]] * 3})


def test_load_vector_totals():
    mp = _loaded_problem(4)
    l = mp.load_vector().reshape(-1, 2)
    neumann_length = 3.0
    assert np.allclose(l.sum(axis=0), [0.3 + 0.1 * neumann_length, -0.2])


def test_compatible_projection_reproduces_affine_fields():
    A = np.array([[1.1, 0.2], [-0.1, 0.9]])
    mp = load_problem(square_mesh(4), {'g_D': {'A': A.tolist()}})
    dev = DeviationPair.quadratic(3.0)
    u, F = project_compatible(mp, np.broadcast_to(A, (mp.num_elements, 2, 2)), dev)
    assert np.allclose(u, mp.nodes @ A.T, atol=1e-12)
    assert np.allclose(F, A, atol=1e-12)
    assert curl_residual(mp, F) < 1e-12


def test_equilibrium_projection_keeps_equilibrated_constants():
    mp = load_problem(square_mesh(4))
    # traction-free top and bottom need P e2 = 0
    P0 = np.array([[2.0, 0.0], [0.5, 0.0]])
    P, lam = project_equilibrium(mp, np.broadcast_to(P0, (mp.num_elements, 2, 2)), DeviationPair.quadratic())
    assert np.allclose(P, P0, atol=1e-12)
    assert np.allclose(lam, 0.0, atol=1e-12)


def test_projections_match_dense_kkt():
    mp = _loaded_problem(1)
    C = 2.0
    dev = DeviationPair.quadratic(C)
    rng = np.random.default_rng(30)
    Fstar, Pstar = rng.standard_normal((2, mp.num_elements, 2, 2))
    B = mp.B.toarray()
    W = mp.weights
    free, fixed = mp.free, mp.fixed

    u, _ = project_compatible(mp, Fstar, dev)
    u_d = mp.g_D.ravel()[fixed]
    root_w = np.sqrt(W)[:, None]
    target = np.sqrt(W) * (Fstar.ravel() - B[:, fixed] @ u_d)
    u_f = np.linalg.lstsq(root_w * B[:, free], target, rcond=None)[0]
    assert np.allclose(u.ravel()[free], u_f, atol=1e-12)
    assert np.allclose(u.ravel()[fixed], u_d)

    P, _ = project_equilibrium(mp, Pstar, dev)
    Bf = B[:, free]
    m, k = len(W), Bf.shape[1]
    kkt = np.zeros((m + k, m + k))
    kkt[:m, :m] = np.diag(W / C)
    kkt[:m, m:] = -W[:, None] * Bf
    kkt[m:, :m] = Bf.T * W[None, :]
    rhs = np.concatenate([W * Pstar.ravel() / C, mp.load_vector()[free]])
    P_dense = np.linalg.solve(kkt, rhs)[:m]
    assert np.allclose(P.ravel(), P_dense, atol=1e-12)


def test_projections_are_idempotent():
    mp = _loaded_problem(4)
    dev = DeviationPair.quadratic(1.5)
    rng = np.random.default_rng(31)
    Fstar, Pstar = rng.standard_normal((2, mp.num_elements, 2, 2))
    u, F = project_compatible(mp, Fstar, dev)
    u2, F2 = project_compatible(mp, F, dev)
    assert np.allclose(u, u2, atol=1e-12) and np.allclose(F, F2, atol=1e-12)
    P, _ = project_equilibrium(mp, Pstar, dev)
    P2, lam2 = project_equilibrium(mp, P, dev)
    assert np.allclose(P, P2, atol=1e-12)
    assert div_residual(mp, P) < 1e-10


def test_projections_need_quadratic_deviation():
    mp = load_problem(square_mesh(2))
    with pytest.raises(ValueError):
        project_compatible(mp, np.zeros((mp.num_elements, 2, 2)), DeviationPair.power(4.0))


def test_duality_for_equilibrated_stress():
    mp = _loaded_problem(4)
    rng = np.random.default_rng(32)
    P, _ = project_equilibrium(mp, rng.standard_normal((mp.num_elements, 2, 2)), DeviationPair.quadratic())
    u = mp.nodes + 0.1 * rng.standard_normal(mp.nodes.shape)
    assert duality_defect(mp, u, P) < 1e-10
    assert np.allclose(boundary_reaction(mp, P)[~np.isin(np.arange(mp.num_nodes), mp.dirichlet_nodes)], 0.0)


def test_curl_residual():
    mp = load_problem(square_mesh(4))
    rng = np.random.default_rng(33)
    const = np.broadcast_to(rng.standard_normal((2, 2)), (mp.num_elements, 2, 2))
    assert curl_residual(mp, const) == 0.0
    assert curl_residual(mp, mp.gradient(rng.standard_normal((mp.num_nodes, 2)))) < 1e-10
    assert curl_residual(mp, rng.standard_normal((mp.num_elements, 2, 2))) > 0.1


def test_classical_solve_of_a_rigid_rotation():
    Q = rotation_2d(0.3)
    mp = load_problem(square_mesh(4), {'g_D': {'A': Q.tolist()}})
    rng = np.random.default_rng(34)
    u0 = mp.nodes @ Q.T + 0.01 * rng.standard_normal(mp.nodes.shape)
    u, F, P, info = solve_classical(mp, _model(), u0=u0, return_info=True)
    assert np.allclose(F, Q, atol=1e-6)
    assert np.max(np.abs(P)) < 1e-6
    assert info['iterations'] > 0
    assert info['residual_history'][-1] <= 1e-10


def test_classical_identity_needs_no_iterations():
    mp = load_problem(square_mesh(3), {'g_D': {'A': np.eye(2).tolist()}})
    u, F, P, info = solve_classical(mp, _model(), return_info=True)
    assert info['iterations'] == 0
    assert np.allclose(u, mp.nodes)


def test_stretch_solution_is_point_symmetric():
    mp = load_problem(square_mesh(6), STRETCH_BC)
    u, F, P = solve_classical(mp, _model())
    assert div_residual(mp, P) <= 1e-9
    centroids = mp.centroids
    reflected = 1.0 - centroids
    for e in range(mp.num_elements):
        partner = int(np.argmin(np.linalg.norm(centroids - reflected[e], axis=1)))
        assert np.allclose(F[e], F[partner], atol=1e-7)
    assert np.allclose(u[mp.dirichlet_nodes], mp.g_D[mp.dirichlet_nodes])


def test_energy_decreases_under_refinement():
    energies = []
    for N in (4, 8, 16):
        mp = load_problem(square_mesh(N), STRETCH_BC)
        u, _, _ = solve_classical(mp, _model())
        energies.append(total_energy(mp, _model(), u))
    assert energies[1] <= energies[0] + 1e-12
    assert energies[2] <= energies[1] + 1e-12
    assert energies[2] >= _model().minimum_energy() - 1e-12


def test_equilibrium_residual_of_classical_solution():
    mp = _loaded_problem(6)
    u, F, P = solve_classical(mp, _model())
    r = equilibrium_residual(mp, P)
    assert np.linalg.norm(r[mp.free]) <= 1e-10


def _objective(mp, V, X, Xstar):
    return float(np.sum(mp.areas * V(X - Xstar)))


def _free_variation(mp, rng, size=1e-4):
    delta = np.zeros(2 * mp.num_nodes)
    delta[mp.free] = rng.standard_normal(int(np.sum(mp.free)))
    return size * delta / np.linalg.norm(delta)


def test_compatible_projection_is_optimal():
    mp = _loaded_problem(4)
    dev = DeviationPair.quadratic(2.0)
    rng = np.random.default_rng(35)
    Fstar = rng.standard_normal((mp.num_elements, 2, 2))
    u, F = project_compatible(mp, Fstar, dev)
    best = _objective(mp, dev.V, F, Fstar)
    for _ in range(20):
        varied = mp.gradient(u.ravel() + _free_variation(mp, rng))
        assert _objective(mp, dev.V, varied, Fstar) > best


def test_equilibrium_projection_is_optimal():
    mp = _loaded_problem(4)
    unloaded = load_problem(square_mesh(4, ('left',)))
    dev = DeviationPair.quadratic(2.0)
    rng = np.random.default_rng(36)
    Pstar = rng.standard_normal((mp.num_elements, 2, 2))
    P, _ = project_equilibrium(mp, Pstar, dev)
    best = _objective(mp, dev.V_star, P, Pstar)
    for _ in range(20):
        # equilibrated against zero loads, so P + dP stays admissible
        dP, _ = project_equilibrium(unloaded, rng.standard_normal((mp.num_elements, 2, 2)), dev)
        dP *= 1e-4 / np.linalg.norm(dP)
        assert np.linalg.norm(equilibrium_residual(mp, P + dP)[mp.free]) < 1e-10
        assert _objective(mp, dev.V_star, P + dP, Pstar) > best


def test_classical_solve_is_translation_invariant():
    shift = np.array([0.3, -0.1])
    mp = load_problem(square_mesh(6), stretch_bc(0.04))
    shifted = load_problem(square_mesh(6), stretch_bc(0.04, shift=shift))
    u, F, P = solve_classical(mp, _model())
    u_s, F_s, P_s = solve_classical(shifted, _model())
    assert np.allclose(u_s, u + shift, atol=1e-9)
    assert np.allclose(F_s, F, atol=1e-9) and np.allclose(P_s, P, atol=1e-9)
    assert total_energy(shifted, _model(), u_s) == pytest.approx(total_energy(mp, _model(), u), rel=1e-10)


def test_newton_energy_never_rises():
    for mp in (load_problem(square_mesh(8), stretch_bc(0.04)), _loaded_problem(6)):
        _, _, _, info = solve_classical(mp, _model(), return_info=True)
        energies = info['energy_history']
        assert len(energies) == len(info['residual_history'])
        for before, after in zip(energies[:-1], energies[1:]):
            assert after <= before + 1e-12 * (1.0 + abs(before))


def test_line_search_ranks_by_energy():
    # lower residual alone does not pay for an energy rise
    assert not _accept_step(1.0 + 1e-13, 1.0, 0.1, 1.0, plateau=False, scale=2.0)
    assert _accept_step(1.0 + 1e-13, 1.0, 0.1, 1.0, plateau=True, scale=2.0)
    assert not _accept_step(1.0 + 1e-6, 1.0, 0.1, 1.0, plateau=True, scale=2.0)
    assert not _accept_step(1.0 + 1e-13, 1.0, 2.0, 1.0, plateau=True, scale=2.0)
    assert _accept_step(0.5, 1.0, 2.0, 1.0, plateau=False, scale=2.0)


TESTS = [
    test_square_mesh_geometry, test_invalid_meshes_raise, test_load_vector_totals,
    test_compatible_projection_reproduces_affine_fields,
    test_equilibrium_projection_keeps_equilibrated_constants, test_projections_match_dense_kkt,
    test_projections_are_idempotent, test_projections_need_quadratic_deviation,
    test_duality_for_equilibrated_stress, test_curl_residual,
    test_classical_solve_of_a_rigid_rotation, test_classical_identity_needs_no_iterations,
    test_stretch_solution_is_point_symmetric, test_energy_decreases_under_refinement,
    test_equilibrium_residual_of_classical_solution, test_compatible_projection_is_optimal,
    test_equilibrium_projection_is_optimal, test_classical_solve_is_translation_invariant,
    test_newton_energy_never_rises, test_line_search_ranks_by_energy,
]


def main():
    """Run every check and print a pass/fail line for each"""
    print("FINITE ELEMENT CHECKS")
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
