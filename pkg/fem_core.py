# fem_core.py
"""
Lowest-order finite elements on 2D triangulations.

Displacements are P1 (nodal, DOF index 2*a + i), element states F and P are
P0 (constant per triangle) and every integral uses the element area. The
gradient operator B maps nodal u to the stacked per-element gradients, so

    F = (B u).reshape(E, 2, 2)           Du_e
    r(P) = B^T W vec(P) - l              weak equilibrium residual

with W the element areas repeated four times and l the load vector.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import factorized, spsolve

from settings import SOLVER_DEFAULTS, TOLERANCES
from tensor_core import dot, moment_residual

logger = logging.getLogger('DD-FEM')

SIDES = ('left', 'right', 'bottom', 'top')


class MeshError(ValueError):
    """Raised for invalid meshes or boundary data"""


class SingularSystemError(RuntimeError):
    """Raised when a projection or Newton system cannot be factorized"""


class ConvergenceError(RuntimeError):
    """Raised when Newton stalls; carries the residual history"""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(eq=False)
class MeshProblem:
    """
    Triangulated domain with boundary partition and loads.

    Parameters:
    -----------
    nodes : (N, 2) array
    triangles : (E, 3) int array, counter-clockwise
    dirichlet_edges, neumann_edges : (k, 2) int arrays of boundary node pairs
    g_D : (N, 2) array, prescribed displacement (read at Dirichlet nodes only)
    h_N : (len(neumann_edges), 2) traction per Neumann edge
    f : (E, 2) body force per element
    """
    nodes: np.ndarray
    triangles: np.ndarray
    dirichlet_edges: np.ndarray
    neumann_edges: np.ndarray
    g_D: np.ndarray = None
    h_N: np.ndarray = None
    f: np.ndarray = None
    name: str = 'mesh'
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        self.dirichlet_edges = np.asarray(self.dirichlet_edges, dtype=int).reshape(-1, 2)
        self.neumann_edges = np.asarray(self.neumann_edges, dtype=int).reshape(-1, 2)
        N, E = len(self.nodes), len(self.triangles)
        self.g_D = np.zeros((N, 2)) if self.g_D is None else np.asarray(self.g_D, dtype=float).reshape(N, 2)
        self.h_N = (np.zeros((len(self.neumann_edges), 2)) if self.h_N is None
                    else np.broadcast_to(np.asarray(self.h_N, dtype=float),
                                         (len(self.neumann_edges), 2)).copy())
        self.f = np.zeros((E, 2)) if self.f is None else np.broadcast_to(
            np.asarray(self.f, dtype=float), (E, 2)).copy()
        self._validate()
        self.areas = self._areas()
        self.grads = self._shape_gradients()
        self.B = self._gradient_operator()
        self.dirichlet_nodes = np.unique(self.dirichlet_edges)
        fixed = np.zeros(2 * N, dtype=bool)
        fixed[2 * self.dirichlet_nodes] = True
        fixed[2 * self.dirichlet_nodes + 1] = True
        self.fixed = fixed
        self.free = ~fixed
        logger.debug(f"Mesh '{self.name}': {N} nodes, {E} elements, "
                     f"{len(self.dirichlet_edges)} Dirichlet / {len(self.neumann_edges)} Neumann edges")

    # -- validation ---------------------------------------------------------

    def _validate(self):
        N, E = len(self.nodes), len(self.triangles)
        if E == 0:
            raise MeshError("mesh has no triangles")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("node coordinates must be finite")
        if self.triangles.min() < 0 or self.triangles.max() >= N:
            raise MeshError("triangle references a node index out of range")
        if len(np.unique(self.triangles)) != N:
            raise MeshError("every node must belong to a triangle")

        directed = {}
        for e, tri in enumerate(self.triangles):
            for k in range(3):
                a, b = int(tri[k]), int(tri[(k + 1) % 3])
                if (a, b) in directed:
                    raise MeshError(f"edge ({a},{b}) appears twice with the same orientation")
                directed[(a, b)] = e
        boundary = set()
        counts = {}
        for a, b in directed:
            counts[_edge_key(a, b)] = counts.get(_edge_key(a, b), 0) + 1
        for key, count in counts.items():
            if count == 1:
                boundary.add(key)

        labeled_d = [_edge_key(int(a), int(b)) for a, b in self.dirichlet_edges]
        labeled_n = [_edge_key(int(a), int(b)) for a, b in self.neumann_edges]
        if not labeled_d:
            raise MeshError("the Dirichlet boundary must be nonempty")
        labels = labeled_d + labeled_n
        if len(set(labels)) != len(labels):
            raise MeshError("a boundary edge is labeled more than once")
        if set(labels) != boundary:
            missing = len(boundary - set(labels))
            extra = len(set(labels) - boundary)
            raise MeshError(f"boundary labels do not match the mesh boundary "
                            f"({missing} unlabeled, {extra} not on the boundary)")

        adjacency = sp.coo_matrix((np.ones(3 * E), (self.triangles.ravel(), self.triangles[:, [1, 2, 0]].ravel())),
                                  shape=(N, N))
        n_comp, labels_comp = connected_components(adjacency, directed=False)
        anchored = set(labels_comp[np.unique(self.dirichlet_edges)])
        if len(anchored) != n_comp:
            raise MeshError("a connected component of the mesh has no Dirichlet edge")

        self._directed = directed

    def _areas(self):
        x = self.nodes[self.triangles]
        d1, d2 = x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise MeshError(f"triangle {bad} has non-positive area {areas[bad]:.3e}")
        return areas

    def _shape_gradients(self):
        """(E, 3, 2): gradient of each local P1 basis function"""
        x = self.nodes[self.triangles]
        J = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        Jinv = np.linalg.inv(J)
        g1, g2 = Jinv[:, 0, :], Jinv[:, 1, :]
        return np.stack([-g1 - g2, g1, g2], axis=1)

    def _gradient_operator(self):
        E, N = len(self.triangles), len(self.nodes)
        e, k, i, j = np.meshgrid(np.arange(E), np.arange(3), np.arange(2), np.arange(2), indexing='ij')
        rows = 4 * e + 2 * i + j
        cols = 2 * self.triangles[e, k] + i
        vals = self.grads[e, k, j]
        return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(4 * E, 2 * N))

    # -- derived quantities -------------------------------------------------

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_elements(self):
        return len(self.triangles)

    @property
    def weights(self):
        return np.repeat(self.areas, 4)

    @property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def gradient(self, u):
        """Du_e for nodal u of shape (N, 2) or (2N,)"""
        return (self.B @ np.asarray(u, dtype=float).ravel()).reshape(-1, 2, 2)

    def stiffness(self):
        if 'K' not in self._cache:
            self._cache['K'] = (self.B.T @ sp.diags(self.weights) @ self.B).tocsr()
        return self._cache['K']

    def free_solver(self):
        """Factorization of K_ff, shared by both projections"""
        if 'K_ff_solve' not in self._cache:
            K = self.stiffness()
            K_ff = K[self.free][:, self.free].tocsc()
            if K_ff.shape[0] == 0:
                self._cache['K_ff_solve'] = lambda rhs: np.zeros(0)
            else:
                try:
                    self._cache['K_ff_solve'] = factorized(K_ff)
                except RuntimeError as e:
                    raise SingularSystemError(f"stiffness factorization failed: {e}")
        return self._cache['K_ff_solve']

    def load_vector(self):
        """l[v] = sum_e w_e f_e . mean(v on e) + sum over Neumann edges of int h_N . v"""
        if 'l' in self._cache:
            return self._cache['l']
        l = np.zeros((self.num_nodes, 2))
        share = (self.areas / 3.0)[:, None] * self.f
        for k in range(3):
            np.add.at(l, self.triangles[:, k], share)
        if len(self.neumann_edges):
            a, b = self.neumann_edges[:, 0], self.neumann_edges[:, 1]
            length = np.linalg.norm(self.nodes[b] - self.nodes[a], axis=1)
            half = 0.5 * length[:, None] * self.h_N
            np.add.at(l, a, half)
            np.add.at(l, b, half)
        self._cache['l'] = l.ravel()
        return self._cache['l']

    def nodal_masses(self):
        masses = np.zeros(self.num_nodes)
        for k in range(3):
            np.add.at(masses, self.triangles[:, k], self.areas / 3.0)
        return masses

    def interior_edges(self):
        """(a, b, e_left, e_right) for each interior edge, e_left owning (a, b)"""
        out = []
        for (a, b), e1 in self._directed.items():
            e2 = self._directed.get((b, a))
            if e2 is not None and a < b:
                out.append((a, b, e1, e2))
        return np.asarray(out, dtype=int).reshape(-1, 4)

    def outward_normals(self, edges):
        """Unit outward normals of boundary edges given as node pairs"""
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        normals = np.empty((len(edges), 2))
        for k, (a, b) in enumerate(edges):
            if (a, b) not in self._directed:
                a, b = b, a
            t = self.nodes[b] - self.nodes[a]
            # counter-clockwise triangles keep the interior on the left of (a, b)
            normals[k] = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        return normals

    def to_dict(self):
        return {
            'mesh': {
                'nodes': self.nodes.tolist(),
                'triangles': self.triangles.tolist(),
                'dirichlet_edges': self.dirichlet_edges.tolist(),
                'neumann_edges': self.neumann_edges.tolist(),
            },
            'bc': {
                'g_D': [{'nodes': self.dirichlet_nodes.tolist(),
                         'values': self.g_D[self.dirichlet_nodes].tolist()}],
                'h_N': self.h_N.tolist(),
                'f': self.f.tolist(),
            },
        }


@dataclass(eq=False)
class ElementFields:
    """Mechanical branch of a state: nodal u (N, 2), element F and P (E, 2, 2), multipliers lam (N, 2)"""
    u: np.ndarray
    F: np.ndarray
    P: np.ndarray
    lam: np.ndarray = None
    compatible: bool = True
    equilibrated: bool = True


# -- construction -------------------------------------------------------------

def square_mesh(N, dirichlet_sides=('left', 'right')):
    """
    Structured mesh of the unit square: N x N cells, each split along the
    diagonal from (x_i, y_j) to (x_i+1, y_j+1). The mesh maps onto itself
    under the point reflection x -> (1, 1) - x.

    Returns a mesh dict with an extra 'sides' entry naming the edges of each side.
    """
    N = int(N)
    if N < 1:
        raise MeshError(f"square_mesh needs N >= 1, got {N}")
    unknown = set(dirichlet_sides) - set(SIDES)
    if unknown:
        raise MeshError(f"unknown sides {sorted(unknown)}, expected a subset of {SIDES}")

    def node(i, j):
        return j * (N + 1) + i

    xs = np.linspace(0.0, 1.0, N + 1)
    nodes = [[xs[i], xs[j]] for j in range(N + 1) for i in range(N + 1)]
    triangles = []
    for j in range(N):
        for i in range(N):
            n00, n10, n01, n11 = node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1)
            triangles.append([n00, n10, n11])
            triangles.append([n00, n11, n01])

    sides = {
        'bottom': [[node(i, 0), node(i + 1, 0)] for i in range(N)],
        'right': [[node(N, j), node(N, j + 1)] for j in range(N)],
        'top': [[node(i + 1, N), node(i, N)] for i in range(N)],
        'left': [[node(0, j + 1), node(0, j)] for j in range(N)],
    }
    dirichlet = [e for s in SIDES if s in dirichlet_sides for e in sides[s]]
    neumann = [e for s in SIDES if s not in dirichlet_sides for e in sides[s]]
    return {'nodes': nodes, 'triangles': triangles, 'dirichlet_edges': dirichlet,
            'neumann_edges': neumann, 'sides': sides}


def stretch_bc(stretch, shift=(0.0, 0.0), rotation=None):
    """
    BC dict of the uniaxial stretch benchmark on the unit square: the left
    side held at x, the right side displaced by (stretch, 0). An optional
    rigid motion x -> Q x + shift is applied to both sides.
    """
    Q = np.eye(2) if rotation is None else np.asarray(rotation, dtype=float)
    shift = np.asarray(shift, dtype=float)
    return {'g_D': [
        {'side': 'left', 'A': Q.tolist(), 'c': shift.tolist()},
        {'side': 'right', 'A': Q.tolist(), 'c': (Q @ [float(stretch), 0.0] + shift).tolist()},
    ]}


def _affine(spec, x):
    A = np.asarray(spec.get('A', np.zeros((2, 2))), dtype=float).reshape(2, 2)
    c = np.asarray(spec.get('c', np.zeros(2)), dtype=float).reshape(2)
    return x @ A.T + c


def _segment_nodes(mesh, segment, dirichlet_edges):
    if 'nodes' in segment:
        return np.asarray(segment['nodes'], dtype=int)
    if 'side' in segment:
        sides = mesh.get('sides') or {}
        if segment['side'] not in sides:
            raise MeshError(f"mesh has no side named '{segment['side']}'")
        return np.unique(np.asarray(sides[segment['side']], dtype=int))
    if 'edges' in segment:
        idx = np.asarray(segment['edges'], dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= len(dirichlet_edges)):
            raise MeshError("g_D segment references a Dirichlet edge index out of range")
        return np.unique(dirichlet_edges[idx])
    return np.unique(dirichlet_edges)


def load_problem(mesh, bc=None, name='mesh'):
    """
    Build a MeshProblem from mesh and BC dicts.

    BC dict keys (all optional):
        g_D : {"A": 2x2, "c": 2} affine map on all Dirichlet nodes, or a list
              of segments {"side"|"edges"|"nodes": ..., "A", "c"} or
              {"nodes": [...], "values": [[ux, uy], ...]}
        h_N : one traction vector, or one vector per Neumann edge
        f   : one body force vector, or one vector per element
    """
    bc = bc or {}
    try:
        nodes = np.asarray(mesh['nodes'], dtype=float)
        triangles = np.asarray(mesh['triangles'], dtype=int)
        dirichlet_edges = np.asarray(mesh.get('dirichlet_edges', []), dtype=int).reshape(-1, 2)
        neumann_edges = np.asarray(mesh.get('neumann_edges', []), dtype=int).reshape(-1, 2)
    except (KeyError, TypeError, ValueError) as e:
        raise MeshError(f"malformed mesh: {e}")

    g_D = np.zeros((len(nodes), 2))
    spec = bc.get('g_D')
    segments = [] if spec is None else ([spec] if isinstance(spec, dict) else list(spec))
    for segment in segments:
        idx = _segment_nodes(mesh, segment, dirichlet_edges)
        if idx.size and (idx.min() < 0 or idx.max() >= len(nodes)):
            raise MeshError("g_D segment references a node index out of range")
        if 'values' in segment:
            values = np.asarray(segment['values'], dtype=float).reshape(-1, 2)
            if len(values) != len(idx):
                raise MeshError(f"g_D segment has {len(idx)} nodes but {len(values)} values")
            g_D[idx] = values
        else:
            g_D[idx] = _affine(segment, nodes[idx])

    def per_item(key, count):
        value = bc.get(key)
        if value is None:
            return None
        arr = np.asarray(value, dtype=float)
        if arr.shape == (2,):
            return arr
        if arr.shape != (count, 2):
            raise MeshError(f"{key} must be one 2-vector or {count} of them, got shape {arr.shape}")
        return arr

    return MeshProblem(nodes=nodes, triangles=triangles, dirichlet_edges=dirichlet_edges,
                       neumann_edges=neumann_edges, g_D=g_D,
                       h_N=per_item('h_N', len(neumann_edges)),
                       f=per_item('f', len(triangles)), name=name)


# -- projections --------------------------------------------------------------

def _require_quadratic(dev):
    if not dev.is_quadratic:
        raise ValueError("projections need a quadratic deviation pair")


def _check_solution(x, what):
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"{what}: solve produced non-finite values")
    return x


def project_compatible(mp, Fstar, dev):
    """
    Minimize sum_e w_e V(Du_e - F*_e) over u with u = g_D on the Dirichlet nodes.

    Returns:
    --------
    tuple
        (u of shape (N, 2), F = Du of shape (E, 2, 2))
    """
    _require_quadratic(dev)
    Fstar = np.asarray(Fstar, dtype=float).reshape(mp.num_elements, 2, 2)
    u = mp.g_D.ravel().copy()
    u[mp.free] = 0.0
    rhs = mp.B.T @ (mp.weights * Fstar.ravel()) - mp.stiffness() @ u
    u[mp.free] = _check_solution(mp.free_solver()(rhs[mp.free]), 'project_compatible')
    u = u.reshape(-1, 2)
    return u, mp.gradient(u)


def project_equilibrium(mp, Pstar, dev):
    """
    Minimize sum_e w_e V*(P_e - P*_e) subject to B_f^T W vec(P) = l_f.

    The KKT system reduces to C K_ff lam = l_f - B_f^T W vec(P*) and
    P = P* + C B_f lam, with lam the nodal multiplier (zero on Dirichlet nodes).
    """
    _require_quadratic(dev)
    Pstar = np.asarray(Pstar, dtype=float).reshape(mp.num_elements, 2, 2)
    l = mp.load_vector()
    rhs = (l - mp.B.T @ (mp.weights * Pstar.ravel()))[mp.free] / dev.C
    lam = np.zeros(2 * mp.num_nodes)
    lam[mp.free] = _check_solution(mp.free_solver()(rhs), 'project_equilibrium')
    P = Pstar.ravel() + dev.C * (mp.B @ lam)
    return P.reshape(-1, 2, 2), lam.reshape(-1, 2)


def equilibrium_residual(mp, P):
    """Full residual vector B^T W vec(P) - l, shape (2N,)"""
    return mp.B.T @ (mp.weights * np.asarray(P, dtype=float).ravel()) - mp.load_vector()


def boundary_reaction(mp, P):
    """Nodal reaction forces (N, 2); nonzero only on Dirichlet nodes"""
    r = equilibrium_residual(mp, P)
    r[mp.free] = 0.0
    return r.reshape(-1, 2)


# -- classical reference solution --------------------------------------------

def total_energy(mp, m, u):
    """sum_e w_e W(Du_e) - l . u"""
    u = np.asarray(u, dtype=float)
    return float(np.sum(mp.areas * m.energy(mp.gradient(u))) - mp.load_vector() @ u.ravel())


def initial_guess(mp):
    """Identity plus the smallest affine correction fitting g_D, exact on the Dirichlet nodes"""
    idx = mp.dirichlet_nodes
    X = np.hstack([mp.nodes[idx], np.ones((len(idx), 1))])
    coeffs, *_ = np.linalg.lstsq(X, mp.g_D[idx] - mp.nodes[idx], rcond=None)
    u = mp.nodes + np.hstack([mp.nodes, np.ones((mp.num_nodes, 1))]) @ coeffs
    u[idx] = mp.g_D[idx]
    return u


def tangent_matrix(mp, m, F):
    """B^T blockdiag(w_e DT(F_e)) B"""
    E = mp.num_elements
    basis = np.eye(4).reshape(4, 2, 2)
    cols = m.stress_tangent(np.broadcast_to(F[:, None], (E, 4, 2, 2)), basis)
    blocks = np.swapaxes(cols.reshape(E, 4, 4), 1, 2) * mp.areas[:, None, None]
    D = sp.bsr_matrix((blocks, np.arange(E), np.arange(E + 1)), shape=(4 * E, 4 * E))
    return (mp.B.T @ D @ mp.B).tocsr()


def _accept_step(trial_energy, energy, trial_norm, norm, plateau, scale):
    """Energy decrease; once the energy is flat at roundoff, a residual decrease"""
    if trial_energy < energy:
        return True
    return (plateau and trial_energy <= energy + TOLERANCES['energy_roundoff'] * scale
            and trial_norm < norm)


def solve_classical(mp, m, newton_tol=None, max_iter=None, u0=None, return_info=False):
    """
    Damped Newton for the discrete problem div T(Du) + f = 0, u = g_D on Gamma_D.

    Each step solves with the consistent tangent and backtracks by halves
    (down to 2^-20) on the energy. When the predicted decrease |du . r| is
    at roundoff level the energy can no longer rank trial points, and a
    step that keeps the energy flat and lowers the residual is taken
    instead. A step that is not a descent direction is replaced by the
    negative residual.

    Returns:
    --------
    tuple
        (u, F, P), plus an info dict with the residual history when return_info
    """
    if m.n != 2:
        raise ValueError(f"solve_classical needs a 2D model, got n={m.n}")
    newton_tol = SOLVER_DEFAULTS['newton_tol'] if newton_tol is None else newton_tol
    max_iter = SOLVER_DEFAULTS['newton_max_iter'] if max_iter is None else max_iter
    min_step = SOLVER_DEFAULTS['newton_min_step']
    free = mp.free

    u = (initial_guess(mp) if u0 is None else np.array(u0, dtype=float)).ravel()
    u[mp.fixed] = mp.g_D.ravel()[mp.fixed]

    def residual(u_vec):
        P = m.stress(mp.gradient(u_vec))
        return equilibrium_residual(mp, P)[free]

    history = []
    energies = []
    r = residual(u)
    energy = total_energy(mp, m, u)
    for it in range(max_iter + 1):
        norm = float(np.linalg.norm(r))
        history.append(norm)
        energies.append(energy)
        logger.debug(f"Newton iteration {it}: |r| = {norm:.3e}, energy = {energy:.12g}")
        if norm <= newton_tol:
            break
        if it == max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                                   f"(|r| = {norm:.3e})", history)
        K = tangent_matrix(mp, m, mp.gradient(u))[free][:, free].tocsc()
        try:
            du = spsolve(K, -r)
        except RuntimeError as e:
            raise SingularSystemError(f"singular Newton tangent: {e}")
        if not np.all(np.isfinite(du)) or du @ r >= 0:
            logger.warning(f"Newton iteration {it}: tangent step is not a descent direction, using -r")
            du = -r

        scale = 1.0 + abs(energy)
        plateau = abs(du @ r) <= TOLERANCES['energy_plateau'] * scale
        step = 1.0
        while step >= min_step:
            trial = u.copy()
            trial[free] += step * du
            trial_energy = total_energy(mp, m, trial)
            trial_r = residual(trial)
            if _accept_step(trial_energy, energy, np.linalg.norm(trial_r), norm, plateau, scale):
                u, r, energy = trial, trial_r, trial_energy
                break
            step *= 0.5
        else:
            raise ConvergenceError(f"line search failed at iteration {it} (|r| = {norm:.3e})", history)

    u = u.reshape(-1, 2)
    F = mp.gradient(u)
    P = m.stress(F)
    logger.info(f"Classical solve: {len(history) - 1} Newton iterations, |r| = {history[-1]:.3e}, "
                f"energy = {energy:.12g}")
    if return_info:
        return u, F, P, {'residual_history': history, 'energy_history': energies, 'energy': energy,
                         'iterations': len(history) - 1}
    return u, F, P


# -- diagnostics --------------------------------------------------------------

def lumped_l2_norm(mp, u):
    u = np.asarray(u, dtype=float).reshape(-1, 2)
    return float(np.sqrt(np.sum(mp.nodal_masses() * np.sum(u * u, axis=1))))


def delta_gap(mp, dev, F, P, F_data, P_data):
    """sum_e w_e (V(F_e - F'_e) + V*(P_e - P'_e))"""
    return float(np.sum(mp.areas * dev.deviation(F, P, F_data, P_data)))


def curl_residual(mp, F):
    """Sum over interior edges of |edge length x tangential jump of F|"""
    edges = mp.interior_edges()
    if len(edges) == 0:
        return 0.0
    t = mp.nodes[edges[:, 1]] - mp.nodes[edges[:, 0]]
    jump = F[edges[:, 2]] - F[edges[:, 3]]
    return float(np.sum(np.linalg.norm(np.einsum('kij,kj->ki', jump, t), axis=1)))


def div_residual(mp, P):
    """Euclidean norm of the free part of r(P) (dual norm over unit nodal test vectors)"""
    return float(np.linalg.norm(equilibrium_residual(mp, P)[mp.free]))


def duality_defect(mp, u, P):
    """|sum_e w_e Du_e.P_e - l.u - R_D.u_D|, zero when P is equilibrated"""
    u = np.asarray(u, dtype=float).ravel()
    work = float(np.sum(mp.areas * dot(mp.gradient(u), P)))
    reaction = boundary_reaction(mp, P).ravel()
    return abs(work - float(mp.load_vector() @ u) - float(reaction @ u))


def discrete_diagnostics(mp, fields, F_data, P_data, dev):
    """
    Residuals of a two-branch state.

    Returns:
    --------
    dict
        delta_gap, curl_residual and div_residual of the data branch,
        duality_defect and moment_residual of the mechanical branch
    """
    F_data = np.asarray(F_data, dtype=float)
    P_data = np.asarray(P_data, dtype=float)
    return {
        'delta_gap': delta_gap(mp, dev, fields.F, fields.P, F_data, P_data),
        'curl_residual': curl_residual(mp, F_data),
        'div_residual': div_residual(mp, P_data),
        'duality_defect': duality_defect(mp, fields.u, fields.P),
        'moment_residual': float(np.max(moment_residual(fields.F, fields.P))),
        'projection_residual': div_residual(mp, fields.P),
    }
