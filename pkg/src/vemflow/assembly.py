"""Global discretization: DoF numbering, static operators, nonlinear terms.

Velocity DoFs are shared across cells at vertices and edge points; the
moment DoFs and the discontinuous pressure coefficients are cell-private.
The assembled saddle-point system carries one Lagrange-multiplier row
enforcing the zero pressure mean (all boundaries are Dirichlet).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import basis
from .basis import n_monomials
from .element import ElementOperators, build_element
from .mesh import BoundarySide, PolygonalMesh

__all__ = [
    "SmagorinskyConfig",
    "GlobalDofMap",
    "Discretization",
    "FlowProblem",
    "DiscreteState",
    "build_discretization",
    "assemble_load",
    "eddy_viscosity",
    "nonlinear_terms",
    "full_residual",
    "reduced_residual",
    "reduced_jacobian",
    "divergence_defect",
    "broken_h1_seminorm",
]

_GRAD_GUARD = 1e-12  # below this |grad| the Smagorinsky derivative t-term is dropped


@dataclass(frozen=True)
class SmagorinskyConfig:
    enabled: bool = True
    cs: float = 0.1
    scaling: str = "h_t"  # "h_t" (cell diameter) or "h_star_f" (min face diameter)

    def cell_scale(self, ops: ElementOperators) -> float:
        if not self.enabled:
            return 0.0
        if self.scaling == "h_t":
            return ops.frame.h
        if self.scaling == "h_star_f":
            return ops.min_face_length
        raise ValueError(f"unknown Smagorinsky scaling {self.scaling!r}")


@dataclass
class GlobalDofMap:
    k: int
    n_velocity: int
    n_pressure: int
    cell_velocity: list[np.ndarray]   # local velocity dof -> global id
    cell_pressure: list[np.ndarray]
    dirichlet_mask: np.ndarray        # (n_velocity,) bool
    point_dof_coords: np.ndarray      # coordinates of vertex/edge dofs, nan for moments
    free: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.free is None:
            self.free = np.flatnonzero(~self.dirichlet_mask)

    @property
    def n_free_velocity(self) -> int:
        return len(self.free)

    def system_size(self) -> int:
        """Free velocity + pressure + mean multiplier (the reported DoF total)."""
        return self.n_free_velocity + self.n_pressure + 1

    def boundary_values(self, data) -> np.ndarray:
        """Full velocity vector with Dirichlet entries set from data(points)->(n,2)."""
        out = np.zeros(self.n_velocity)
        idx = np.flatnonzero(self.dirichlet_mask)
        pts = self.point_dof_coords[idx]
        vals = np.asarray(data(pts), float)
        comp = idx % 2
        out[idx] = vals[np.arange(len(idx)), comp]
        return out


def _build_dof_map(mesh: PolygonalMesh, k: int, ops: list[ElementOperators]) -> GlobalDofMap:
    n_edge_nodes = k - 1
    off_edge = 2 * mesh.n_vertices
    off_cell = off_edge + 2 * n_edge_nodes * len(mesh.faces)
    priv = (n_monomials(k - 1) - 1) + n_monomials(k - 3)
    n_velocity = off_cell + priv * mesh.n_cells

    gl_nodes, _ = basis.gauss_lobatto(k + 1)
    ts = (gl_nodes[1:-1] + 1.0) / 2.0

    coords = np.full((n_velocity, 2), np.nan)
    coords[0:off_edge:2] = mesh.vertices
    coords[1:off_edge:2] = mesh.vertices
    for fi, (a, b) in enumerate(mesh.faces):
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        for j, t in enumerate(ts):
            p = (1.0 - t) * pa + t * pb
            base = off_edge + 2 * (fi * n_edge_nodes + j)
            coords[base] = p
            coords[base + 1] = p

    cell_velocity = []
    cell_pressure = []
    npb = n_monomials(k - 1)
    for ci, loop in enumerate(mesh.cells):
        nv = len(loop)
        ids = np.empty(ops[ci].ndof, dtype=np.int64)
        for li, v in enumerate(loop):
            ids[2 * li] = 2 * v
            ids[2 * li + 1] = 2 * v + 1
        pos = 2 * nv
        for li, fi in enumerate(mesh.cell_faces[ci]):
            va, vb = loop[li], loop[(li + 1) % nv]
            forward = va < vb
            base = off_edge + 2 * fi * n_edge_nodes
            for j in range(n_edge_nodes):
                jj = j if forward else n_edge_nodes - 1 - j
                ids[pos] = base + 2 * jj
                ids[pos + 1] = base + 2 * jj + 1
                pos += 2
        for j in range(priv):
            ids[pos] = off_cell + priv * ci + j
            pos += 1
        cell_velocity.append(ids)
        cell_pressure.append(np.arange(npb * ci, npb * (ci + 1), dtype=np.int64))

    mask = np.zeros(n_velocity, dtype=bool)
    for fi in mesh.boundary_face_ids():
        a, b = mesh.faces[fi]
        mask[[2 * a, 2 * a + 1, 2 * b, 2 * b + 1]] = True
        base = off_edge + 2 * fi * n_edge_nodes
        mask[base : base + 2 * n_edge_nodes] = True

    return GlobalDofMap(k, n_velocity, npb * mesh.n_cells, cell_velocity, cell_pressure, mask, coords)


@dataclass
class Discretization:
    mesh: PolygonalMesh
    k: int
    ops: list[ElementOperators]
    dof_map: GlobalDofMap
    viscous: sp.csr_matrix           # a_h with unit viscosity (projected stiffness + stabilization)
    divergence: sp.csr_matrix        # rows b_h(., m_i) per cell pressure monomial
    mean_row: np.ndarray             # (p, 1)_Omega coefficients

    @property
    def n_velocity(self) -> int:
        return self.dof_map.n_velocity

    @property
    def n_pressure(self) -> int:
        return self.dof_map.n_pressure


def build_discretization(mesh: PolygonalMesh, k: int, quad_order: int | None = None) -> Discretization:
    ops = [build_element(mesh.vertices[loop], k, quad_order) for loop in mesh.cells]
    dof_map = _build_dof_map(mesh, k, ops)

    rows_a, cols_a, vals_a = [], [], []
    rows_d, cols_d, vals_d = [], [], []
    mean = np.zeros(dof_map.n_pressure)
    for ci, op in enumerate(ops):
        gv = dof_map.cell_velocity[ci]
        gp = dof_map.cell_pressure[ci]
        r, c = np.meshgrid(gv, gv, indexing="ij")
        rows_a.append(r.ravel())
        cols_a.append(c.ravel())
        vals_a.append(op.stiffness.ravel())
        r, c = np.meshgrid(gp, gv, indexing="ij")
        rows_d.append(r.ravel())
        cols_d.append(c.ravel())
        vals_d.append(op.div_matrix.ravel())
        # (m_i, 1)_T is the constant row of the pressure Gram
        mean[gp] = op.gram_k1[0]

    n_u, n_p = dof_map.n_velocity, dof_map.n_pressure
    viscous = sp.coo_matrix(
        (np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))), shape=(n_u, n_u)
    ).tocsr()
    divergence = sp.coo_matrix(
        (np.concatenate(vals_d), (np.concatenate(rows_d), np.concatenate(cols_d))), shape=(n_p, n_u)
    ).tocsr()
    return Discretization(mesh, k, ops, dof_map, viscous, divergence, mean)


# ---------------------------------------------------------------------------
# load, eddy viscosity, nonlinear terms


def assemble_load(disc: Discretization, forcing) -> np.ndarray:
    """rhs vector l_h(phi) = sum_T (f, P0 phi)_T; forcing(cell_ops, pts) -> (n, 2)."""
    out = np.zeros(disc.n_velocity)
    if forcing is None:
        return out
    nk = n_monomials(disc.k)
    for ci, op in enumerate(disc.ops):
        fvals = np.asarray(forcing(op, op.quad.points), float)
        m = op.mono_vals[:nk]
        mom = np.concatenate([
            m @ (op.quad.weights * fvals[:, 0]),
            m @ (op.quad.weights * fvals[:, 1]),
        ])
        np.add.at(out, disc.dof_map.cell_velocity[ci], op.l2_projector.T @ mom)
    return out


def eddy_viscosity(disc: Discretization, u: np.ndarray, smago: SmagorinskyConfig) -> np.ndarray:
    """Cell-averaged Smagorinsky viscosity C_s^2 s_T^2 |P0 grad u| (diagnostic)."""
    out = np.zeros(disc.mesh.n_cells)
    if not smago.enabled:
        return out
    nk1 = n_monomials(disc.k - 1)
    for ci, op in enumerate(disc.ops):
        w = u[disc.dof_map.cell_velocity[ci]]
        gw = op.tensor_field(op.grad_projector @ w, op.mono_vals[:nk1])
        norm = np.sqrt(np.einsum("qij,qij->q", gw, gw))
        s = smago.cell_scale(op)
        out[ci] = smago.cs**2 * s**2 * float(norm @ op.quad.weights) / op.area
    return out


def _cell_state_terms(op: ElementOperators, w: np.ndarray, nu_s_coef: float, want_jac: bool):
    """Convection and Smagorinsky contributions of one cell at state w.

    Returns (residual_vector, jacobian_matrix or None).  nu_s_coef is
    C_s^2 s_T^2 (zero disables the eddy terms).
    """
    k = op.k
    nk = n_monomials(k)
    nk1 = n_monomials(k - 1)
    qw = op.quad.weights
    mk = op.mono_vals[:nk]
    mk1 = op.mono_vals[:nk1]

    c0 = op.l2_projector @ w
    cg = op.grad_projector @ w
    u0 = op.l2_field(c0, mk)                     # (q, 2)
    gw = op.tensor_field(cg, mk1)                # (q, 2, 2) projected gradient
    cn = op.h1_projector @ w
    gn = op.h1_gradient_field(cn)                # (q, 2, 2) gradient of energy projection

    # convection residual: moments of (gw @ u0) against the vector monomials
    y = np.einsum("qij,qj->qi", gw, u0)
    mom = np.concatenate([mk @ (qw * y[:, 0]), mk @ (qw * y[:, 1])])
    res = op.l2_projector.T @ mom

    jac = None
    if want_jac:
        # c_h(u; delta, v): gradient acts on the trial function
        t1 = np.einsum("aq,bq,qj,q->abj", mk, mk1, u0, qw)       # (nk, nk1, 2)
        k1 = np.zeros((2 * nk, 4 * nk1))
        for i in range(2):
            for j in range(2):
                k1[i * nk : (i + 1) * nk, (2 * i + j) * nk1 : (2 * i + j + 1) * nk1] = t1[:, :, j]
        jac = op.l2_projector.T @ k1 @ op.grad_projector
        # c_h(delta; u, v): state gradient times trial L2 projection
        t2 = np.einsum("aq,bq,qij,q->aibj", mk, mk, gw, qw)      # (nk, 2, nk, 2)
        k2 = t2.transpose(1, 0, 3, 2).reshape(2 * nk, 2 * nk)
        jac = jac + op.l2_projector.T @ k2 @ op.l2_projector

    if nu_s_coef > 0.0:
        gnorm = np.sqrt(np.einsum("qij,qij->q", gw, gw))
        nu_s = nu_s_coef * gnorm
        # residual: (nu_s grad Ph w, grad Ph v)
        yg = nu_s[:, None, None] * gn
        vmom = np.concatenate([
            np.einsum("qj,aqj,q->a", yg[:, 0], op.mono_grads, qw),
            np.einsum("qj,aqj,q->a", yg[:, 1], op.mono_grads, qw),
        ])
        res = res + op.h1_projector.T @ vmom
        if want_jac:
            # first term: nu_s(w) times the projected stiffness
            t3 = np.einsum("aqj,bqj,q->ab", op.mono_grads, op.mono_grads, qw * nu_s)
            ks = np.zeros((2 * nk, 2 * nk))
            ks[:nk, :nk] = t3
            ks[nk:, nk:] = t3
            jac = jac + op.h1_projector.T @ ks @ op.h1_projector
            # t-term: (P0grad w : P0grad delta)/|P0grad w| times (grad Ph w : grad Ph v)
            w1 = np.einsum("qij,bq->ijbq", gw, mk1).reshape(4 * nk1, -1)
            a_lq = op.grad_projector.T @ w1                      # (ndof, q)
            w2 = np.concatenate([
                np.einsum("qj,aqj->aq", gn[:, 0], op.mono_grads),
                np.einsum("qj,aqj->aq", gn[:, 1], op.mono_grads),
            ])
            b_mq = op.h1_projector.T @ w2                        # (ndof, q)
            coef = np.where(gnorm >= _GRAD_GUARD, qw * nu_s_coef / np.maximum(gnorm, _GRAD_GUARD), 0.0)
            jac = jac + b_mq @ (coef[:, None] * a_lq.T)
    return res, jac


def nonlinear_terms(disc: Discretization, u: np.ndarray, smago: SmagorinskyConfig, want_jacobian: bool):
    """Global convection + Smagorinsky residual vector and Jacobian matrix."""
    res = np.zeros(disc.n_velocity)
    rows, cols, vals = [], [], []
    for ci, op in enumerate(disc.ops):
        gv = disc.dof_map.cell_velocity[ci]
        s = smago.cell_scale(op)
        r, j = _cell_state_terms(op, u[gv], smago.cs**2 * s**2, want_jacobian)
        np.add.at(res, gv, r)
        if want_jacobian:
            rr, cc = np.meshgrid(gv, gv, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(j.ravel())
    jac = None
    if want_jacobian:
        n = disc.n_velocity
        jac = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
    return res, jac


# ---------------------------------------------------------------------------
# problem bundle and residual/Jacobian of the coupled system


@dataclass
class FlowProblem:
    disc: Discretization
    nu: float
    load: np.ndarray
    bc_values: np.ndarray            # full velocity vector, Dirichlet entries set
    smagorinsky: SmagorinskyConfig

    @property
    def dof_map(self) -> GlobalDofMap:
        return self.disc.dof_map


@dataclass
class DiscreteState:
    u: np.ndarray                    # full velocity vector (Dirichlet rows included)
    p: np.ndarray
    lam: float = 0.0

    def copy(self) -> "DiscreteState":
        return DiscreteState(self.u.copy(), self.p.copy(), self.lam)


def initial_state(problem: FlowProblem) -> DiscreteState:
    u = problem.bc_values.copy()
    return DiscreteState(u, np.zeros(problem.disc.n_pressure), 0.0)


def full_residual(problem: FlowProblem, state: DiscreteState, with_nonlinear: bool = True):
    disc = problem.disc
    r_u = problem.nu * (disc.viscous @ state.u) + disc.divergence.T @ state.p - problem.load
    if with_nonlinear:
        extra, _ = nonlinear_terms(disc, state.u, problem.smagorinsky, want_jacobian=False)
        r_u = r_u + extra
    r_p = disc.divergence @ state.u + state.lam * disc.mean_row
    r_mean = float(disc.mean_row @ state.p)
    return r_u, r_p, r_mean


def reduced_residual(problem: FlowProblem, state: DiscreteState, with_nonlinear: bool = True) -> np.ndarray:
    r_u, r_p, r_mean = full_residual(problem, state, with_nonlinear)
    return np.concatenate([r_u[problem.dof_map.free], r_p, [r_mean]])


def reduced_jacobian(problem: FlowProblem, state: DiscreteState, with_nonlinear: bool = True) -> sp.csc_matrix:
    disc = problem.disc
    j11 = problem.nu * disc.viscous
    if with_nonlinear:
        _, jnl = nonlinear_terms(disc, state.u, problem.smagorinsky, want_jacobian=True)
        j11 = j11 + jnl
    free = problem.dof_map.free
    j11 = j11[free][:, free]
    j12 = disc.divergence.T[free]
    j21 = disc.divergence[:, free]
    mean_col = sp.csc_matrix(disc.mean_row[:, None])
    return sp.bmat(
        [[j11, j12, None], [j21, None, mean_col], [None, mean_col.T, None]], format="csc"
    )


# ---------------------------------------------------------------------------
# diagnostics


def divergence_defect(disc: Discretization, u: np.ndarray) -> float:
    """max over cells of the L2 norm of div u_h (a known P_{k-1} polynomial)."""
    worst = 0.0
    for ci, op in enumerate(disc.ops):
        worst = max(worst, op.divergence_norm(u[disc.dof_map.cell_velocity[ci]]))
    return worst


def broken_h1_seminorm(disc: Discretization, u: np.ndarray) -> float:
    total = 0.0
    nk1 = n_monomials(disc.k - 1)
    for ci, op in enumerate(disc.ops):
        w = u[disc.dof_map.cell_velocity[ci]]
        gw = op.tensor_field(op.grad_projector @ w, op.mono_vals[:nk1])
        total += float(np.einsum("qij,qij,q->", gw, gw, op.quad.weights))
    return float(np.sqrt(total))
