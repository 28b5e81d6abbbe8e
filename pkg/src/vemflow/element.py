"""Per-element degrees of freedom, projectors, stabilization, divergence.

The local velocity space is the enhanced divergence-free family (order
k >= 2).  Virtual functions are known only through their DoFs:

  * values at vertices and at the k-1 interior Gauss-Lobatto points of
    every face (two components each),
  * moments of the divergence against the scaled monomials of degree
    <= k-1 except the constant,
  * moments against the perp monomials xperp m_delta, |delta| <= k-3.

From these the energy projector onto [P_k]^2, the L^2 projector onto
[P_k]^2 (via the enhancement identity), and the L^2 projector of the
gradient onto [P_{k-1}]^{2x2} are computed exactly, along with the
dofi-dofi stabilization and the local pressure/divergence coupling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.linalg as la

from . import basis
from .basis import CellFrame, monomial_indices, monomial_position, n_monomials

__all__ = ["DofLayout", "ElementOperators", "build_element", "interpolate_dofs"]


@dataclass(frozen=True)
class DofLayout:
    """Counts and ordering of the local velocity DoFs.

    Ordering: vertex values (x,y per vertex, loop order), edge values (x,y
    per interior Gauss-Lobatto point, face order then node order along the
    face), divergence moments (graded monomial order, constant skipped),
    interior moments (graded order).
    """

    k: int
    n_vertices: int

    @property
    def n_edge_points(self) -> int:
        return self.n_vertices * (self.k - 1)

    @property
    def n_div_moments(self) -> int:
        return n_monomials(self.k - 1) - 1

    @property
    def n_interior_moments(self) -> int:
        return n_monomials(self.k - 3)

    @property
    def n_boundary_dofs(self) -> int:
        return 2 * (self.n_vertices + self.n_edge_points)

    @property
    def total(self) -> int:
        return self.n_boundary_dofs + self.n_div_moments + self.n_interior_moments


def dof_layout(n_vertices: int, k: int) -> DofLayout:
    if k < 2:
        raise ValueError("the divergence-free family requires k >= 2")
    return DofLayout(k, n_vertices)


@dataclass
class ElementOperators:
    """Dense local operators and evaluation tables for one cell."""

    layout: DofLayout
    frame: CellFrame
    area: float
    min_face_length: float
    loop: np.ndarray                 # (nv, 2) vertex coordinates, CCW
    site_coords: np.ndarray          # (n_points, 2) vertex+edge DoF sites
    h1_projector: np.ndarray         # (2*nk, ndof): DoFs -> [P_k]^2 coefficients
    l2_projector: np.ndarray         # (2*nk, ndof)
    grad_projector: np.ndarray       # (4*nk1, ndof): DoFs -> [P_{k-1}]^{2x2}
    stabilization: np.ndarray        # (ndof, ndof), symmetric PSD
    div_matrix: np.ndarray           # (nk1, ndof): -(m_i, div phi_l)
    stiffness: np.ndarray            # (ndof, ndof): (grad Ph w, grad Ph v) + stab
    gram_k1: np.ndarray              # (nk1, nk1) pressure-basis Gram
    quad: basis.QuadratureRule
    mono_vals: np.ndarray            # (n_{k+1}, npts) scaled monomials at quad pts
    mono_grads: np.ndarray           # (n_k, npts, 2)

    @property
    def k(self) -> int:
        return self.layout.k

    @property
    def ndof(self) -> int:
        return self.layout.total

    # -- pointwise evaluation of projected fields ---------------------------

    def l2_field(self, coeffs: np.ndarray, mono_vals: np.ndarray | None = None) -> np.ndarray:
        """(npts, 2) values of the [P_k]^2 polynomial with given coefficients."""
        nk = n_monomials(self.k)
        m = self.mono_vals[:nk] if mono_vals is None else mono_vals
        return np.stack([coeffs[:nk] @ m, coeffs[nk:] @ m], axis=-1)

    def tensor_field(self, coeffs: np.ndarray, mono_vals: np.ndarray | None = None) -> np.ndarray:
        """(npts, 2, 2) values of the [P_{k-1}]^{2x2} polynomial."""
        nk1 = n_monomials(self.k - 1)
        m = self.mono_vals[:nk1] if mono_vals is None else mono_vals
        blocks = coeffs.reshape(2, 2, nk1)
        return np.einsum("ijb,bq->qij", blocks, m)

    def h1_gradient_field(self, coeffs: np.ndarray, mono_grads: np.ndarray | None = None) -> np.ndarray:
        """(npts, 2, 2) gradient of the [P_k]^2 polynomial; entry (i,j) = d u_i / d x_j."""
        nk = n_monomials(self.k)
        g = self.mono_grads if mono_grads is None else mono_grads
        comps = coeffs.reshape(2, nk)
        return np.einsum("ia,aqj->qij", comps, g)

    def divergence_norm(self, dofs: np.ndarray) -> float:
        """L2 norm of div v on the cell (div v is a known P_{k-1} polynomial)."""
        mom = -self.div_matrix @ dofs
        coef = la.solve(self.gram_k1, mom)
        return float(np.sqrt(max(coef @ mom, 0.0)))


def _face_lagrange(ts: np.ndarray, tq: np.ndarray) -> np.ndarray:
    """Lagrange evaluation matrix L[s, q] from nodes ts to points tq."""
    n = len(ts)
    L = np.ones((n, len(tq)))
    for s in range(n):
        for m in range(n):
            if m != s:
                L[s] *= (tq - ts[m]) / (ts[s] - ts[m])
    return L


def build_element(loop: np.ndarray, k: int, quad_order: int | None = None) -> ElementOperators:
    """Compute all local operators for one convex polygonal cell."""
    loop = np.asarray(loop, float)
    nv = len(loop)
    layout = dof_layout(nv, k)
    ndof = layout.total

    centroid, area = basis.polygon_centroid_area(loop)
    if area <= 0:
        raise ValueError("cell loop must be counterclockwise with positive area")
    diffs = loop[:, None, :] - loop[None, :, :]
    h = float(np.sqrt(np.max(np.sum(diffs**2, axis=-1))))
    frame = CellFrame(float(centroid[0]), float(centroid[1]), h)

    if quad_order is None:
        quad_order = 2 * k + 2
    quad = basis.polygon_quadrature(loop, quad_order)

    nk = n_monomials(k)
    nk1 = n_monomials(k - 1)
    nkp = n_monomials(k + 1)
    idx_kp = monomial_indices(k + 1)

    mono_vals = basis.eval_scalar_monomials(frame, k + 1, quad.points)
    mono_grads = basis.eval_monomial_gradients(frame, k, quad.points)

    # Gram matrices of scaled monomials up to degree k+1 (rule is exact there)
    gram_big = np.einsum("aq,bq,q->ab", mono_vals, mono_vals, quad.weights)
    gram_k = gram_big[:nk, :nk]
    gram_k1 = gram_big[:nk1, :nk1]

    # stiffness Gram of the vector monomial basis (x-block then y-block)
    gstiff_scalar = np.einsum("aqj,bqj,q->ab", mono_grads, mono_grads, quad.weights)
    gstiff = np.zeros((2 * nk, 2 * nk))
    gstiff[:nk, :nk] = gstiff_scalar
    gstiff[nk:, nk:] = gstiff_scalar

    # -- faces: DoF sites, traces, quadrature -------------------------------
    gl_nodes, _ = basis.gauss_lobatto(k + 1)
    ts = (gl_nodes + 1.0) / 2.0
    ngq = k + 2  # Gauss points per face; exact to degree 2k+3
    gq_nodes, gq_w = np.polynomial.legendre.leggauss(ngq)
    tq = (gq_nodes + 1.0) / 2.0
    lag = _face_lagrange(ts, tq)

    site_coords = np.empty((nv + layout.n_edge_points, 2))
    site_coords[:nv] = loop
    faces = []
    min_face = np.inf
    for i in range(nv):
        p0, p1 = loop[i], loop[(i + 1) % nv]
        length = float(np.hypot(*(p1 - p0)))
        min_face = min(min_face, length)
        tangent = (p1 - p0) / length
        normal = np.array([tangent[1], -tangent[0]])  # outward for CCW loops
        qpts = np.outer(1.0 - tq, p0) + np.outer(tq, p1)
        qw = gq_w * (length / 2.0)
        site_slots = [i]  # local point-site ids along this face
        for j in range(k - 1):
            slot = nv + i * (k - 1) + j
            site_coords[slot] = (1.0 - ts[j + 1]) * p0 + ts[j + 1] * p1
            site_slots.append(slot)
        site_slots.append((i + 1) % nv)
        faces.append((qpts, qw, normal, site_slots))

    def dof_of_site(slot: int, comp: int) -> int:
        if slot < nv:
            return 2 * slot + comp
        return 2 * nv + 2 * (slot - nv) + comp

    off_div = layout.n_boundary_dofs
    off_int = off_div + layout.n_div_moments

    # divergence moments of the basis: rows over M_{k-1}
    div_mom = np.zeros((nk1, ndof))
    for i in range(1, nk1):
        div_mom[i, off_div + i - 1] = 1.0
    flux = np.zeros(ndof)
    for qpts, qw, normal, slots in faces:
        contrib = lag @ qw[:, None]  # (nsites, 1)
        for s, slot in enumerate(slots):
            flux[dof_of_site(slot, 0)] += contrib[s, 0] * normal[0]
            flux[dof_of_site(slot, 1)] += contrib[s, 0] * normal[1]
    div_mom[0] = flux

    div_poly = la.solve(gram_k1, div_mom)  # coefficients of div(phi) in M_{k-1}

    # moments against gradient fields: P1[g, l] = (phi_l, grad m_g)
    p1 = np.zeros((nkp, ndof))
    for g in range(1, nkp):
        alpha = idx_kp[g]
        vol = -(gram_big[:nk1, g] @ div_poly)
        row = np.zeros(ndof)
        row += vol
        for qpts, qw, normal, slots in faces:
            xi = (qpts[:, 0] - frame.cx) / frame.h
            eta = (qpts[:, 1] - frame.cy) / frame.h
            mg = xi ** alpha[0] * eta ** alpha[1]
            contrib = lag @ (qw * mg)[:, None]
            for s, slot in enumerate(slots):
                row[dof_of_site(slot, 0)] += contrib[s, 0] * normal[0]
                row[dof_of_site(slot, 1)] += contrib[s, 0] * normal[1]
        p1[g] = row

    # perp-moment rows for |delta| <= k-3 are DoFs
    p2 = np.zeros((nk1, ndof))
    n_int = layout.n_interior_moments
    for d in range(n_int):
        p2[d, off_int + d] = 1.0

    # Gram of vector monomials against perp monomials xperp m_delta
    cperp = np.zeros((nk1, 2 * nk))
    for d, delta in enumerate(monomial_indices(k - 1)):
        iy = monomial_position((delta[0], delta[1] + 1))
        ix = monomial_position((delta[0] + 1, delta[1]))
        cperp[d, :nk] = gram_big[:nk, iy]
        cperp[d, nk:] = -gram_big[:nk, ix]

    # vector moments (phi_l, m_gamma e_i) via the closed-form decomposition
    def vector_moment_rows(max_deg: int, p2_rows: np.ndarray) -> np.ndarray:
        nrows = n_monomials(max_deg)
        out = np.zeros((2 * nrows, ndof))
        for comp, comp_name in enumerate("xy"):
            for gi, gamma in enumerate(monomial_indices(max_deg)):
                dec = basis.vector_monomial_decompose(gamma, comp_name, frame.h)
                row = dec.grad_coef * p1[monomial_position(dec.grad_index)]
                if dec.perp_index is not None:
                    row = row + dec.perp_coef * p2_rows[monomial_position(dec.perp_index)]
                out[comp * nrows + gi] = row
        return out

    # -- energy projector ----------------------------------------------------
    # rhs rows: (grad phi, grad p_a) = -(phi, lap p_a) + boundary flux of grad p_a
    b_mat = np.zeros((2 * nk, ndof))
    vmom_low = vector_moment_rows(k - 2, p2) if k >= 2 else np.zeros((0, ndof))
    nk2 = n_monomials(k - 2)
    for comp in range(2):
        for ai, alpha in enumerate(monomial_indices(k)):
            row = np.zeros(ndof)
            ax, ay = alpha
            if ax >= 2:
                row += ax * (ax - 1) / frame.h**2 * vmom_low[comp * nk2 + monomial_position((ax - 2, ay))]
            if ay >= 2:
                row += ay * (ay - 1) / frame.h**2 * vmom_low[comp * nk2 + monomial_position((ax, ay - 2))]
            row = -row
            for qpts, qw, normal, slots in faces:
                xi = (qpts[:, 0] - frame.cx) / frame.h
                eta = (qpts[:, 1] - frame.cy) / frame.h
                gx = ax / frame.h * xi ** max(ax - 1, 0) * eta**ay if ax > 0 else 0.0
                gy = ay / frame.h * xi**ax * eta ** max(ay - 1, 0) if ay > 0 else 0.0
                gn = gx * normal[0] + gy * normal[1]
                contrib = lag @ (qw * gn)[:, None]
                for s, slot in enumerate(slots):
                    row[dof_of_site(slot, comp)] += contrib[s, 0]
            b_mat[comp * nk + ai] = row

    # constant modes fixed by matching the boundary average per component
    g_sys = gstiff.copy()
    for comp in range(2):
        arow = comp * nk  # row of the constant monomial in this component block
        lhs = np.zeros(2 * nk)
        rhs = np.zeros(ndof)
        for qpts, qw, normal, slots in faces:
            mvals = basis.eval_scalar_monomials(frame, k, qpts)
            lhs[comp * nk : comp * nk + nk] += mvals @ qw
            contrib = lag @ qw[:, None]
            for s, slot in enumerate(slots):
                rhs[dof_of_site(slot, comp)] += contrib[s, 0]
        g_sys[arow] = lhs
        b_mat[arow] = rhs
    h1_projector = la.solve(g_sys, b_mat)

    # -- enhancement closes the remaining perp moments -----------------------
    for d, delta in enumerate(monomial_indices(k - 1)):
        if delta[0] + delta[1] > k - 3:
            p2[d] = cperp[d] @ h1_projector

    vmom = vector_moment_rows(k, p2)
    gram_vec = np.zeros((2 * nk, 2 * nk))
    gram_vec[:nk, :nk] = gram_k
    gram_vec[nk:, nk:] = gram_k
    l2_projector = la.solve(gram_vec, vmom)

    # -- gradient projector ---------------------------------------------------
    # tensor basis ordering: blocks (i,j) = (0,0),(0,1),(1,0),(1,1) over M_{k-1}
    rhs_grad = np.zeros((4 * nk1, ndof))
    for i in range(2):
        for j in range(2):
            for bi, beta in enumerate(monomial_indices(k - 1)):
                row = np.zeros(ndof)
                bj = beta[j]
                if bj > 0:
                    lower = (beta[0] - 1, beta[1]) if j == 0 else (beta[0], beta[1] - 1)
                    row -= bj / frame.h * vmom[i * nk + monomial_position(lower)]
                for qpts, qw, normal, slots in faces:
                    xi = (qpts[:, 0] - frame.cx) / frame.h
                    eta = (qpts[:, 1] - frame.cy) / frame.h
                    mb = xi ** beta[0] * eta ** beta[1]
                    contrib = lag @ (qw * mb * normal[j])[:, None]
                    for s, slot in enumerate(slots):
                        row[dof_of_site(slot, i)] += contrib[s, 0]
                rhs_grad[(2 * i + j) * nk1 + bi] = row
    grad_projector = np.empty_like(rhs_grad)
    for blk in range(4):
        sl = slice(blk * nk1, (blk + 1) * nk1)
        grad_projector[sl] = la.solve(gram_k1, rhs_grad[sl])

    # -- dofi-dofi stabilization ----------------------------------------------
    dof_of_poly = np.zeros((ndof, 2 * nk))
    site_mono = basis.eval_scalar_monomials(frame, k, site_coords)  # (nk, nsites)
    for slot in range(nv + layout.n_edge_points):
        for comp in range(2):
            dof_of_poly[dof_of_site(slot, comp), comp * nk : (comp + 1) * nk] = site_mono[:, slot]
    for i in range(1, nk1):
        for comp in range(2):
            for ai, alpha in enumerate(monomial_indices(k)):
                a_c = alpha[comp]
                if a_c > 0:
                    lower = (alpha[0] - 1, alpha[1]) if comp == 0 else (alpha[0], alpha[1] - 1)
                    dof_of_poly[off_div + i - 1, comp * nk + ai] = (
                        a_c / frame.h * gram_big[monomial_position(lower), i]
                    )
    for d in range(n_int):
        dof_of_poly[off_int + d] = cperp[d]

    residual = np.eye(ndof) - dof_of_poly @ h1_projector
    stabilization = residual.T @ residual

    stiffness = h1_projector.T @ gstiff @ h1_projector + stabilization

    return ElementOperators(
        layout=layout,
        frame=frame,
        area=float(area),
        min_face_length=float(min_face),
        loop=loop,
        site_coords=site_coords,
        h1_projector=h1_projector,
        l2_projector=l2_projector,
        grad_projector=grad_projector,
        stabilization=stabilization,
        div_matrix=-div_mom,
        stiffness=stiffness,
        gram_k1=gram_k1,
        quad=quad,
        mono_vals=mono_vals,
        mono_grads=mono_grads,
    )


def interpolate_dofs(ops: ElementOperators, velocity, gradient=None) -> np.ndarray:
    """DoF vector of a smooth field: point values, divergence moments, and
    interior perp moments.  The gradient is required when k implies moment
    DoFs (it always does: divergence moments exist for every k >= 2)."""
    layout = ops.layout
    out = np.empty(layout.total)
    vals = np.asarray(velocity(ops.site_coords), float)
    out[: layout.n_boundary_dofs : 2] = vals[:, 0]
    out[1 : layout.n_boundary_dofs : 2] = vals[:, 1]

    if gradient is None:
        raise ValueError("interpolation needs the field gradient for moment DoFs")
    grads = np.asarray(gradient(ops.quad.points), float)  # (npts, 2, 2)
    div = grads[:, 0, 0] + grads[:, 1, 1]
    nk1 = n_monomials(layout.k - 1)
    mom = np.einsum("aq,q,q->a", ops.mono_vals[:nk1], div, ops.quad.weights)
    off = layout.n_boundary_dofs
    out[off : off + layout.n_div_moments] = mom[1:]

    uvals = np.asarray(velocity(ops.quad.points), float)
    off = off + layout.n_div_moments
    for d, delta in enumerate(monomial_indices(layout.k - 3)):
        perp = basis.eval_perp_monomial(ops.frame, delta, ops.quad.points)
        out[off + d] = float(np.einsum("qi,qi,q->", uvals, perp, ops.quad.weights))
    return out
