"""Quadratic FEM on mapped polar meshes of star-shaped domains.

The mesh is built from graded annular rings conforming to r(theta), closed
by a regular fan at the center.  Boundary edges are curved (isoparametric
quadratic geometry) with all boundary nodes placed exactly on the analytic
curve; interior elements are straight.  The outermost rings are angularly
refined so that boundary quantities sit well below interior FEM error.

Solvers cover the three boundary value problems used downstream:
constant-source Dirichlet, constant-flux Neumann (zero-mean gauge via a
Lagrange multiplier), and harmonic extension of boundary data.
"""

import json
import math
import os

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._quadrature import gauss_legendre_01, triangle_rule
from .errors import DegeneratePatch, MeshTooFine, SolverFailure
from .geometry import domain_from_spec

SOURCE = 2.0          # constant Laplacian of the torsion field in the plane
DEFAULT_DOF_CAP = 400_000
BOUNDARY_REFINE = 4   # angular refinement factor of the outermost rings
ASSEMBLY_DEGREE = 8   # quadrature degree for matrix assembly
VOLUME_DEGREE = 4     # quadrature degree for volume_integral

_FAN_MAX = 24         # spoke cap keeping fan apex angles fat
_GROWTH = 1.6         # ring-to-ring spacing growth walking inward
_HEADROOM = 1.2       # schedule spacing = h/_HEADROOM; strip diagonals with
                      # ring-count transitions reach ~1.56x the local spacing
_RADIAL = 0.75        # radial gap = _RADIAL * spacing; counts quantize the
                      # tangential spacing into [s/2, s], so flatter rings
                      # keep the aspect ratio near 1

# interior sampling points for gradient recovery (barycentric 2/3,1/6,1/6)
_SPR_REF = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])


# -- reference element ------------------------------------------------------

def p2_shape(ref):
    """P2 Lagrange values N (Q,6) at reference points (Q,2)."""
    ref = np.atleast_2d(ref)
    xi, eta = ref[:, 0], ref[:, 1]
    lam = 1.0 - xi - eta
    return np.stack(
        [
            lam * (2 * lam - 1),
            xi * (2 * xi - 1),
            eta * (2 * eta - 1),
            4 * xi * eta,
            4 * eta * lam,
            4 * xi * lam,
        ],
        axis=1,
    )


def p2_dshape(ref):
    """P2 gradients dN (Q,6,2) with respect to reference coordinates."""
    ref = np.atleast_2d(ref)
    xi, eta = ref[:, 0], ref[:, 1]
    lam = 1.0 - xi - eta
    z = np.zeros_like(xi)
    dxi = np.stack(
        [1 - 4 * lam, 4 * xi - 1, z, 4 * eta, -4 * eta, 4 * (lam - xi)], 1
    )
    deta = np.stack(
        [1 - 4 * lam, z, 4 * eta - 1, 4 * xi, 4 * (lam - eta), -4 * xi], 1
    )
    return np.stack([dxi, deta], axis=2)


# constant reference Hessians (xx, yy, xy) per shape function
_P2_D2 = np.array(
    [
        [4.0, 4.0, 4.0],
        [4.0, 0.0, 0.0],
        [0.0, 4.0, 0.0],
        [0.0, 0.0, 4.0],
        [0.0, -8.0, -4.0],
        [-8.0, 0.0, -4.0],
    ]
)

_EDGE_SHAPE = lambda s: np.stack(
    [(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1
)
_EDGE_DSHAPE = lambda s: np.stack([4 * s - 3, 4 * s - 1, 4 - 8 * s], axis=1)


# -- mesh -------------------------------------------------------------------

class Mesh:
    """Conforming P2 triangulation of a radial domain.

    triangles rows are [v0, v1, v2, m12, m20, m01] node indices; node 0 is
    the domain center.  Boundary nodes (vertices and edge midnodes) lie on
    the analytic curve and are stored ordered by theta.
    """

    def __init__(self, domain, nodes, triangles, n_vertices, boundary_idx,
                 boundary_theta, boundary_edges, h_target, h_max):
        self.domain = domain
        self.nodes = nodes
        self.triangles = triangles
        self.n_vertices = n_vertices
        self.boundary_idx = boundary_idx
        self.boundary_theta = boundary_theta
        self.boundary_edges = boundary_edges
        self.h_target = h_target
        self.h_max = h_max
        self.n_nodes = nodes.shape[0]
        self.boundary_mask = np.zeros(self.n_nodes, dtype=bool)
        self.boundary_mask[boundary_idx] = True
        self._cache = {}

    # cached element operators per quadrature degree
    def element_ops(self, degree):
        key = ("ops", degree)
        if key not in self._cache:
            bary, w = triangle_rule(degree)
            ref = bary[:, 1:]  # (xi, eta) = (lambda2, lambda3)
            N = p2_shape(ref)
            dN = p2_dshape(ref)
            coords = self.nodes[self.triangles]            # (T,6,2)
            J = np.einsum("tnk,qnd->tqdk", coords, dN)     # (T,Q,2,2): J[d,k]=dx_k/dxi_d
            detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
            # inv[d,k] = d(xi_d)/d(x_k), i.e. (J^{-1})^T of J[d,k] = d(x_k)/d(xi_d)
            inv = np.empty_like(J)
            inv[..., 0, 0] = J[..., 1, 1]
            inv[..., 0, 1] = -J[..., 1, 0]
            inv[..., 1, 0] = -J[..., 0, 1]
            inv[..., 1, 1] = J[..., 0, 0]
            inv = inv / detJ[..., None, None]
            g = np.einsum("qnd,tqdk->tqnk", dN, inv)
            qp = np.einsum("qn,tnk->tqk", N, coords)
            self._cache[key] = {"w": w, "N": N, "detJ": detJ, "grad": g, "qp": qp}
        return self._cache[key]

    @property
    def node_elements(self):
        """List of element indices incident to each node."""
        if "node_elems" not in self._cache:
            incid = [[] for _ in range(self.n_nodes)]
            for t, row in enumerate(self.triangles):
                for n in row:
                    incid[n].append(t)
            self._cache["node_elems"] = incid
        return self._cache["node_elems"]

    def qualities(self):
        """2 * inradius / circumradius per element (straight version)."""
        v = self.nodes[self.triangles[:, :3]]
        l0 = np.linalg.norm(v[:, 1] - v[:, 2], axis=1)
        l1 = np.linalg.norm(v[:, 2] - v[:, 0], axis=1)
        l2 = np.linalg.norm(v[:, 0] - v[:, 1], axis=1)
        area = 0.5 * np.abs(
            (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
            - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1])
        )
        s = 0.5 * (l0 + l1 + l2)
        return 8.0 * area**2 / (s * l0 * l1 * l2)

    def edge_lengths(self):
        v = self.nodes[self.triangles[:, :3]]
        return np.stack(
            [
                np.linalg.norm(v[:, 1] - v[:, 2], axis=1),
                np.linalg.norm(v[:, 2] - v[:, 0], axis=1),
                np.linalg.norm(v[:, 0] - v[:, 1], axis=1),
            ],
            axis=1,
        )


def _ring_schedule(r_max, speed_max, h, refine):
    """Ring radii and node counts, inside-out.

    Radial gaps grow geometrically away from the boundary (angular
    refinement `refine` at the outermost rings).  Node counts are quantized
    to levels 6 * 2^k so consecutive rings are either aligned or in an exact
    2:1 ratio, which keeps the strip triangles well shaped and phase-aligned.
    """
    t_list, s_list = [1.0], [h / refine]
    while True:
        s_next = min(h, _GROWTH * s_list[-1])
        t_next = t_list[-1] - _RADIAL * s_next / r_max
        if t_next * r_max <= 1.2 * h:
            if t_next * r_max > 0.3 * h:
                t_list.append(t_next)
                s_list.append(s_next)
            break
        if t_next <= 0.0:
            break
        t_list.append(t_next)
        s_list.append(s_next)
    t_list.reverse()
    s_list.reverse()

    def level(natural):
        n = 6
        while n < natural:
            n *= 2
        return n

    counts = [
        level(2.0 * math.pi * t * speed_max / s) for t, s in zip(t_list, s_list)
    ]
    for j in range(1, len(counts)):
        counts[j] = max(counts[j], counts[j - 1])          # non-decreasing outward
    for j in range(len(counts) - 1, 0, -1):
        counts[j - 1] = max(counts[j - 1], counts[j] // 2)  # at most 2:1 per strip
    while counts and counts[0] > _FAN_MAX:
        # keep the central fan fat: prepend halved rings toward the center
        t_list.insert(0, 0.55 * t_list[0])
        counts.insert(0, counts[0] // 2)
    return t_list, counts


def _merge_strip(inner_idx, outer_idx):
    """Conforming triangle strip between two concentric rings.

    Deterministic two-pointer angular merge using exact integer comparisons;
    ties advance the inner ring, which yields the centered 2:1 template and
    alternating quad splits for aligned rings.
    """
    nA, nB = len(inner_idx), len(outer_idx)
    tris = []
    i = j = 0
    while i < nA or j < nB:
        take_outer = j < nB and (i == nA or (j + 1) * nA < (i + 1) * nB)
        if take_outer:
            tris.append((inner_idx[i % nA], outer_idx[j % nB], outer_idx[(j + 1) % nB]))
            j += 1
        else:
            tris.append((inner_idx[i % nA], outer_idx[j % nB], inner_idx[(i + 1) % nA]))
            i += 1
    return tris


def generate_mesh(domain, h_target, dof_cap=None, boundary_refine=BOUNDARY_REFINE):
    """Triangulate a radial domain with target edge length h_target.

    Raises MeshTooFine when the estimated quadratic dof count exceeds the
    cap (default 400k, overridable via SERRINLAB_DOF_CAP).
    """
    if not 0.0 < h_target < domain.rho0:
        raise ValueError(f"h_target must lie in (0, rho0), got {h_target}")
    if dof_cap is None:
        dof_cap = int(os.environ.get("SERRINLAB_DOF_CAP", DEFAULT_DOF_CAP))

    probe = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
    r_max = float(domain.radius(probe).max())
    speed_max = float(
        np.sqrt(domain.radius(probe) ** 2 + domain.radius_d1(probe) ** 2).max()
    )
    t_ring, n_ring = _ring_schedule(
        r_max, speed_max, h_target / _HEADROOM, boundary_refine
    )

    n_vert = 1 + sum(n_ring)
    n_tri = n_ring[0] + sum(n_ring[j] + n_ring[j + 1] for j in range(len(n_ring) - 1))
    n_edge = (3 * n_tri + n_ring[-1]) // 2
    if n_vert + n_edge > dof_cap:
        raise MeshTooFine(
            f"estimated dof {n_vert + n_edge} exceeds cap {dof_cap} "
            f"(h_target={h_target})"
        )

    verts = [np.asarray(domain.center, dtype=float)]
    ring_indices = []
    next_idx = 1
    for t, n in zip(t_ring, n_ring):
        theta = 2.0 * np.pi * np.arange(n) / n
        pts = domain.center + (t * domain.radius(theta))[:, None] * np.stack(
            [np.cos(theta), np.sin(theta)], axis=1
        )
        verts.append(pts)
        ring_indices.append(np.arange(next_idx, next_idx + n))
        next_idx += n
    vertices = np.vstack([verts[0][None, :], *verts[1:]])

    tris = [(0, ring_indices[0][i], ring_indices[0][(i + 1) % n_ring[0]])
            for i in range(n_ring[0])]
    for j in range(len(n_ring) - 1):
        tris.extend(_merge_strip(ring_indices[j], ring_indices[j + 1]))
    tri_v = np.array(tris, dtype=np.int64)

    # boundary edge lookup: consecutive outer-ring vertices -> midnode theta
    n_b = n_ring[-1]
    outer = ring_indices[-1]
    bnd_theta = {}
    for i in range(n_b):
        a, b = int(outer[i]), int(outer[(i + 1) % n_b])
        bnd_theta[(min(a, b), max(a, b))] = 2.0 * np.pi * (i + 0.5) / n_b

    edge_nodes = {}
    extra = []
    boundary_edges = []
    idx = vertices.shape[0]
    tri6 = np.empty((tri_v.shape[0], 6), dtype=np.int64)
    tri6[:, :3] = tri_v
    for t, (a, b, c) in enumerate(tri_v):
        for slot, (p, q) in enumerate(((b, c), (c, a), (a, b))):
            key = (min(int(p), int(q)), max(int(p), int(q)))
            node = edge_nodes.get(key)
            if node is None:
                th = bnd_theta.get(key)
                if th is None:
                    extra.append(0.5 * (vertices[key[0]] + vertices[key[1]]))
                else:
                    extra.append(domain.boundary_point(th))
                node = idx
                edge_nodes[key] = node
                idx += 1
            tri6[t, 3 + slot] = node

    nodes = np.vstack([vertices, np.array(extra)])

    # ordered boundary node list: vertices at 2*pi*i/n_b, midnodes interleaved
    b_idx = np.empty(2 * n_b, dtype=np.int64)
    b_theta = np.empty(2 * n_b)
    edges = []
    for i in range(n_b):
        a, b = int(outer[i]), int(outer[(i + 1) % n_b])
        key = (min(a, b), max(a, b))
        mid = edge_nodes[key]
        b_idx[2 * i] = a
        b_theta[2 * i] = 2.0 * np.pi * i / n_b
        b_idx[2 * i + 1] = mid
        b_theta[2 * i + 1] = 2.0 * np.pi * (i + 0.5) / n_b
        edges.append((a, b, mid))

    mesh = Mesh(
        domain=domain,
        nodes=nodes,
        triangles=tri6,
        n_vertices=vertices.shape[0],
        boundary_idx=b_idx,
        boundary_theta=b_theta,
        boundary_edges=np.array(edges, dtype=np.int64),
        h_target=h_target,
        h_max=0.0,
    )
    mesh.h_max = float(mesh.edge_lengths().max())

    areas = mesh.element_ops(VOLUME_DEGREE)["detJ"]
    if not (areas > 0).all():
        raise SolverFailure("mesh contains inverted elements")
    return mesh


# -- assembly ---------------------------------------------------------------

def assemble_stiffness(mesh):
    if "K" not in mesh._cache:
        ops = mesh.element_ops(ASSEMBLY_DEGREE)
        Ke = 0.5 * np.einsum(
            "q,tq,tqik,tqjk->tij", ops["w"], ops["detJ"], ops["grad"], ops["grad"]
        )
        mesh._cache["K"] = _scatter(mesh, Ke)
    return mesh._cache["K"]


def assemble_mass(mesh):
    if "M" not in mesh._cache:
        ops = mesh.element_ops(ASSEMBLY_DEGREE)
        Me = 0.5 * np.einsum(
            "q,tq,qi,qj->tij", ops["w"], ops["detJ"], ops["N"], ops["N"]
        )
        mesh._cache["M"] = _scatter(mesh, Me)
    return mesh._cache["M"]


def _scatter(mesh, local):
    T = mesh.triangles
    rows = np.repeat(T, 6, axis=1).ravel()
    cols = np.tile(T, (1, 6)).ravel()
    A = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )
    return A.tocsr()


def boundary_load_vector(mesh, n_gauss=6):
    """Vector g_i = integral of phi_i over the curved boundary edges."""
    if "bload" not in mesh._cache:
        s, w = gauss_legendre_01(n_gauss)
        N = _EDGE_SHAPE(s)            # (Q,3)
        dN = _EDGE_DSHAPE(s)          # (Q,3)
        P = mesh.nodes[mesh.boundary_edges]     # (E,3,2)
        dX = np.einsum("qn,enk->eqk", dN, P)
        speed = np.linalg.norm(dX, axis=2)      # (E,Q)
        loc = np.einsum("q,eq,qn->en", w, speed, N)
        g = np.zeros(mesh.n_nodes)
        np.add.at(g, mesh.boundary_edges.ravel(), loc.ravel())
        mesh._cache["bload"] = g
    return mesh._cache["bload"]


# -- fields -----------------------------------------------------------------

class FemField:
    """Scalar P2 field on a mesh; immutable after the solve.

    Fields representing a known analytic function (e.g. the paraboloid
    q = |x-z|^2/2) may carry ``analytic_gradient``/``analytic_hessian``
    callables; derivative recovery then returns the closed forms instead of
    patch fits, making downstream identity algebra exact for such fields.
    """

    def __init__(self, mesh, coeffs, kind="generic"):
        self.mesh = mesh
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.kind = kind
        self.degree = 2
        self.analytic_gradient = None   # callable points (P,2) -> (P,2)
        self.analytic_hessian = None    # callable points (P,2) -> (P,3) xx,yy,xy
        self._cache = {}
        if self.coeffs.shape != (mesh.n_nodes,):
            raise ValueError("coefficient vector does not match mesh dof count")

    def trace_values(self):
        return self.coeffs[self.mesh.boundary_idx]

    def shifted(self, c):
        out = FemField(self.mesh, self.coeffs + c, self.kind)
        return out

    def gradient_at_quad(self, degree=VOLUME_DEGREE):
        ops = self.mesh.element_ops(degree)
        return np.einsum("tqnk,tn->tqk", ops["grad"], self.coeffs[self.mesh.triangles])

    def values_at_quad(self, degree=VOLUME_DEGREE):
        ops = self.mesh.element_ops(degree)
        return np.einsum("qn,tn->tq", ops["N"], self.coeffs[self.mesh.triangles])

    @property
    def recovered(self):
        """Patch-recovered nodal gradient and Hessian (superconvergent)."""
        if "rec" not in self._cache:
            self._cache["rec"] = _recover(self)
        return self._cache["rec"]


class RecoveredDerivatives:
    def __init__(self, gradient, hessian, flagged):
        self.gradient = gradient    # (n, 2)
        self.hessian = hessian      # (n, 3): xx, yy, xy
        self.flagged = flagged      # node indices that fell back to element values


class HessianField:
    """Nodal recovered Hessians with per-element constant fallback."""

    def __init__(self, field):
        rec = field.recovered
        self.field = field
        self.node_hessians = rec.hessian
        self.flagged = rec.flagged
        self.element_fallback = _element_hessians(field)

    def frobenius_sq_nodal(self):
        H = self.node_hessians
        return H[:, 0] ** 2 + H[:, 1] ** 2 + 2.0 * H[:, 2] ** 2


def _element_hessians(field):
    """Constant per-element Hessian from the affine part of the map."""
    mesh = field.mesh
    v = mesh.nodes[mesh.triangles[:, :3]]
    J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=1)  # (T,2,2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)   # inv[d,k] = d(xi_d)/d(x_k)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 1, 0]
    inv[:, 1, 0] = -J[:, 0, 1]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    c = field.coeffs[mesh.triangles]               # (T,6)
    h_ref = c @ _P2_D2                             # (T,3): xx, yy, xy in ref coords
    Href = np.empty((len(c), 2, 2))
    Href[:, 0, 0] = h_ref[:, 0]
    Href[:, 1, 1] = h_ref[:, 1]
    Href[:, 0, 1] = Href[:, 1, 0] = h_ref[:, 2]
    Hph = np.einsum("tdi,tde,tej->tij", inv, Href, inv)
    return np.stack([Hph[:, 0, 0], Hph[:, 1, 1], 0.5 * (Hph[:, 0, 1] + Hph[:, 1, 0])], 1)


def _recover(field):
    """Superconvergent patch recovery of nodal gradients and Hessians.

    Element gradients are sampled at interior points and fitted with a
    linear polynomial per node patch; the fit value at the node is the
    recovered gradient, its slope the recovered Hessian.  Patches with
    fewer than 3 elements are extended by one vertex ring; nodes whose
    patch cannot support a fit fall back to element values and are flagged.
    """
    mesh = field.mesh
    if field.analytic_gradient is not None:
        grad = field.analytic_gradient(mesh.nodes)
        hess = field.analytic_hessian(mesh.nodes)
        return RecoveredDerivatives(grad, hess, [])
    tris = mesh.triangles
    coords = mesh.nodes[tris]
    dN = p2_dshape(_SPR_REF)                       # (3,6,2)
    J = np.einsum("tnk,qnd->tqdk", coords, dN)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)   # inv[d,k] = d(xi_d)/d(x_k)
    inv[..., 0, 0] = J[..., 1, 1]
    inv[..., 0, 1] = -J[..., 1, 0]
    inv[..., 1, 0] = -J[..., 0, 1]
    inv[..., 1, 1] = J[..., 0, 0]
    inv = inv / detJ[..., None, None]
    gref = np.einsum("qnd,tn->tqd", dN, field.coeffs[tris])
    gsamp = np.einsum("tqd,tqdk->tqk", gref, inv)          # (T,3,2) physical grads
    psamp = np.einsum("qn,tnk->tqk", p2_shape(_SPR_REF), coords)

    node_elems = mesh.node_elements
    vertex_elems = node_elems  # same structure; vertices occupy slots 0..2
    elem_hess = None
    grad = np.zeros((mesh.n_nodes, 2))
    hess = np.zeros((mesh.n_nodes, 3))
    flagged = []
    for n in range(mesh.n_nodes):
        elems = node_elems[n]
        if len(elems) == 0:
            raise DegeneratePatch(f"node {n} has no incident elements")
        if len(elems) < 3:
            seen = set(elems)
            for e in list(elems):
                for v in tris[e, :3]:
                    seen.update(vertex_elems[v])
            elems = sorted(seen)
        if len(elems) < 3:
            if elem_hess is None:
                elem_hess = _element_hessians(field)
            grad[n] = gsamp[elems].mean(axis=(0, 1))
            hess[n] = elem_hess[elems].mean(axis=0)
            flagged.append(n)
            continue
        pts = psamp[elems].reshape(-1, 2) - mesh.nodes[n]
        gs = gsamp[elems].reshape(-1, 2)
        scale = np.abs(pts).max()
        A = np.column_stack([np.ones(len(pts)), pts / scale])
        AtA = A.T @ A
        Atb = A.T @ gs
        sol = np.linalg.solve(AtA, Atb)            # (3,2): columns gx, gy fits
        grad[n] = sol[0]
        hxx = sol[1, 0] / scale
        hyy = sol[2, 1] / scale
        hxy = 0.5 * (sol[2, 0] + sol[1, 1]) / scale
        hess[n] = (hxx, hyy, hxy)
    return RecoveredDerivatives(grad, hess, flagged)


def recover_hessian(field) -> HessianField:
    """Recovered second derivatives of a quadratic-element field."""
    return HessianField(field)


# -- solvers ----------------------------------------------------------------

def _residual_scale(A, x, b):
    """Denominator of the normwise backward error |Ax-b| / (|A||x| + |b|)."""
    norm_a = float(abs(A).sum(axis=1).max())  # infinity norm
    return norm_a * np.linalg.norm(x) + np.linalg.norm(b)


def _check_residual(A, x, b, label):
    rel = np.linalg.norm(A @ x - b) / _residual_scale(A, x, b)
    if rel > 1e-12:
        raise SolverFailure(f"{label}: relative residual {rel:.3e} > 1e-12")
    return rel


def _direct_solve(A_csc, b, label):
    """Sparse LU with one round of iterative refinement."""
    lu = spla.splu(A_csc)
    x = lu.solve(b)
    den = np.linalg.norm(b)
    if den == 0:
        return np.zeros_like(b)
    for _ in range(2):
        r = b - A_csc @ x
        if np.linalg.norm(r) <= 1e-13 * den:
            break
        x = x + lu.solve(r)
    return x


def solve_torsion_dirichlet(mesh) -> FemField:
    """Solve Laplacian(u) = 2 with u = 0 on the boundary."""
    K = assemble_stiffness(mesh)
    m = np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()
    b = -SOURCE * m
    free = ~mesh.boundary_mask
    Kff = K[free][:, free].tocsc()
    u = np.zeros(mesh.n_nodes)
    u[free] = _direct_solve(Kff, b[free], "torsion-dirichlet")
    _check_residual(Kff, u[free], b[free], "torsion-dirichlet")
    return FemField(mesh, u, kind="torsion_dirichlet")


def solve_torsion_neumann(mesh) -> FemField:
    """Solve Laplacian(u) = 2 with u_nu = R_disc, zero mean over Omega.

    R_disc = 2 |Omega_h| / |Gamma_h| uses the discrete measures produced by
    the same quadratures as the load vectors, so the singular system is
    compatible to roundoff.  The zero-mean gauge is enforced through a
    Lagrange multiplier, keeping the system symmetric.
    """
    K = assemble_stiffness(mesh)
    m = np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()
    g = boundary_load_vector(mesh)
    area_h = m.sum()
    perim_h = g.sum()
    r_disc = SOURCE * area_h / perim_h
    b = r_disc * g - SOURCE * m
    A = sp.bmat([[K, m[:, None]], [m[None, :], None]], format="csc")
    rhs = np.concatenate([b, [0.0]])
    sol = _direct_solve(A, rhs, "torsion-neumann")
    u = sol[:-1]
    _check_residual(K, u, b, "torsion-neumann")
    field = FemField(mesh, u, kind="torsion_neumann")
    field.R_disc = r_disc
    field.area_h = area_h
    field.perimeter_h = perim_h
    return field


def solve_harmonic_dirichlet(mesh, g) -> FemField:
    """Harmonic field with prescribed boundary trace g.

    g may be a BoundaryFunction, an array in boundary-node order, or a
    callable of theta.
    """
    vals = getattr(g, "values", g)
    if callable(vals):
        vals = vals(mesh.boundary_theta)
    vals = np.asarray(vals, dtype=float)
    if vals.shape != mesh.boundary_idx.shape:
        raise ValueError("boundary data does not cover all boundary nodes")
    K = assemble_stiffness(mesh)
    u = np.zeros(mesh.n_nodes)
    u[mesh.boundary_idx] = vals
    free = ~mesh.boundary_mask
    b = -(K @ u)[free]
    Kff = K[free][:, free].tocsc()
    u[free] = _direct_solve(Kff, b, "harmonic-dirichlet")
    if np.linalg.norm(b) > 0:
        _check_residual(Kff, u[free], b, "harmonic-dirichlet")
    return FemField(mesh, u, kind="harmonic_dirichlet")


# -- integration -------------------------------------------------------------

def volume_integral(mesh, integrand, degree=VOLUME_DEGREE) -> float:
    """Integrate over the mesh with the order-4 triangle rule.

    integrand: callable(points (P,2)) -> (P,), a nodal array (n_nodes,),
    or a FemField.
    """
    ops = mesh.element_ops(degree)
    if isinstance(integrand, FemField):
        vals = integrand.values_at_quad(degree)
    elif callable(integrand):
        T, Q, _ = ops["qp"].shape
        vals = np.asarray(integrand(ops["qp"].reshape(-1, 2))).reshape(T, Q)
    else:
        arr = np.asarray(integrand, dtype=float)
        if arr.shape == (mesh.n_nodes,):
            vals = np.einsum("qn,tn->tq", ops["N"], arr[mesh.triangles])
        else:
            vals = arr  # already (T, Q)
    return float(0.5 * np.einsum("q,tq,tq->", ops["w"], ops["detJ"], vals))


def nodal_to_quad(mesh, nodal, degree=VOLUME_DEGREE):
    """Interpolate nodal values to quadrature points, shape (T, Q)."""
    ops = mesh.element_ops(degree)
    return np.einsum("qn,tn->tq", ops["N"], np.asarray(nodal)[mesh.triangles])


def quad_integral(mesh, vals_tq, degree=VOLUME_DEGREE) -> float:
    ops = mesh.element_ops(degree)
    return float(0.5 * np.einsum("q,tq,tq->", ops["w"], ops["detJ"], vals_tq))


def quad_points(mesh, degree=VOLUME_DEGREE):
    return mesh.element_ops(degree)["qp"]


# -- point location and evaluation -------------------------------------------

def locate_point(mesh, x, tol=1e-10):
    """Find (element, reference coords) containing physical point x."""
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(mesh.nodes[: mesh.n_vertices] - x, axis=1)
    order = np.argsort(d)[:4]
    candidates = []
    seen = set()
    for v in order:
        for e in mesh.node_elements[int(v)]:
            if e not in seen:
                seen.add(e)
                candidates.append(e)
    best = None
    for e in candidates:
        ref = _invert_map(mesh, e, x)
        if ref is None:
            continue
        lam = np.array([1 - ref[0] - ref[1], ref[0], ref[1]])
        short = -lam.min()
        if short < tol:
            return e, ref
        if best is None or short < best[0]:
            best = (short, e, ref)
    if best is not None and best[0] < 1e-6:
        return best[1], best[2]
    raise ValueError(f"point {x} not located in mesh")


def _invert_map(mesh, elem, x, iters=30):
    coords = mesh.nodes[mesh.triangles[elem]]
    ref = np.array([1 / 3, 1 / 3])
    for _ in range(iters):
        N = p2_shape(ref[None, :])[0]
        dN = p2_dshape(ref[None, :])[0]
        pos = N @ coords
        J = np.einsum("nk,nd->dk", coords, dN)
        try:
            step = np.linalg.solve(J.T, x - pos)
        except np.linalg.LinAlgError:
            return None
        ref = ref + step
        if np.linalg.norm(step) < 1e-14:
            break
        if np.abs(ref).max() > 3:
            return None
    return ref


def eval_field(field, elem, ref):
    N = p2_shape(np.atleast_2d(ref))[0]
    return float(N @ field.coeffs[field.mesh.triangles[elem]])


def eval_gradient(field, elem, ref):
    coords = field.mesh.nodes[field.mesh.triangles[elem]]
    dN = p2_dshape(np.atleast_2d(ref))[0]
    J = np.einsum("nk,nd->dk", coords, dN)   # J[d,k] = dx_k/dxi_d
    gref = field.coeffs[field.mesh.triangles[elem]] @ dN
    return np.linalg.solve(J, gref)


# -- serialization ------------------------------------------------------------

CONTAINER_VERSION = 1


def field_to_dict(field):
    mesh = field.mesh
    return {
        "version": CONTAINER_VERSION,
        "domain": mesh.domain.spec_dict(),
        "h_target": mesh.h_target,
        "nodes": mesh.nodes.tolist(),
        "triangles": mesh.triangles.tolist(),
        "n_vertices": mesh.n_vertices,
        "boundary": {
            "idx": mesh.boundary_idx.tolist(),
            "theta": mesh.boundary_theta.tolist(),
            "edges": mesh.boundary_edges.tolist(),
        },
        "h_max": mesh.h_max,
        "coeffs": field.coeffs.tolist(),
        "kind": field.kind,
    }


def field_from_dict(data):
    if data.get("version") != CONTAINER_VERSION:
        raise ValueError(f"unsupported container version {data.get('version')}")
    domain = domain_from_spec(data["domain"])
    mesh = Mesh(
        domain=domain,
        nodes=np.array(data["nodes"]),
        triangles=np.array(data["triangles"], dtype=np.int64),
        n_vertices=int(data["n_vertices"]),
        boundary_idx=np.array(data["boundary"]["idx"], dtype=np.int64),
        boundary_theta=np.array(data["boundary"]["theta"]),
        boundary_edges=np.array(data["boundary"]["edges"], dtype=np.int64),
        h_target=data["h_target"],
        h_max=data["h_max"],
    )
    return FemField(mesh, np.array(data["coeffs"]), kind=data["kind"])


def save_field(field, path):
    with open(path, "w") as fh:
        json.dump(field_to_dict(field), fh)


def load_field(path):
    with open(path) as fh:
        return field_from_dict(json.load(fh))
