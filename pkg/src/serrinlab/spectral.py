"""Second Neumann and Steklov eigenvalues and the oscillation bound.

Both eigenproblems share the stiffness matrix; the Neumann problem pairs it
with the consistent volume mass matrix, the Steklov problem with a diagonal
boundary mass carrying the spectral arclength weights.  The smallest
nonzero eigenvalue comes from inverse iteration with the constant mode
deflated in the defining inner product; each iteration reuses one sparse
factorization of the mean-pinned stiffness system.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import BoundaryFunction, boundary_normals
from .errors import ConvergenceFailure
from .identities import audit_neumann
from .meshfem import (
    FemField,
    assemble_mass,
    assemble_stiffness,
    nodal_to_quad,
    quad_integral,
    volume_integral,
)

MAX_ITERATIONS = 500
RAYLEIGH_TOL = 1e-9


@dataclass
class EigenResult:
    which: str
    value: float
    eigenfunction: FemField
    rayleigh_residual: float
    iterations: int


def _pinned_solver(mesh):
    """Factorized solve of K y = rhs subject to zero volume mean."""
    if "eig_solver" not in mesh._cache:
        K = assemble_stiffness(mesh)
        m = np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()
        A = sp.bmat([[K, m[:, None]], [m[None, :], None]], format="csc")
        lu = spla.splu(A)
        n = mesh.n_nodes

        def solve(rhs):
            return lu.solve(np.concatenate([rhs, [0.0]]))[:n]

        mesh._cache["eig_solver"] = solve
    return mesh._cache["eig_solver"]


def _inverse_iteration(mesh, apply_b, which):
    K = assemble_stiffness(mesh)
    solve = _pinned_solver(mesh)
    ones = np.ones(mesh.n_nodes)
    b_ones = apply_b(ones)
    ones_sq = float(ones @ b_ones)

    def deflate(vec):
        return vec - (float(vec @ b_ones) / ones_sq) * ones

    x = deflate(mesh.nodes[:, 0].copy())
    x /= np.sqrt(float(x @ apply_b(x)))
    value = None
    for it in range(1, MAX_ITERATIONS + 1):
        y = solve(apply_b(x))
        y = deflate(y)
        by = apply_b(y)
        norm = np.sqrt(float(y @ by))
        if norm == 0.0:
            raise ConvergenceFailure(f"{which}: iteration collapsed to zero")
        x = y / norm
        bx = apply_b(x)
        kx = K @ x
        value = float(x @ kx) / float(x @ bx)
        residual = np.linalg.norm(kx - value * bx) / np.linalg.norm(kx)
        if residual <= RAYLEIGH_TOL:
            return value, x, residual, it
    raise ConvergenceFailure(
        f"{which}: no convergence after {MAX_ITERATIONS} iterations "
        f"(residual {residual:.3e})"
    )


def neumann_eigenvalue_2(mesh) -> EigenResult:
    """Smallest nonzero eigenvalue of the free-membrane Laplacian."""
    M = assemble_mass(mesh)
    value, x, res, it = _inverse_iteration(mesh, lambda v: M @ v, "neumann")
    return EigenResult("neumann", value, FemField(mesh, x), res, it)


def _boundary_mass_diagonal(mesh):
    if "bmass_diag" not in mesh._cache:
        w = BoundaryFunction(mesh, np.zeros(len(mesh.boundary_idx))).weights
        diag = np.zeros(mesh.n_nodes)
        diag[mesh.boundary_idx] = w
        mesh._cache["bmass_diag"] = diag
    return mesh._cache["bmass_diag"]


def steklov_eigenvalue_2(mesh) -> EigenResult:
    """Smallest nonzero eigenvalue of the Dirichlet-to-Neumann map."""
    diag = _boundary_mass_diagonal(mesh)
    value, x, res, it = _inverse_iteration(mesh, lambda v: diag * v, "steklov")
    return EigenResult("steklov", value, FemField(mesh, x), res, it)


def eigenvalues(mesh):
    """Cached (nu2, sigma2) pair for a mesh."""
    if "eigpair" not in mesh._cache:
        nu = neumann_eigenvalue_2(mesh)
        sig = steklov_eigenvalue_2(mesh)
        mesh._cache["eigpair"] = (nu, sig)
    return mesh._cache["eigpair"]


@dataclass
class OscillationL2Report:
    lhs: float
    rhs: float
    slack: float
    nu2: float
    sigma2: float
    flux_deviation_l2: float
    h_mean_volume: float
    h_mean_boundary: float


def check_l2_oscillation_bound(u_field, z, a=0.0) -> OscillationL2Report:
    """Volume-L2 bound on h = q - u by its flux deviation:

        || h - mean(h) ||_{2, Omega} <= 2 || R - q_nu ||_{2, Gamma}
                                        / sqrt(nu2 * sigma2).

    Both the volume mean (used in the bound) and the boundary mean are
    reported.  The slack rhs - lhs must not drop below the discretization
    band; it is reported, never clamped.
    """
    audit_neumann(u_field)
    mesh = u_field.mesh
    z = np.asarray(z, dtype=float)
    rel = mesh.nodes - z
    h = 0.5 * (rel**2).sum(1) + a - u_field.coeffs
    area = volume_integral(mesh, lambda p: np.ones(len(p)))
    h_mean = volume_integral(mesh, h) / area
    dev = h - h_mean
    lhs = float(np.sqrt(quad_integral(mesh, nodal_to_quad(mesh, dev) ** 2)))

    bpts = mesh.nodes[mesh.boundary_idx]
    nu = boundary_normals(mesh)
    q_nu = np.einsum("ij,ij->i", bpts - z, nu)
    R = getattr(u_field, "R_disc", None)
    if R is None:
        R = mesh.domain.measures.R
    bf = BoundaryFunction(mesh, (R - q_nu) ** 2)
    flux_dev = float(np.sqrt(np.dot(bf.values, bf.weights)))
    h_bnd = BoundaryFunction(mesh, h[mesh.boundary_idx])
    h_mean_boundary = float(np.dot(h_bnd.values, h_bnd.weights) / h_bnd.weights.sum())

    nu_res, sig_res = eigenvalues(mesh)
    rhs = 2.0 * flux_dev / np.sqrt(nu_res.value * sig_res.value)
    return OscillationL2Report(
        lhs=lhs,
        rhs=rhs,
        slack=rhs - lhs,
        nu2=nu_res.value,
        sigma2=sig_res.value,
        flux_deviation_l2=flux_dev,
        h_mean_volume=float(h_mean),
        h_mean_boundary=h_mean_boundary,
    )
