"""Quantitative symmetry measurements for the constant-flux problem.

For each domain the lab measures how far the solution is from the rigid
(disk) configuration: boundary deviations of the trace and its tangential
gradient, the sphere-radii gap rho_e - rho_i about the minimum point, the
weighted Hessian integrals, and the dimensionally calibrated profile psi
that the stability bounds use.  Parameterized perturbation sweeps fit
empirical exponents of the gap against each deviation and check the
one-sided bound gap <= c * psi(deviation) with a single fitted constant.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .boundary import holder_seminorm, normal_derivative, tangential_gradient, trace
from .errors import BoundaryMinimum, GradientNotZeroAtZ, InvalidVariant
from .geometry import build_domain, distances_to_boundary, radii_about
from .identities import audit_neumann, audit_torsion
from .meshfem import (
    FemField,
    eval_gradient,
    generate_mesh,
    locate_point,
    nodal_to_quad,
    p2_dshape,
    p2_shape,
    quad_integral,
    quad_points,
    solve_harmonic_dirichlet,
    solve_torsion_neumann,
)

DEFAULT_ALPHA = 0.5
RIGID_GAP_FLOOR = 1e-10


# -- the stability profile ----------------------------------------------------

def psi(t, N=2, variant="standard"):
    """Dimension-dependent stability modulus.

    standard: t for N = 2; t * max(log(1/t), 1) for N = 3; t^{2/(N-1)} for
    N >= 4.  improved (N >= 4 only): t^{4/(N+1)}.
    """
    if t <= 0:
        raise ValueError(f"profile argument must be positive, got {t}")
    if variant == "improved":
        if N <= 3:
            raise InvalidVariant("improved profile is defined only for N >= 4")
        return t ** (4.0 / (N + 1))
    if variant != "standard":
        raise InvalidVariant(f"unknown profile variant {variant!r}")
    if N == 2:
        return float(t)
    if N == 3:
        return t * max(math.log(1.0 / t), 1.0)
    return t ** (2.0 / (N - 1))


# -- minimum point ---------------------------------------------------------------

@dataclass
class ArgminResult:
    z: np.ndarray
    value: float
    element: int
    ref: np.ndarray
    n_tied: int


def _element_min(coeffs6):
    """Exact minimum of the quadratic on the reference triangle."""
    ref0 = np.zeros((1, 2))
    b = (coeffs6 @ p2_dshape(ref0)[0]).astype(float)       # gradient at origin
    # constant reference Hessian from the shape table
    from .meshfem import _P2_D2

    h = coeffs6 @ _P2_D2                                   # (xx, yy, xy)
    A = np.array([[h[0], h[2]], [h[2], h[1]]])
    cands = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if det > 0 and A[0, 0] > 0:
        x = np.linalg.solve(A, -b)
        if x[0] >= 0 and x[1] >= 0 and x.sum() <= 1:
            cands.append(x)
    for edge in ("xi", "eta", "hyp"):
        if edge == "xi":
            p0, d = np.array([0.0, 0.0]), np.array([1.0, 0.0])
        elif edge == "eta":
            p0, d = np.array([0.0, 0.0]), np.array([0.0, 1.0])
        else:
            p0, d = np.array([1.0, 0.0]), np.array([-1.0, 1.0])
        quad = float(d @ A @ d)
        lin = float(d @ (A @ p0 + b))
        if quad > 0:
            t = min(1.0, max(0.0, -lin / quad))
            cands.append(p0 + t * d)
    vals = [float(p2_shape(c[None, :])[0] @ coeffs6) for c in cands]
    k = int(np.argmin(vals))
    return vals[k], cands[k]


def argmin_point(u_field, tie_tol=1e-11) -> ArgminResult:
    """Minimizer of a quadratic-element field.

    Best node, refined by exact per-element quadratic minimization over the
    elements incident to it.  Refined candidates tied within tie_tol are
    averaged; on symmetric meshes this pins the degenerate flat minimum of
    the rigid case to the symmetry center.
    """
    mesh = u_field.mesh
    best_node = int(np.argmin(u_field.coeffs))
    cands = []
    for e in mesh.node_elements[best_node]:
        c6 = u_field.coeffs[mesh.triangles[e]]
        val, ref = _element_min(c6)
        phys = p2_shape(ref[None, :])[0] @ mesh.nodes[mesh.triangles[e]]
        cands.append((val, phys, e, ref))
    vmin = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= vmin + tie_tol * (1.0 + abs(vmin))]
    z = np.mean([c[1] for c in tied], axis=0)
    best = min(tied, key=lambda c: c[0])
    dist = float(distances_to_boundary(mesh.domain, z[None, :])[0])
    if dist < 1e-8:
        raise BoundaryMinimum(
            f"refined minimizer {z} sits on the boundary; "
            "inconsistent with a positive constant flux"
        )
    return ArgminResult(z=z, value=vmin, element=best[2], ref=best[3],
                        n_tied=len(tied))


# -- deviation measures ------------------------------------------------------------

@dataclass
class DeviationSet:
    osc_gamma_u: float
    grad_inf: float
    grad_l2: float
    tangential_norm: float
    c1alpha_norm: float
    alpha: float

    def as_dict(self):
        return {
            "osc_gamma_u": self.osc_gamma_u,
            "grad_inf": self.grad_inf,
            "grad_l2": self.grad_l2,
            "tangential_norm": self.tangential_norm,
            "c1alpha_norm": self.c1alpha_norm,
        }

    def uniform(self):
        return self.osc_gamma_u + self.grad_inf

    def weak(self):
        return self.osc_gamma_u + self.grad_l2


def deviations(u_field, alpha=DEFAULT_ALPHA) -> DeviationSet:
    """All boundary deviation measures of a constant-flux field."""
    audit_neumann(u_field)
    tr = trace(u_field)
    gt = tangential_gradient(u_field)
    ubar = float(tr.values.max())
    f = ubar - tr.values
    osc = float(f.max())
    grad_inf = float(np.abs(gt.values).max())
    grad_l2 = float(np.sqrt(np.dot(gt.values**2, gt.weights)))
    f_l2 = float(np.sqrt(np.dot(f**2, tr.weights)))
    tangential_norm = math.hypot(f_l2, grad_l2)
    min_sep = u_field.mesh.h_max
    hol = holder_seminorm(-gt.values, gt.arclengths, gt.total_length, alpha, min_sep)
    c1 = osc + grad_inf + hol
    return DeviationSet(osc, grad_inf, grad_l2, tangential_norm, c1, alpha)


# -- pointwise geometric bounds -------------------------------------------------------

@dataclass
class GeometricBoundsReport:
    quadratic_slack_min: float
    linear_slack_min: float
    remark_slack: float
    delta_z: float
    grad_sup: float
    r_i: float


def geometric_bounds_check(u_field) -> GeometricBoundsReport:
    """Lower bounds of (ubar - u) by the boundary distance, plus the
    interiority bound for the minimum point.

    quadratic:  ubar - u >= delta^2 / 2       (any constant-source field)
    linear:     ubar - u >= r_i * delta / 2   (interior sphere radius r_i)
    remark:     delta(z) >= (r_i^2 - 2 osc) / (2 sup |grad u|)
    """
    audit_torsion(u_field)
    mesh = u_field.mesh
    ubar = float(u_field.trace_values().max())
    f = ubar - u_field.coeffs
    delta = _node_distances(mesh)
    m = mesh.domain.measures
    quad_slack = float((f - 0.5 * delta**2).min())
    lin_slack = float((f - 0.5 * m.r_i * delta).min())
    res = argmin_point(u_field)
    delta_z = float(distances_to_boundary(mesh.domain, res.z[None, :])[0])
    grad_sup = float(np.linalg.norm(u_field.recovered.gradient, axis=1).max())
    osc = float(ubar - u_field.trace_values().min())
    remark_rhs = (m.r_i**2 - 2.0 * osc) / (2.0 * grad_sup)
    return GeometricBoundsReport(
        quadratic_slack_min=quad_slack,
        linear_slack_min=lin_slack,
        remark_slack=delta_z - remark_rhs,
        delta_z=delta_z,
        grad_sup=grad_sup,
        r_i=m.r_i,
    )


def _node_distances(mesh):
    if "node_delta" not in mesh._cache:
        mesh._cache["node_delta"] = distances_to_boundary(mesh.domain, mesh.nodes)
    return mesh._cache["node_delta"]


def _quad_distances(mesh):
    if "quad_delta" not in mesh._cache:
        qp = quad_points(mesh)
        T, Q, _ = qp.shape
        mesh._cache["quad_delta"] = distances_to_boundary(
            mesh.domain, qp.reshape(-1, 2)
        ).reshape(T, Q)
    return mesh._cache["quad_delta"]


# -- oscillation bound diagnostics ------------------------------------------------------

@dataclass
class OscillationBoundReport:
    osc_h: float
    weighted_hessian: float      # || sqrt(delta) H h ||_{2, Omega}
    volume_term: float           # int (ubar - u) |H h|^2
    lemma51_ratio: float
    lemma53_ratio: float
    radii_slack: float           # (rho_e + rho_i) - sqrt(|Omega| / pi)
    in_smallness_regime: bool
    rigid: bool


def oscillation_bound_check(u_field, z=None, alpha=DEFAULT_ALPHA,
                            grad_tol=1e-3) -> OscillationBoundReport:
    """Oscillation-of-h diagnostics about the minimum point z.

    Requires grad h(z) ~ 0 (z a joint critical point of u and the
    paraboloid); raises GradientNotZeroAtZ otherwise.  Ratios are reported
    raw; sweeps assert their boundedness, not paper constants.
    """
    audit_neumann(u_field)
    mesh = u_field.mesh
    if z is None:
        res = argmin_point(u_field)
        z, elem, ref = res.z, res.element, res.ref
    else:
        z = np.asarray(z, dtype=float)
        elem, ref = locate_point(mesh, z)
    gu = eval_gradient(u_field, elem, ref)
    if np.linalg.norm(gu) > grad_tol:
        raise GradientNotZeroAtZ(
            f"|grad h(z)| = {np.linalg.norm(gu):.3g} exceeds {grad_tol}"
        )

    tr = trace(u_field)
    bpts = mesh.nodes[mesh.boundary_idx]
    h_trace = 0.5 * ((bpts - z) ** 2).sum(1) - tr.values
    osc_h = float(h_trace.max() - h_trace.min())

    H = u_field.recovered.hessian
    hxx = nodal_to_quad(mesh, H[:, 0])
    hyy = nodal_to_quad(mesh, H[:, 1])
    hxy = nodal_to_quad(mesh, H[:, 2])
    hess_sq = (1.0 - hxx) ** 2 + (1.0 - hyy) ** 2 + 2.0 * hxy**2
    W = float(np.sqrt(quad_integral(mesh, _quad_distances(mesh) * hess_sq)))
    ubar = float(tr.values.max())
    V = float(quad_integral(mesh, (ubar - u_field.values_at_quad()) * hess_sq))

    dev = deviations(u_field, alpha)
    rigid = W <= 1e-8 or dev.tangential_norm <= 1e-10
    lemma51 = 0.0 if rigid else osc_h / W
    lemma53 = 0.0 if rigid else V / (
        (1.0 + dev.osc_gamma_u) * dev.tangential_norm**2
    )
    rho_i, rho_e = radii_about(mesh.domain, z)
    m = mesh.domain.measures
    radii_slack = (rho_e + rho_i) - math.sqrt(m.area / math.pi)
    sigma = min(1.0, m.r_i**2 / 4.0)
    return OscillationBoundReport(
        osc_h=osc_h,
        weighted_hessian=W,
        volume_term=V,
        lemma51_ratio=lemma51,
        lemma53_ratio=lemma53,
        radii_slack=radii_slack,
        in_smallness_regime=dev.uniform() < sigma,
        rigid=rigid,
    )


# -- sweeps -------------------------------------------------------------------------

@dataclass
class StabilityRecord:
    epsilon: float
    rho_gap: float
    deviations: DeviationSet
    psi_values: dict
    z: tuple
    delta_z: float
    mesh_h: float
    in_smallness_regime: bool
    flags: list = dc_field(default_factory=list)


@dataclass
class ExponentFit:
    deviation_kind: str
    slope: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass
class SweepResult:
    records: list
    fits: dict
    c_fit: float            # max rho_gap / psi(uniform deviation)
    dropped: list


def loglog_fit(x, y):
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _richardson(fine, coarse, p=2):
    return fine + (fine - coarse) / (2.0**p - 1.0)


def sweep_member(mode, epsilon, rho0, h_target, alpha=DEFAULT_ALPHA):
    """One sweep record: solve at two mesh levels, Richardson-extrapolate."""
    flags = []
    per_level = []
    for h in (h_target, 0.5 * h_target):
        domain = build_domain(rho0, [(mode, epsilon, 0.0)] if epsilon else [])
        u = solve_torsion_neumann(generate_mesh(domain, h))
        res = argmin_point(u)
        rho_i, rho_e = radii_about(domain, res.z)
        dev = deviations(u, alpha)
        per_level.append(
            {
                "rho_gap": rho_e - rho_i,
                "dev": dev,
                "z": res.z,
                "delta_z": float(
                    distances_to_boundary(domain, res.z[None, :])[0]
                ),
                "h": u.mesh.h_max,
                "sigma": min(1.0, domain.measures.r_i**2 / 4.0),
            }
        )
    coarse, fine = per_level
    rho_gap = _richardson(fine["rho_gap"], coarse["rho_gap"])
    dev_kw = {}
    for key in ("osc_gamma_u", "grad_inf", "grad_l2", "tangential_norm",
                "c1alpha_norm"):
        dev_kw[key] = _richardson(getattr(fine["dev"], key),
                                  getattr(coarse["dev"], key))
    dev = DeviationSet(alpha=alpha, **dev_kw)
    psi_values = {
        k: (psi(v, 2) if v > 0 else 0.0) for k, v in dev.as_dict().items()
    }
    for name, v in (("uniform", dev.uniform()), ("weak", dev.weak())):
        psi_values[name] = psi(v, 2) if v > 0 else 0.0
    if rho_gap <= RIGID_GAP_FLOOR:
        flags.append("rigid")
    return StabilityRecord(
        epsilon=epsilon,
        rho_gap=float(rho_gap),
        deviations=dev,
        psi_values=psi_values,
        z=tuple(fine["z"]),
        delta_z=fine["delta_z"],
        mesh_h=fine["h"],
        in_smallness_regime=dev.uniform() < fine["sigma"],
        flags=flags,
    )


def _sweep_worker(args):
    mode, eps, rho0, h_target, alpha = args
    return sweep_member(mode, eps, rho0, h_target, alpha)


def stability_sweep(mode, amplitudes, rho0=1.0, h_target=0.05,
                    alpha=DEFAULT_ALPHA, workers=1) -> SweepResult:
    """Perturbation-family sweep with empirical exponent fits.

    One record per amplitude (Richardson over two mesh levels); log-log
    fits of rho_gap against each deviation kind over the non-rigid records;
    c_fit is the single constant of the one-sided profile bound
    rho_gap <= c_fit * psi(uniform deviation).
    """
    jobs = [(mode, float(e), rho0, h_target, alpha) for e in amplitudes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_worker, jobs))
    else:
        records = [_sweep_worker(j) for j in jobs]
    records.sort(key=lambda r: r.epsilon)

    usable = [r for r in records if "rigid" not in r.flags]
    dropped = [r.epsilon for r in records if "rigid" in r.flags]
    fits = {}
    kinds = {
        "osc_gamma_u": lambda r: r.deviations.osc_gamma_u,
        "grad_inf": lambda r: r.deviations.grad_inf,
        "grad_l2": lambda r: r.deviations.grad_l2,
        "tangential_norm": lambda r: r.deviations.tangential_norm,
        "c1alpha_norm": lambda r: r.deviations.c1alpha_norm,
        "uniform": lambda r: r.deviations.uniform(),
        "weak": lambda r: r.deviations.weak(),
    }
    if len(usable) >= 4:
        gaps = [r.rho_gap for r in usable]
        for kind, get in kinds.items():
            slope, intercept, r2 = loglog_fit([get(r) for r in usable], gaps)
            fits[kind] = ExponentFit(kind, slope, intercept, r2, len(usable))
    c_fit = max(
        (r.rho_gap / psi(r.deviations.uniform(), 2) for r in usable),
        default=0.0,
    )
    return SweepResult(records=records, fits=fits, c_fit=c_fit, dropped=dropped)


# -- strong-deviation pipeline -----------------------------------------------------------

@dataclass
class StrongDeviationReport:
    flux_deviation_l2: float
    flux_deviation_c0alpha: float
    trace_deviation_c1alpha: float
    ratio: float
    trace_residual: float
    laplacian_residual: float


def strong_deviation_pipeline(u_field, alpha=DEFAULT_ALPHA) -> StrongDeviationReport:
    """Auxiliary constant-trace field f = u - w and its flux deviation.

    w is the harmonic extension of the trace of u, so f solves the
    constant-source problem with zero trace; the flux deviation R - f_nu is
    controlled by the strong (C^{1,alpha}) boundary deviation of u, and the
    reported ratio must stay bounded across a perturbation sweep.
    """
    audit_neumann(u_field)
    mesh = u_field.mesh
    w = solve_harmonic_dirichlet(mesh, u_field.trace_values())
    f = FemField(mesh, u_field.coeffs - w.coeffs, kind="generic")
    trace_res = float(np.abs(f.trace_values()).max())
    lap_res = audit_torsion(f)
    f_nu = normal_derivative(f)
    R = getattr(u_field, "R_disc", None)
    if R is None:
        R = mesh.domain.measures.R
    dev = R - f_nu.values
    flux_l2 = float(np.sqrt(np.dot(dev**2, f_nu.weights)))
    hol = holder_seminorm(dev, f_nu.arclengths, f_nu.total_length, alpha,
                          mesh.h_max)
    flux_c0 = float(np.abs(dev).max()) + hol
    u_c1 = deviations(u_field, alpha).c1alpha_norm
    ratio = flux_c0 / u_c1 if u_c1 > 0 else float("inf")
    return StrongDeviationReport(
        flux_deviation_l2=flux_l2,
        flux_deviation_c0alpha=flux_c0,
        trace_deviation_c1alpha=u_c1,
        ratio=ratio,
        trace_residual=trace_res,
        laplacian_residual=lap_res,
    )
