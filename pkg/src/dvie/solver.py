"""Formulations (standard / loop-star / regularized), solves, condition
estimation and physical post-processing.

All preconditioning is applied from the left; the solution coefficients are
always returned in the plain SWG basis.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu, gmres as sp_gmres

from .constants import EPS0, MU0
from .helmholtz import (build_star_maps, build_loop_basis, make_projectors,
                        build_diag_D, operator_norm)
from .quadrature import TET_RULES, tet_static_batch, tri_static_batch
from .assembly import green

FOUR_PI = 4.0 * np.pi


@dataclass
class Formulation:
    """Left-preconditioned system M alpha = b.

    The regularized and loop-star systems are built term by term with the
    structural zeros imposed analytically: both test maps of Z_Phi lie in
    the range of the star map, so P_Lambda A^-1 Z_Phi = 0 exactly for the
    oblique projectors and Lambda^T Z_Phi = Z_Phi,11 Lambda = 0.  Forming
    L @ (G_eps + Z_A + Z_Phi) numerically instead would both erase G_eps
    (|G_eps|/|Z_Phi| ~ omega eps0/sigma) and leak roundoff-level Z_Phi
    content into the loop rows, which is precisely the low-frequency
    breakdown these formulations exist to avoid.
    """
    tag: str
    ops: object
    M: np.ndarray = None
    # left factors for the right-hand side: b = Ll @ v_loop + Ls @ v,
    # where v_loop is the dipole v_A split when available (the scalar
    # potential part of a dipole excitation is star-structured and its
    # loop projection is an exact zero)
    Ll: np.ndarray = None
    Ls: np.ndarray = None
    T_right: np.ndarray = None      # loop_star recovery basis [Lambda S~]
    n_loop: int = 0
    gamma_lambda: float = None
    gamma_sigma: float = None
    degraded: bool = False          # high-frequency fallback engaged

    def system_matrix(self):
        return self.M if self.M is not None else self.ops.Z

    def rhs(self, excitation):
        if hasattr(excitation, "v"):
            v = excitation.v
            v_loop = excitation.v_A if excitation.v_A is not None else v
        else:
            v = np.asarray(excitation)
            v_loop = v
        if self.M is None or (self.Ll is None and self.T_right is None):
            return v
        if self.T_right is not None:
            lam = self.T_right[:, :self.n_loop]
            st = self.T_right[:, self.n_loop:]
            c1 = self.gamma_lambda
            return np.concatenate([c1 * (lam.T @ v_loop), st.T @ v])
        return self.Ll @ v_loop + self.Ls @ v

    def recover(self, y):
        if self.T_right is not None:
            return self.T_right @ y
        return y


def build_formulation(tag, ops, star_maps=None, loop_basis=None, rng=None,
                      fallback_threshold=None):
    """Build one of {standard, loop_star, reg_gram, reg_diag}.

    fallback_threshold: if given and sigma_min/(omega eps0) falls below it,
    the regularized tags degrade to the standard equation (the projector
    weighting targets the conductive quasi-static regime).
    """
    mesh, mat = ops.mesh, ops.mat
    rng = rng or np.random.default_rng(1234)

    if tag == "standard":
        return Formulation("standard", ops)

    if fallback_threshold is not None and tag in ("reg_gram", "reg_diag"):
        if mat.sigma_min / (mat.omega * EPS0) < fallback_threshold:
            return Formulation(tag, ops, degraded=True)

    maps = star_maps or build_star_maps(mesh)

    if tag == "loop_star":
        lam = loop_basis if loop_basis is not None else build_loop_basis(mesh)
        st = maps.sigma_tilde.toarray()
        c1 = 1.0 / (1j * mat.omega * EPS0)
        Gza = ops.G_eps.toarray() + ops.Z_A
        Z_SL = (Gza + ops.Z_phi1eps) @ lam           # Z_phi11 @ Lambda = 0
        M = np.block([
            [c1 * (lam.T @ Gza @ lam), c1 * (lam.T @ Gza @ st)],
            [st.T @ Z_SL, st.T @ ops.Z @ st]])
        T_right = np.hstack([lam, st]).astype(complex)
        return Formulation("loop_star", ops, M=M, T_right=T_right,
                           n_loop=lam.shape[1], gamma_lambda=c1)

    if tag == "reg_gram":
        proj = make_projectors(mesh, "gram_eps_inverse", G_eps=ops.G_eps,
                               star_maps=maps)
        g_lu = splu(csc_matrix(ops.G_eps))
        gr_lu = splu(csc_matrix(ops.G).astype(complex))
        gamma_l = 1.0 / operator_norm(proj.P_lambda, rng=rng)
        Z_phi = ops.Z_phi
        pl, ps = proj.P_lambda, proj.P_sigma
        mv = lambda x: ps @ gr_lu.solve(Z_phi @ (ps @ x))
        # G is real symmetric, so G^-H = G^-1
        rmv = lambda x: ps.conj().T @ (Z_phi.conj().T @ gr_lu.solve(ps.conj().T @ x))
        gamma_s = 1.0 / operator_norm((mv, rmv, mesh.n_faces), rng=rng)
        # loop rows: P G_eps^-1 (G_eps + Z_A) = P + P G_eps^-1 Z_A
        M = (gamma_l * (pl + pl @ g_lu.solve(ops.Z_A))
             + gamma_s * (ps @ gr_lu.solve(ops.Z)))
        # G_eps, G symmetric: (P A^-1)^T = A^-1 P^T
        Ll = gamma_l * g_lu.solve(pl.T).T
        Ls = gamma_s * gr_lu.solve(ps.T).T
        return Formulation("reg_gram", ops, M=M, Ll=Ll, Ls=Ls,
                           gamma_lambda=gamma_l, gamma_sigma=gamma_s)

    if tag == "reg_diag":
        D = build_diag_D(ops.G_eps)
        D0 = np.asarray(ops.G.diagonal(), dtype=float)
        proj = make_projectors(mesh, "diag_D_inverse", D=D, star_maps=maps)
        pl, ps = proj.P_lambda, proj.P_sigma
        G_eps = ops.G_eps.toarray()
        Z_phi = ops.Z_phi
        t1 = pl * (1.0 / D)[None, :]
        t2 = ps * (1.0 / D0)[None, :]
        n1 = operator_norm((lambda x: t1 @ (G_eps @ (pl @ x)),
                            lambda x: pl.conj().T @ (G_eps.conj().T @ (t1.conj().T @ x)),
                            mesh.n_faces), rng=rng)
        n2 = operator_norm((lambda x: t2 @ (Z_phi @ (ps @ x)),
                            lambda x: ps.conj().T @ (Z_phi.conj().T @ (t2.conj().T @ x)),
                            mesh.n_faces), rng=rng)
        M = (t1 @ (G_eps + ops.Z_A)) / n1 + (t2 @ ops.Z) / n2
        return Formulation("reg_diag", ops, M=M, Ll=t1 / n1, Ls=t2 / n2,
                           gamma_lambda=1.0 / n1, gamma_sigma=1.0 / n2)

    raise ValueError(f"unknown formulation tag: {tag}")


# ----------------------------------------------------------------------

@dataclass
class SolveReport:
    alpha: np.ndarray
    residual: float
    iterations: int = 0
    converged: bool = True
    cond_estimate: float = None
    wall_time: float = 0.0
    tag: str = ""


def solve(form, excitation, method="direct", tol=1e-10, maxit=2000):
    """Solve the (left-preconditioned) system for the given excitation."""
    t0 = time.perf_counter()
    M = form.system_matrix()
    b = form.rhs(excitation)
    iterations = 0
    if method == "direct":
        y = np.linalg.solve(M, b)
    elif method == "iterative":
        count = [0]

        def cb(_):
            count[0] += 1

        y, info = sp_gmres(M, b, rtol=tol, maxiter=maxit, restart=200,
                           callback=cb, callback_type="pr_norm")
        iterations = count[0]
        if info != 0:
            a = form.recover(y)
            ap = excitation.params.get("alpha_p") if excitation.params else None
            if ap is not None:
                a = a + ap
            rep = SolveReport(a, np.inf, iterations, False,
                              wall_time=time.perf_counter() - t0, tag=form.tag)
            rep.residual = float(np.linalg.norm(M @ y - b) / np.linalg.norm(b))
            return rep
    else:
        raise ValueError(f"unknown method: {method}")
    res = float(np.linalg.norm(M @ y - b) / np.linalg.norm(b))
    alpha = form.recover(y)
    ap = excitation.params.get("alpha_p") if excitation.params else None
    if ap is not None:
        # scattered-field excitation: the solve produced the correction to
        # the analytically known primary flux coefficients
        alpha = alpha + ap
    return SolveReport(alpha, res, iterations,
                       converged=bool(np.isfinite(res)),
                       wall_time=time.perf_counter() - t0, tag=form.tag)


def condition_number(M, mode="svd", rng=None):
    """2-norm condition number; +inf sentinel for singular matrices."""
    M = np.asarray(M)
    if mode == "svd":
        if M.shape[0] > 4000:
            raise ValueError("svd mode limited to N <= 4000")
        s = scipy.linalg.svdvals(M)
        if not np.isfinite(s).all() or s[-1] == 0:
            return np.inf
        return float(s[0] / s[-1])
    if mode != "estimate":
        raise ValueError(f"unknown mode: {mode}")
    rng = rng or np.random.default_rng(1234)
    smax = operator_norm(M, rng=rng, iters=30, tol=1e-4)
    try:
        lu, piv = scipy.linalg.lu_factor(M)
    except (scipy.linalg.LinAlgError, ValueError):
        return np.inf
    if not np.isfinite(lu).all():
        return np.inf
    inv_mv = lambda x: scipy.linalg.lu_solve((lu, piv), x)
    inv_rmv = lambda x: scipy.linalg.lu_solve((lu, piv), x, trans=2)
    inv_norm = operator_norm((inv_mv, inv_rmv, M.shape[0]), rng=rng,
                             iters=30, tol=1e-4)
    if inv_norm == 0 or not np.isfinite(inv_norm):
        return np.inf
    return float(smax * inv_norm)


# ----------------------------------------------------------------------
# post-processing

def e_field(alpha, mesh, mat):
    """Per-tet E = D/eps at the tet centroids (D is linear per tet)."""
    D = np.zeros((mesh.n_tets, 3), dtype=complex)
    for l in range(4):
        a = mesh.vertices[mesh.tets[:, l]]
        coef = (alpha[mesh.tet_faces[:, l]] * mesh.tet_face_sign[:, l]
                / (3.0 * mesh.tet_volume))
        D += coef[:, None] * (mesh.tet_centroid - a)
    return D / mat.eps[:, None], D


def far_field(alpha, mesh, mat, directions, npts=4):
    """Scattered far-field amplitude lim r e^{+i k0 r} E_s along directions.

    Radiation integral of the equivalent current J = i omega kappa D:
    F(rhat) = (omega^2 mu0 / 4 pi) (I - rhat rhat) int kappa D e^{i k0 rhat.r'} dv.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    bary, w = TET_RULES[npts]
    tv = mesh.vertices[mesh.tets]
    pts = np.einsum("qk,tkd->tqd", bary, tv)
    wq = np.outer(mesh.tet_volume, w)
    # D at quadrature points
    Dq = np.zeros(pts.shape, dtype=complex)
    for l in range(4):
        a = mesh.vertices[mesh.tets[:, l]]
        coef = (alpha[mesh.tet_faces[:, l]] * mesh.tet_face_sign[:, l]
                / (3.0 * mesh.tet_volume))
        Dq += coef[:, None, None] * (pts - a[:, None, :])
    src = mat.kappa[:, None, None] * Dq
    out = np.empty((len(dirs), 3), dtype=complex)
    k0 = mat.k0
    for i, rh in enumerate(dirs):
        phase = np.exp(1j * k0 * (pts @ rh))
        mom = np.einsum("tq,tq,tqd->d", wq, phase, src)
        out[i] = (mat.omega**2 * MU0 / FOUR_PI) * (mom - rh * (rh @ mom))
    return out


def potential_charges(alpha, mesh, mat, points):
    """Scattered-field potential at `points` from the bound charges of the
    polarization kappa D: volume charge -div(kappa D), interface charge
    -dkappa D_n, boundary charge kappa D_n.  Static kernel, closed-form
    element potentials (valid at any point, including inside source tets).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    # volume charges: -kappa_T sum_l alpha_l s_l / V_T
    divD = np.zeros(mesh.n_tets, dtype=complex)
    for l in range(4):
        divD += (alpha[mesh.tet_faces[:, l]] * mesh.tet_face_sign[:, l]
                 / mesh.tet_volume)
    rho_v = -mat.kappa * divD
    i0, _ = tet_static_batch(mesh.vertices[mesh.tets], pts)      # (Nt, Q)
    phi = (rho_v @ i0)

    dn = alpha / mesh.face_area                                  # D.n per face
    sigma_i = -mat.dkappa[mesh.interior_faces] * dn[mesh.interior_faces]
    sigma_b = mat.kappa_plus[mesh.boundary_faces] * dn[mesh.boundary_faces]
    for faces, sig in ((mesh.interior_faces, sigma_i),
                       (mesh.boundary_faces, sigma_b)):
        if len(faces):
            im1, _ = tri_static_batch(mesh.vertices[mesh.faces[faces]], pts)
            phi += sig @ im1
    return phi / (FOUR_PI * EPS0)


def potential_recovery(alpha, mesh, mat, dipole=None, exclusion=1.5,
                       trim=3.0, passes=3):
    """Total potential at the mesh vertices by least-squares recovery of
    -grad(phi) = E from the solved field (piecewise-linear phi).

    In the conducting quasi-static regime the charge-superposition route
    loses all significant digits (the primary and induced potentials cancel
    by a factor ~ sigma/(omega eps0)); recovering phi directly from
    E = D/eps is numerically stable at any frequency.

    The fit minimizes the sigma-weighted misfit sum_T w_T V_T
    |grad(phi) + E_T|^2 and runs `passes` rounds of residual trimming:
    tets whose misfit exceeds `trim` times the median are down-weighted
    and the fit repeated, so locally corrupted field samples cannot drag
    the surface values.

    dipole: optional (p, r0).  The analytic in-medium primary field of the
    dipole is subtracted before the fit and its potential added back after,
    so the P1 space only has to represent the smooth secondary field; tets
    within `exclusion` local mesh widths of r0 are dropped from the
    functional (piecewise-linear phi cannot track 1/r^2 there anyway).
    Zero-mean normalized.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import spsolve

    E, _ = e_field(alpha, mesh, mat)     # E at centroid = mean E (linear D)
    nv = mesh.n_vertices
    keep0 = np.ones(mesh.n_tets, dtype=bool)
    phi0 = 0.0
    if dipole is not None:
        p, r0 = (np.asarray(x, dtype=float) for x in dipole)
        t0 = mesh.tet_containing(r0, tol=1e-8)
        if t0 < 0:
            t0 = int(np.argmin(np.linalg.norm(mesh.tet_centroid - r0, axis=1)))
        eps_src = mat.eps[t0]
        c = mesh.tet_centroid - r0
        rn = np.maximum(np.linalg.norm(c, axis=1), 1e-300)
        rh = c / rn[:, None]
        E = E - (3.0 * (rh @ p)[:, None] * rh - p) / (FOUR_PI * eps_src
                                                      * rn[:, None] ** 3)
        # drop tets that cannot resolve the local primary field over their
        # own extent
        h_t = 0.5 * np.cbrt(6.0 * mesh.tet_volume)
        keep0 = rn > exclusion * h_t
        d = mesh.vertices - r0
        phi0 = (d @ p) / (FOUR_PI * eps_src
                          * np.linalg.norm(d, axis=1) ** 3)
    tv = mesh.vertices[mesh.tets]
    # P1 gradients: lambda_l has grad = g_l with [g_1 g_2 g_3] rows of the
    # inverse edge matrix; g_0 = -(g_1+g_2+g_3)
    grads = np.empty((mesh.n_tets, 4, 3))
    M = np.transpose(tv[:, 1:] - tv[:, :1], (0, 2, 1))
    ginv = np.linalg.inv(M)               # (Nt, 3, 3): rows are grad lambda
    grads[:, 1:, :] = ginv
    grads[:, 0, :] = -ginv.sum(axis=1)
    # conduction-energy weighting; plain volume when sigma is zero
    smax = np.abs(mat.sigma_t).max()
    wt = np.maximum(np.abs(mat.sigma_t), 1e-6 * smax) if smax > 0 else \
        np.ones(mesh.n_tets)
    keep = keep0.copy()
    phi = np.zeros(nv, dtype=complex)
    for it in range(passes):
        # excluded tets keep a vanishing weight: the fit is driven by the
        # rest of the mesh but stays nonsingular and fills the cavity
        V = mesh.tet_volume * np.where(keep, 1.0, 1e-8) * wt
        rows, cols, vals = [], [], []
        fvec = np.zeros(nv, dtype=complex)
        for a in range(4):
            fv = -np.einsum("t,td,td->t", V, grads[:, a], E)
            np.add.at(fvec, mesh.tets[:, a], fv)
            for b in range(4):
                rows.append(mesh.tets[:, a])
                cols.append(mesh.tets[:, b])
                vals.append(V * np.einsum("td,td->t", grads[:, a],
                                          grads[:, b]))
        K = coo_matrix((np.concatenate(vals),
                        (np.concatenate(rows), np.concatenate(cols))),
                       shape=(nv, nv)).tolil()
        # pin one anchor (constant null space)
        K[0, :] = 0.0
        K[0, 0] = 1.0
        fvec[0] = 0.0
        phi = spsolve(K.tocsr().astype(complex), fvec)
        if it == passes - 1:
            break
        gphi = np.einsum("tad,ta->td", grads, phi[mesh.tets])
        mis = np.linalg.norm(gphi + E, axis=1)
        scale = max(np.linalg.norm(E, axis=1).mean(), 1e-300)
        med = np.median(mis[keep0] / scale)
        keep = keep0 & (mis / scale < trim * max(med, 1e-300))
    phi = phi + phi0
    return phi - phi.mean()


def interpolate_vertex_field(mesh, phi, points):
    """Evaluate a vertex (P1) field at points inside the mesh."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros(len(pts), dtype=complex)
    for i, p in enumerate(pts):
        t = mesh.tet_containing(p, tol=1e-8)
        if t < 0:
            t = int(np.argmin(np.linalg.norm(mesh.tet_centroid - p, axis=1)))
        a = mesh.vertices[mesh.tets[t, 0]]
        lam = np.linalg.solve((mesh.vertices[mesh.tets[t, 1:]] - a).T, p - a)
        bary = np.concatenate([[1 - lam.sum()], lam])
        out[i] = bary @ phi[mesh.tets[t]]
    return out


def sar(alpha, mesh, mat, voxel_size):
    """Specific absorption rate sigma |E|^2 / (2 rho), voxel-averaged."""
    E, _ = e_field(alpha, mesh, mat)
    dens = mat.sigma_t * np.linalg.norm(E, axis=1) ** 2 / (2.0 * mat.rho_t)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    shape = np.maximum(np.ceil((hi - lo) / voxel_size).astype(int), 1)
    idx = np.minimum(((mesh.tet_centroid - lo) / voxel_size).astype(int),
                     shape - 1)
    flat = (idx[:, 0] * shape[1] + idx[:, 1]) * shape[2] + idx[:, 2]
    num = np.bincount(flat, weights=dens * mesh.tet_volume,
                      minlength=shape.prod())
    den = np.bincount(flat, weights=mesh.tet_volume, minlength=shape.prod())
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(den > 0, num / den, 0.0)
    centers = lo + (np.stack(np.unravel_index(np.arange(shape.prod()), shape),
                             axis=1) + 0.5) * voxel_size
    keep = den > 0
    return centers[keep], vals[keep]


def postprocess(report, mesh, mat, what, **kw):
    alpha = report.alpha if hasattr(report, "alpha") else report
    if what == "E_field":
        return e_field(alpha, mesh, mat)[0]
    if what == "potential":
        return potential_charges(alpha, mesh, mat, kw["points"])
    if what == "far_field":
        return far_field(alpha, mesh, mat, kw["angles"])
    if what == "sar":
        return sar(alpha, mesh, mat, kw["voxel_size"])
    raise ValueError(f"unknown postprocess request: {what}")