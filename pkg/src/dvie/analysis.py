"""Empirical scaling probes, the conditioning-bound calculus for the
regularized equation, and the singular-value utility bounds.

The scaling suite re-assembles the operator stack at several frequencies
and fits log-log slopes of the real/imaginary parts of materials, operator
blocks, right-hand sides and preconditioned blocks against their expected
low-frequency exponents.  Loop components of the right-hand side are
assembled with stabilized kernels (the additive constant of the kernel is
removed analytically) because the plain loop projection of an assembled
vector cancels ten or more digits at quasi-static frequencies and leaves
only roundoff.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import splu
from scipy.sparse import csc_matrix

from .constants import EPS0, C0
from .assembly import assemble_operators, assemble_plane_wave, QuadSpec
from .helmholtz import (build_star_maps, build_loop_basis, make_projectors,
                        operator_norm)
from .solver import build_formulation, condition_number
from .quadrature import TET_RULES

FOUR_PI = 4.0 * np.pi


# ----------------------------------------------------------------------
# scaling probes

@dataclass
class ScalingProbe:
    name: str
    samples: list                  # (omega, norm) pairs
    expected: float = None
    slope: float = None
    tol: float = 0.05
    exact_zero: bool = False       # asserted as <= 1e-10 relative instead
    max_rel: float = None          # for exact zeros: worst relative residual

    @property
    def passed(self):
        if self.exact_zero:
            return self.max_rel is not None and self.max_rel <= 1e-10
        return self.slope is not None and abs(self.slope - self.expected) \
            <= self.tol


def _fit_slope(samples):
    w = np.array([s[0] for s in samples], dtype=float)
    v = np.array([s[1] for s in samples], dtype=float)
    if np.any(v <= 0):
        return None
    return float(np.polyfit(np.log(w), np.log(v), 1)[0])


def _loop_field(mesh, lam, pts_shape, pts, tets_slice=None):
    """Evaluate the loop combinations w_l = sum_m lam[m, l] f_m at the tet
    quadrature points; returns (n_loop, Nt, Q, 3)."""
    nt, q, _ = pts_shape
    out = np.zeros((lam.shape[1], nt, q, 3))
    for l in range(4):
        a = mesh.vertices[mesh.tets[:, l]]
        coef = (lam[mesh.tet_faces[:, l], :] * mesh.tet_face_sign[:, l][:, None]
                / (3.0 * mesh.tet_volume)[:, None])      # (Nt, n_loop)
        out += np.einsum("tl,tqd->ltqd", coef, pts - a[:, None, :])
    return out


def _loop_rhs_dipole(mesh, lam, k0, p, r0, npts=11):
    """Loop components of the dipole vector-potential right-hand side with
    the constant imaginary kernel term removed.

    Lambda^T v_A = (k0^2/eps0) p . int w_l G0 dv and the loop fields have
    zero integral (divergence-free with vanishing boundary flux), so the
    spatially constant -i k0/(4 pi) part of G0 drops out exactly; keeping
    it numerically would bury the O(omega^5) imaginary part under roundoff.
    """
    bary, wq = TET_RULES[npts]
    tv = mesh.vertices[mesh.tets]
    pts = np.einsum("qk,tkd->tqd", bary, tv)
    wts = np.outer(mesh.tet_volume, wq)
    wl = _loop_field(mesh, lam, pts.shape, pts)
    R = np.linalg.norm(pts - r0, axis=2)
    x = k0 * R
    re = np.cos(x) / (FOUR_PI * R)
    # sin x - x, series-stabilized for small arguments
    small = np.abs(x) < 1e-3
    smx = np.where(small, -x**3 / 6.0 + x**5 / 120.0, np.sin(x) - x)
    im = -smx / (FOUR_PI * R)
    kern = re + 1j * im
    proj = np.einsum("tq,tq,ltqd,d->l", wts, kern, wl, p)
    return (k0**2 / EPS0) * proj


def _loop_rhs_plane_wave(mesh, lam, k0, E0, khat, npts=11):
    """Loop components of the plane-wave right-hand side with the constant
    kernel term exp(0) = 1 removed (annihilated exactly by the loops)."""
    bary, wq = TET_RULES[npts]
    tv = mesh.vertices[mesh.tets]
    pts = np.einsum("qk,tkd->tqd", bary, tv)
    wts = np.outer(mesh.tet_volume, wq)
    wl = _loop_field(mesh, lam, pts.shape, pts)
    x = k0 * (pts @ np.asarray(khat, dtype=float))
    kern = -2.0 * np.sin(0.5 * x) ** 2 - 1j * np.sin(x)   # e^{-ix} - 1
    return np.einsum("tq,tq,ltqd,d->l", wts, kern, wl, np.asarray(E0))


def _norm(x):
    x = np.asarray(x)
    if x.ndim <= 1:
        return float(np.linalg.norm(x))
    return float(np.linalg.norm(x, 2))


def run_scaling_suite(mesh, mat_template, frequencies, quad=None, rng=None,
                      E0=(1.0, 0.0, 0.0), khat=(0.0, 0.0, 1.0),
                      p=(0.0, 0.0, 1.0), r0=None):
    """Fit the low-frequency exponents of materials, operators and
    right-hand sides on one mesh; returns a list of ScalingProbe.

    Structural zeros (loop projections of the scalar-potential terms) are
    reported as exact-zero probes with their worst relative residual.
    """
    freqs = sorted(float(f) for f in frequencies)
    if len(freqs) < 3:
        raise ValueError("need at least 3 frequencies")
    if freqs[-1] / freqs[0] < 100:
        raise ValueError("frequencies must span at least 2 decades")
    quad = quad or QuadSpec()
    rng = rng or np.random.default_rng(1234)
    if r0 is None:
        r0 = mesh.tet_centroid[0]
    r0 = np.asarray(r0, dtype=float)
    p = np.asarray(p, dtype=float)

    maps = build_star_maps(mesh)
    lam = build_loop_basis(mesh)
    st = maps.sigma_tilde.toarray()

    expected = {
        "eps_re": 0, "eps_im": -1,
        "inv_eps_re": 2, "inv_eps_im": 1,
        "kappa_im": 1,
        "dkappa_re": 2, "dkappa_im": 1,
        "gram_eps_re": 2, "gram_eps_im": 1,
        "z_a_re": 2, "z_a_im": 3,
        "z_phi11_re": 0, "z_phi11_im": 1,
        "z_phi1eps_re": 2, "z_phi1eps_im": 1,
        "v_pw_loop_re": 2, "v_pw_loop_im": 1,
        "v_pw_star_re": 0, "v_pw_star_im": 1,
        "v_dip_loop_re": 2, "v_dip_loop_im": 5,
        "v_dip_star_re": 0, "v_dip_star_im": 3,
        "precond_loop_re": 0, "precond_star_re": 0,
    }
    samples = {k: [] for k in expected}
    zeros = {"lam_v_phi": [], "lam_z_phi11": [], "z_phi11_lam": [],
             "lam_z_phi1eps": []}

    for f in freqs:
        omega = 2.0 * np.pi * f
        mat = mat_template.at(omega, mesh)
        ops = assemble_operators(mesh, mat, quad)
        k0 = mat.k0

        samples["eps_re"].append((omega, _norm(mat.eps.real)))
        samples["eps_im"].append((omega, _norm(mat.eps.imag)))
        samples["inv_eps_re"].append((omega, _norm(mat.inv_eps.real)))
        samples["inv_eps_im"].append((omega, _norm(mat.inv_eps.imag)))
        samples["kappa_im"].append((omega, _norm(mat.kappa.imag)))
        dk = mat.dkappa[mesh.interior_faces]
        samples["dkappa_re"].append((omega, _norm(dk.real)))
        samples["dkappa_im"].append((omega, _norm(dk.imag)))

        ge = ops.G_eps.toarray()
        za = ops.Z_A
        z1e = ops.Z_phi1eps
        samples["gram_eps_re"].append((omega, _norm(ge.real)))
        samples["gram_eps_im"].append((omega, _norm(ge.imag)))
        samples["z_a_re"].append((omega, _norm(za.real)))
        samples["z_a_im"].append((omega, _norm(za.imag)))
        samples["z_phi11_re"].append((omega, _norm(ops.Z_phi11.real)))
        samples["z_phi11_im"].append((omega, _norm(ops.Z_phi11.imag)))
        samples["z_phi1eps_re"].append((omega, _norm(z1e.real)))
        samples["z_phi1eps_im"].append((omega, _norm(z1e.imag)))

        # structural zeros of the loop projections, relative residuals
        nz = _norm(ops.Z_phi11)
        zeros["lam_z_phi11"].append(_norm(lam.T @ ops.Z_phi11)
                                    / (nz * _norm(lam)))
        zeros["z_phi11_lam"].append(_norm(ops.Z_phi11 @ lam)
                                    / (nz * _norm(lam)))
        n1e = _norm(z1e)
        if n1e > 0:
            zeros["lam_z_phi1eps"].append(_norm(lam.T @ z1e)
                                          / (n1e * _norm(lam)))

        vpw = assemble_plane_wave(mesh, mat, E0, khat, quad)
        lv = _loop_rhs_plane_wave(mesh, lam, k0, E0, khat)
        samples["v_pw_loop_re"].append((omega, _norm(lv.real)))
        samples["v_pw_loop_im"].append((omega, _norm(lv.imag)))
        sv = st.T @ vpw.v
        samples["v_pw_star_re"].append((omega, _norm(sv.real)))
        samples["v_pw_star_im"].append((omega, _norm(sv.imag)))

        from .assembly import assemble_dipole
        vd = assemble_dipole(mesh, mat, p=p, r0=r0)
        ld = _loop_rhs_dipole(mesh, lam, k0, p, vd.params["r0"])
        samples["v_dip_loop_re"].append((omega, _norm(ld.real)))
        samples["v_dip_loop_im"].append((omega, _norm(ld.imag)))
        sd = st.T @ vd.v
        samples["v_dip_star_re"].append((omega, _norm(sd.real)))
        samples["v_dip_star_im"].append((omega, _norm(sd.imag)))
        # Lambda^T v_Phi vanishes: loops are divergence-free
        vphi = vd.v - vd.v_A
        nv = _norm(vphi)
        if nv > 0:
            zeros["lam_v_phi"].append(_norm(lam.T @ vphi)
                                      / (nv * _norm(lam)))

        form = build_formulation("reg_gram", ops, star_maps=maps, rng=rng)
        proj = make_projectors(mesh, "gram_eps_inverse", G_eps=ops.G_eps,
                               star_maps=maps)
        g_lu = splu(csc_matrix(ops.G_eps))
        gr_lu = splu(csc_matrix(ops.G).astype(complex))
        loop_block = form.gamma_lambda * (proj.P_lambda
                                          + proj.P_lambda @ g_lu.solve(za))
        star_block = form.gamma_sigma * (proj.P_sigma @ gr_lu.solve(ops.Z))
        samples["precond_loop_re"].append((omega, _norm(loop_block.real)))
        samples["precond_star_re"].append((omega, _norm(star_block.real)))

    probes = []
    for name, exp in expected.items():
        probes.append(ScalingProbe(name, samples[name], expected=float(exp),
                                   slope=_fit_slope(samples[name])))
    for name, res in zeros.items():
        probes.append(ScalingProbe(name, [], exact_zero=True,
                                   max_rel=max(res) if res else 0.0))
    return probes


# ----------------------------------------------------------------------
# conditioning bounds

@dataclass
class BoundReport:
    omega: float
    r_sigma: float
    alpha_tightness: float
    norm_P_sigma: float = None
    cond_QL: float = None
    cond_QR: float = None
    cond_QL_bound: float = None
    norm_M_LS: float = None
    norm_M_SL: float = None
    smin_M_LL: float = None
    smin_M_SS: float = None
    smin_A_lambda: float = None
    norm_B_lambda: float = None
    smin_A_sigma: float = None
    norm_B_sigma: float = None
    tau_lambda: float = None
    tau_sigma_a: float = None
    tau_sigma_g: float = None
    tau_ls_a: float = None
    tau_sl_a: float = None
    tau_sl_phi: float = None
    cond_in_regime: bool = True        # sigma/(omega eps0) gate
    diag_dominance_met: bool = False   # s_min(A) > |B| on both blocks
    offdiag_met: bool = False          # |M_O| <= alpha s_min(M_D)
    cond_M_bound: float = None
    cond_M_measured: float = None

    @property
    def conditions_met(self):
        return bool(self.cond_in_regime and self.diag_dominance_met
                    and self.offdiag_met)


def _inv_sqrt(S):
    """Principal inverse square root of a (complex symmetric) matrix."""
    w, V = scipy.linalg.eig(S)
    return V @ np.diag(1.0 / np.sqrt(w)) @ np.linalg.inv(V)


def evaluate_bounds(mesh, mat, ops=None, alpha_tightness=0.5, quad=None,
                    rng=None, regime_gate=1e3, safety=1.5):
    """Evaluate the conditioning-bound chain for the Gram-regularized
    equation at one (frequency, material) point.

    Returns a BoundReport; violated conditions are reported as flags,
    never raised.  Estimated norms carry a `safety` factor when used in
    soundness checks so that the randomized estimator cannot fake a
    violation or a pass.
    """
    rng = rng or np.random.default_rng(1234)
    if not (0.0 < alpha_tightness < 1.0):
        raise ValueError("alpha_tightness must lie in (0, 1)")
    if ops is None:
        ops = assemble_operators(mesh, mat, quad or QuadSpec())
    omega = mat.omega
    r_sigma = float(mat.sigma_max / mat.sigma_min)
    rep = BoundReport(omega=omega, r_sigma=r_sigma,
                      alpha_tightness=alpha_tightness)
    rep.cond_in_regime = bool(
        mat.sigma_min / (omega * EPS0) >= regime_gate)

    maps = build_star_maps(mesh)
    lam = build_loop_basis(mesh).astype(complex)
    st = maps.sigma_tilde.toarray().astype(complex)
    ge = ops.G_eps.toarray()
    g = ops.G.toarray()
    ge_lu = splu(csc_matrix(ops.G_eps))
    g_lu = splu(csc_matrix(ops.G).astype(complex))
    za = ops.Z_A
    z_phi = ops.Z_phi

    # normalized auxiliary decompositions
    gel = ge @ lam
    Q_LL = gel @ _inv_sqrt(lam.T @ ge @ gel)
    Q_SL = st @ _inv_sqrt(st.T @ st)
    Q_LR = lam @ _inv_sqrt(lam.T @ lam)
    # inner matrix St^T G_eps^-2 St formed by two solves, never squaring
    gis = ge_lu.solve(st)
    Q_SR = gis @ _inv_sqrt(st.T @ ge_lu.solve(gis))
    QL = np.hstack([Q_LL, Q_SL])
    QR = np.hstack([Q_LR, Q_SR])
    rep.cond_QL = condition_number(QL)
    rep.cond_QR = condition_number(QR)

    proj = make_projectors(mesh, "gram_eps_inverse", G_eps=ops.G_eps,
                           star_maps=maps)
    rep.norm_P_sigma = operator_norm(proj.P_sigma, rng=rng)
    root = np.sqrt(max(1.0 - 1.0 / rep.norm_P_sigma**2, 0.0))
    rep.cond_QL_bound = float(np.sqrt((1.0 + root) / max(1.0 - root, 1e-300)))

    gamma_l = 1.0 / operator_norm(proj.P_lambda, rng=rng)
    mv = lambda x: proj.P_sigma @ g_lu.solve(z_phi @ (proj.P_sigma @ x))
    rmv = lambda x: proj.P_sigma.conj().T @ (
        z_phi.conj().T @ g_lu.solve(proj.P_sigma.conj().T @ x))
    gamma_s = 1.0 / operator_norm((mv, rmv, mesh.n_faces), rng=rng)

    gize_za = ge_lu.solve(za)
    gl_z = g_lu.solve(ge + za + ops.Z_phi1eps)
    gl_zfull = g_lu.solve(ops.Z)
    M_LL = gamma_l * (Q_LL.T @ (Q_LR + gize_za @ Q_LR))
    M_LS = gamma_l * (Q_LL.T @ (gize_za @ Q_SR))
    M_SL = gamma_s * (Q_SL.T @ (gl_z @ Q_LR))
    M_SS = gamma_s * (Q_SL.T @ (gl_zfull @ Q_SR))

    def smin(X):
        s = scipy.linalg.svdvals(X)
        return float(s[-1]) if len(s) else np.inf

    rep.norm_M_LS = _norm(M_LS) if M_LS.size else 0.0
    rep.norm_M_SL = _norm(M_SL)
    rep.smin_M_LL = smin(M_LL) if M_LL.size else np.inf
    rep.smin_M_SS = smin(M_SS)

    A_l = gamma_l * (Q_LL.T @ Q_LR)
    B_l = gamma_l * (Q_LL.T @ (gize_za @ Q_LR))
    A_s = gamma_s * (Q_SL.T @ g_lu.solve(z_phi) @ Q_SR)
    B_s = gamma_s * (Q_SL.T @ g_lu.solve(ge + za) @ Q_SR)
    rep.smin_A_lambda = smin(A_l) if A_l.size else np.inf
    rep.norm_B_lambda = _norm(B_l) if np.size(B_l) else 0.0
    rep.smin_A_sigma = smin(A_s)
    rep.norm_B_sigma = _norm(B_s)

    # tau constants (omega- and contrast-independent in the regime)
    ginv_norm = operator_norm(np.linalg.inv(g), rng=rng)
    g_norm = operator_norm(g, rng=rng)
    smin_est = mat.sigma_min
    rep.tau_lambda = gamma_l * smin_est / C0**2 * ginv_norm * \
        (_norm(ops.Z_A1 @ Q_LR) if Q_LR.size else 0.0)
    QSLg = Q_SL.T @ np.linalg.inv(g)
    rep.tau_sigma_a = gamma_s / C0**2 * _norm(QSLg @ (ops.Z_A1 @ Q_SR))
    rep.tau_sigma_g = gamma_s / smin_est * _norm(QSLg) * g_norm
    rep.tau_ls_a = gamma_l * smin_est / C0**2 * ginv_norm * \
        _norm(ops.Z_A1 @ Q_SR)
    rep.tau_sl_a = gamma_s / C0**2 * \
        (_norm(QSLg @ (ops.Z_A1 @ Q_LR)) if Q_LR.size else 0.0)
    rep.tau_sl_phi = gamma_s / smin_est * _norm(QSLg) * _norm(ops.Z1_phi1eps)

    # the two sufficient conditions, with the safety factor on estimates
    rep.diag_dominance_met = bool(
        rep.smin_A_lambda > safety * rep.norm_B_lambda
        and rep.smin_A_sigma > safety * rep.norm_B_sigma)
    m_o = max(rep.norm_M_LS, rep.norm_M_SL)
    m_d = min(rep.smin_M_LL, rep.smin_M_SS)
    rep.offdiag_met = bool(safety * m_o <= alpha_tightness * m_d)

    a = alpha_tightness
    norm_M_LL = _norm(M_LL) if M_LL.size else 0.0
    cond_MB_bound = (max(norm_M_LL, _norm(M_SS)) / m_d) * (1 + a) / (1 - a)
    rep.cond_M_bound = float(rep.cond_QL * cond_MB_bound * rep.cond_QR)

    form = build_formulation("reg_gram", ops, star_maps=maps, rng=rng)
    rep.cond_M_measured = condition_number(form.M)
    return rep


def region_map(mesh, mat_template, frequencies, r_sigmas, sigma_mid=1.0,
               alpha_tightness=0.5, quad=None, rng=None):
    """Evaluate the bound chain over a (frequency, contrast) grid on a
    layered mesh whose middle layer keeps sigma_mid while the outer layers
    carry sigma_mid * r_sigma; returns a list of BoundReport."""
    from .em_basis import Material
    out = []
    for rs in r_sigmas:
        sig = np.array(mat_template.sigma, dtype=float)
        sig[sig == sig.max()] = sigma_mid * rs
        m = Material(mat_template.eps_r_prime, sig, mat_template.rho)
        for f in frequencies:
            bm = m.at(2.0 * np.pi * f, mesh)
            out.append(evaluate_bounds(mesh, bm, quad=quad,
                                       alpha_tightness=alpha_tightness,
                                       rng=rng))
    return out


# ----------------------------------------------------------------------
# singular-value utilities

def gram_singular_bounds(G, G_eps, sigma_min, sigma_max, omega,
                         regime_gate=1e3):
    """Bounds on the extremal singular values of the scaled Gram matrix:
    s_min(G_eps) >= s_min(G) omega / sigma_max and
    |G_eps| <= |G| omega / sigma_min, valid in the conductive quasi-static
    regime.  Returns (lower, upper, (measured_smin, measured_smax), ok)
    where ok flags the regime gate sigma_min/(omega eps0) >= regime_gate.
    """
    if sigma_min <= 0:
        raise ValueError("requires sigma > 0 everywhere")
    ok = bool(sigma_min / (omega * EPS0) >= regime_gate)
    sg = scipy.linalg.svdvals(np.asarray(G.toarray() if hasattr(G, "toarray")
                                         else G))
    sge = scipy.linalg.svdvals(np.asarray(
        G_eps.toarray() if hasattr(G_eps, "toarray") else G_eps))
    lower = float(sg[-1] * omega / sigma_max)
    upper = float(sg[0] * omega / sigma_min)
    return lower, upper, (float(sge[-1]), float(sge[0])), ok


def smin_sum_bound(A, B):
    """Lower bound on s_min(A + B):
    |A| (cond(A)-1)/cond(A)^2 (s_min(A)-|B|)/(s_min(A)+|B|),
    requiring A invertible and |B| < s_min(A).
    """
    A = np.asarray(A)
    B = np.asarray(B)
    sa = scipy.linalg.svdvals(A)
    if sa[-1] == 0:
        raise ValueError("A must be invertible")
    nb = float(np.linalg.norm(B, 2)) if B.size else 0.0
    if nb >= sa[-1]:
        raise ValueError("requires |B| < s_min(A)")
    cond = sa[0] / sa[-1]
    return float(sa[0] * (cond - 1.0) / cond**2
                 * (sa[-1] - nb) / (sa[-1] + nb))


def normalized_decomposition(mesh, lam, A=None, star_maps=None):
    """Normalized Loop-Star decomposition B = [Lam (Lam^T Lam)^{-1/2},
    A St (St^T A^2 St)^{-1/2}]; returns (B, cond(B), bound) with the
    minimal-angle bound evaluated from the A-weighted projector norm."""
    maps = star_maps or build_star_maps(mesh)
    st = maps.sigma_tilde.toarray()
    if A is None:
        ast = st.astype(float)
    else:
        A = np.asarray(A.toarray() if hasattr(A, "toarray") else A)
        ast = A @ st
    blocks = []
    if lam is not None and lam.shape[1]:
        blocks.append(lam @ _inv_sqrt(lam.T.astype(complex) @ lam))
    blocks.append(ast @ _inv_sqrt(ast.T @ ast.astype(complex)))
    B = np.hstack(blocks)
    condB = condition_number(B)
    # oblique-projector pair for the same weighting
    x = ast
    P_sigma = x @ np.linalg.solve(st.T @ x, st.T.astype(x.dtype))
    np_s = operator_norm(P_sigma)
    root = np.sqrt(max(1.0 - 1.0 / np_s**2, 0.0))
    bound = float(np.sqrt((1.0 + root) / max(1.0 - root, 1e-300)))
    return B, condB, bound
