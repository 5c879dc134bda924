"""Independent reference solutions: Mie sphere, layered-sphere EEG dipole,
and a brute-force projector, used to judge the solver in tests."""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import spherical_jn, spherical_yn

FOUR_PI = 4.0 * np.pi


def _pi_tau(n_max, mu):
    """Angular functions pi_n = P_n^1/sin(theta), tau_n = dP_n^1/dtheta."""
    pi = np.zeros((n_max + 1, len(mu)))
    tau = np.zeros((n_max + 1, len(mu)))
    pi[1] = 1.0
    for n in range(1, n_max):
        pi[n + 1] = ((2 * n + 1) * mu * pi[n] - (n + 1) * pi[n - 1]) / n
    for n in range(1, n_max + 1):
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


@dataclass
class MieSolution:
    """Plane-wave scattering by a homogeneous (possibly lossy) sphere.

    Incident unit-amplitude x-polarized wave travelling along +z.  The
    relative permittivity may be complex with either sign convention for
    the loss term; only field magnitudes are exposed, which are convention
    independent.
    """
    radius: float
    eps_r: complex
    k0: float
    n_terms: int = None

    def __post_init__(self):
        x = self.k0 * self.radius
        if x > 20.0:
            raise ValueError("size parameter k0*radius must be <= 20")
        if self.n_terms is None:
            # Wiscombe truncation
            self.n_terms = int(np.ceil(x + 4.0 * x ** (1.0 / 3.0) + 2.0))
        self.a, self.b = self._coefficients(self.n_terms)

    def _coefficients(self, N):
        x = self.k0 * self.radius
        m = np.sqrt(complex(self.eps_r))
        if m.imag < 0:               # fold onto the exp(-i omega t) branch
            m = np.conj(m)
        mx = m * x
        # logarithmic derivative D_n(mx) by downward recurrence
        n_start = max(N, int(abs(mx))) + 16
        D = np.zeros(n_start + 1, dtype=complex)
        for n in range(n_start, 0, -1):
            D[n - 1] = n / mx - 1.0 / (D[n] + n / mx)
        n = np.arange(1, N + 1)
        jn = spherical_jn(n, x)
        yn = spherical_yn(n, x)
        jm1 = spherical_jn(n - 1, x)
        ym1 = spherical_yn(n - 1, x)
        psi, psi_m1 = x * jn, x * jm1
        xi, xi_m1 = x * (jn + 1j * yn), x * (jm1 + 1j * ym1)
        Dn = D[1:N + 1]
        fa = Dn / m + n / x
        fb = Dn * m + n / x
        a = (fa * psi - psi_m1) / (fa * xi - xi_m1)
        b = (fb * psi - psi_m1) / (fb * xi - xi_m1)
        return a, b

    def far_field(self, theta, phi=0.0):
        """|E_scatt| * r (the 1/r-stripped far-field amplitude), per angle."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        mu = np.cos(theta)
        n = np.arange(1, self.n_terms + 1)
        w = (2 * n + 1) / (n * (n + 1))
        pi_n, tau_n = _pi_tau(self.n_terms, mu)
        S1 = (w * self.a) @ pi_n + (w * self.b) @ tau_n
        S2 = (w * self.a) @ tau_n + (w * self.b) @ pi_n
        return np.sqrt(np.abs(S2 * np.cos(phi)) ** 2
                       + np.abs(S1 * np.sin(phi)) ** 2) / self.k0

    def scattered_field(self, r, theta, phi):
        """(E_r, E_theta, E_phi) magnitude-faithful components outside
        the sphere (exp(-i omega t) branch)."""
        if r <= self.radius:
            raise ValueError("exterior evaluator: need r > radius")
        rho = self.k0 * r
        n = np.arange(1, self.n_terms + 1)
        En = 1j ** n * (2 * n + 1) / (n * (n + 1))
        hn = spherical_jn(n, rho) + 1j * spherical_yn(n, rho)
        hm1 = spherical_jn(n - 1, rho) + 1j * spherical_yn(n - 1, rho)
        xi_p = rho * hm1 - n * hn             # d/d rho of rho*h_n
        pi_n, tau_n = _pi_tau(self.n_terms, np.array([np.cos(theta)]))
        pi_n, tau_n = pi_n[:, 0], tau_n[:, 0]
        Er = np.cos(phi) * np.sum(
            En * 1j * self.a * n * (n + 1) * np.sin(theta) * pi_n * hn / rho)
        Et = np.cos(phi) * np.sum(
            En * (1j * self.a * tau_n * xi_p / rho - self.b * pi_n * hn))
        Ep = -np.sin(phi) * np.sum(
            En * (1j * self.a * pi_n * xi_p / rho - self.b * tau_n * hn))
        return Er, Et, Ep

    def truncation_delta(self, theta, extra=5):
        """Relative far-field change when adding `extra` series terms."""
        other = MieSolution(self.radius, self.eps_r, self.k0,
                            n_terms=self.n_terms + extra)
        f0 = self.far_field(theta)
        f1 = other.far_field(theta)
        return float(np.linalg.norm(f1 - f0) / np.linalg.norm(f1))


def mie_far_field(sol, angles):
    return sol.far_field(np.asarray(angles))


@dataclass
class LayeredSphereDipoleSolution:
    """Quasi-static potential of a current dipole inside a layered
    conducting sphere with an insulating exterior.

    radii: outer radius of each layer, ascending.  sigmas: conductivity of
    each layer (complex allowed).  moment is the current-dipole moment in
    ampere-meters; position must lie strictly inside the innermost layer.
    Potential in each layer is a Legendre series with per-layer (A r^n +
    B r^-(n+1)) transfer coefficients matched at the interfaces
    (continuity of phi and of sigma dphi/dr; zero normal current at the
    outer surface).
    """
    radii: list
    sigmas: list
    position: np.ndarray
    moment: np.ndarray
    n_terms: int = 60
    _coef: dict = field(default=None, repr=False)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=complex)
        self.position = np.asarray(self.position, dtype=float)
        self.moment = np.asarray(self.moment, dtype=complex)
        if len(self.radii) != len(self.sigmas):
            raise ValueError("need one conductivity per layer")
        z0 = np.linalg.norm(self.position)
        if z0 >= self.radii[0]:
            raise ValueError("dipole must be inside the innermost layer")
        # rotate so the dipole sits on the +z axis
        if z0 > 0:
            zh = self.position / z0
        else:
            mn = np.linalg.norm(self.moment)
            zh = (self.moment / mn).real if mn > 0 else np.array([0, 0, 1.0])
            zh = zh / np.linalg.norm(zh)
        t = np.array([1.0, 0, 0]) if abs(zh[0]) < 0.9 else np.array([0, 1.0, 0])
        xh = t - (t @ zh) * zh
        xh /= np.linalg.norm(xh)
        self._rot = np.stack([xh, np.cross(zh, xh), zh])   # world -> local
        q = self._rot @ self.moment
        self._q_rad = q[2]
        # tangential components stay as a complex pair; the m = 1 series is
        # solved once for a unit tangential dipole and combined with cos/sin
        # azimuthal factors at evaluation (a real rotation cannot align a
        # general complex tangential vector with one axis)
        self._qt = np.array([q[0], q[1]])
        self._q_tan = 1.0 if np.linalg.norm(self._qt) > 0 else 0.0
        self._z0 = z0
        self._solve_layers()

    def _solve_layers(self):
        L = len(self.radii)
        RL = self.radii[-1]
        rs = self.radii / RL
        z0 = self._z0 / RL
        sig = self.sigmas
        N = self.n_terms
        # unknown layout: A_1..A_L, B_2..B_L (B_1 is the known primary)
        self._A = np.zeros((2, N + 1, L), dtype=complex)
        self._B = np.zeros((2, N + 1, L), dtype=complex)
        for part, q in ((0, self._q_rad), (1, self._q_tan)):
            if q == 0:
                continue
            for n in range(1, N + 1):
                if part == 0:
                    c_n = q * n * z0 ** (n - 1) / (FOUR_PI * sig[0])
                else:
                    c_n = q * z0 ** (n - 1) / (FOUR_PI * sig[0])
                nun = 2 * L - 1
                M = np.zeros((nun, nun), dtype=complex)
                rhs = np.zeros(nun, dtype=complex)
                iA = lambda j: j
                iB = lambda j: L + j - 1          # j >= 1
                row = 0
                for j in range(L - 1):            # interface at rs[j]
                    R = rs[j]
                    up, dn = R ** n, R ** -(n + 1)
                    upd, dnd = n * R ** (n - 1), -(n + 1) * R ** -(n + 2)
                    # continuity of phi
                    M[row, iA(j)] += up
                    if j >= 1:
                        M[row, iB(j)] += dn
                    M[row, iA(j + 1)] -= up
                    M[row, iB(j + 1)] -= dn
                    rhs[row] = -c_n * dn if j == 0 else 0.0
                    row += 1
                    # continuity of sigma dphi/dr
                    M[row, iA(j)] += sig[j] * upd
                    if j >= 1:
                        M[row, iB(j)] += sig[j] * dnd
                    M[row, iA(j + 1)] -= sig[j + 1] * upd
                    M[row, iB(j + 1)] -= sig[j + 1] * dnd
                    rhs[row] = -c_n * sig[0] * dnd if j == 0 else 0.0
                    row += 1
                # insulated outer surface
                M[row, iA(L - 1)] = sig[-1] * n
                if L > 1:
                    M[row, iB(L - 1)] = -sig[-1] * (n + 1)
                else:
                    rhs[row] = c_n * sig[0] * (n + 1)
                sol = np.linalg.solve(M, rhs)
                self._A[part, n] = sol[:L]
                self._B[part, n, 1:] = sol[L:]
                self._B[part, n, 0] = c_n
        self._scale = 1.0 / RL ** 2

    def potential(self, points):
        """Quasi-static potential (volts) at points inside the sphere."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        loc = pts @ self._rot.T
        RL = self.radii[-1]
        r = np.linalg.norm(loc, axis=1) / RL
        r = np.minimum(r, 1.0)
        with np.errstate(invalid="ignore"):
            mu = np.where(r > 0, loc[:, 2] / (RL * np.maximum(r, 1e-300)), 1.0)
        mu = np.clip(mu, -1.0, 1.0)
        sin_t = np.sqrt(1.0 - mu ** 2)
        safe = RL * np.maximum(r * sin_t, 1e-300)
        cph = np.where(sin_t > 1e-14, loc[:, 0] / safe, 0.0)
        sph = np.where(sin_t > 1e-14, loc[:, 1] / safe, 0.0)
        tang = self._qt[0] * cph + self._qt[1] * sph
        rb = self.radii / RL
        layer = np.searchsorted(rb * (1 + 1e-12), r)
        layer = np.minimum(layer, len(rb) - 1)
        N = self.n_terms
        # Legendre P_n and P_n^1 by upward recurrence
        P = np.zeros((N + 1, len(r)))
        P[0] = 1.0
        P[1] = mu
        for n in range(1, N):
            P[n + 1] = ((2 * n + 1) * mu * P[n] - n * P[n - 1]) / (n + 1)
        pi_n, _ = _pi_tau(N, mu)                  # P_n^1 / sin
        P1 = np.vstack([np.zeros_like(mu), pi_n * sin_t])
        phi = np.zeros(len(r), dtype=complex)
        rn = np.ones_like(r)
        rinv = np.where(r > 0, 1.0 / np.maximum(r, 1e-300), 0.0)
        rm = rinv.copy()
        for n in range(1, N + 1):
            rn = rn * r                           # r^n
            rm = rm * rinv                        # r^-(n+1)
            radial0 = (self._A[0, n, layer] * rn + self._B[0, n, layer] * rm)
            radial1 = (self._A[1, n, layer] * rn + self._B[1, n, layer] * rm)
            phi += radial0 * P[n] + radial1 * P1[n] * tang
        return phi * self._scale

    def truncation_delta(self, points, extra=10):
        other = LayeredSphereDipoleSolution(
            self.radii, self.sigmas, self.position, self.moment,
            n_terms=self.n_terms + extra)
        f0 = self.potential(points)
        f1 = other.potential(points)
        return float(np.linalg.norm(f1 - f0) / np.linalg.norm(f1))


def layered_dipole_potential(sol, points):
    return sol.potential(points)


def dense_pinv_projector(S, A=None):
    """Brute-force oblique star projector A S (S^T A S)^+ S^T."""
    S = np.asarray(S.toarray() if hasattr(S, "toarray") else S)
    n = S.shape[0]
    if n > 500:
        raise ValueError("dense oracle limited to 500 unknowns")
    if A is None:
        A = np.eye(n)
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A)
    core = S.T @ A @ S
    return A @ S @ np.linalg.pinv(core, rcond=1e-12) @ S.T
