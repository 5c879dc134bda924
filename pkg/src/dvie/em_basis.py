"""SWG flux basis bookkeeping and the lossy-dielectric material model.

One degree of freedom per mesh face: a full SWG function on interior faces,
a half SWG function on boundary faces.  In its supporting tet T (with apex
vertex a, the vertex opposite the shared face) the basis value is
s (r - a)/(3V), s = +1 in T+ and -1 in T-; its normal component on the dof
face is 1/A and its divergence is s/V.
"""

import numpy as np

from .constants import EPS0, C0


class DofSet:
    """Per-face SWG data in array form (face index == dof index)."""

    def __init__(self, mesh):
        self.mesh = mesh
        nf = mesh.n_faces
        self.n_dofs = nf
        self.is_half = np.zeros(nf, dtype=bool)
        self.is_half[mesh.boundary_faces] = True
        self.tet = mesh.face_tets.copy()               # (nf, 2), -1 for no T-
        # apex vertex of each adjacent tet = the local vertex opposite the face
        apex_idx = -np.ones((nf, 2), dtype=np.int64)
        for side in (0, 1):
            ok = mesh.face_tets[:, side] >= 0
            apex_idx[ok, side] = mesh.tets[
                mesh.face_tets[ok, side], mesh.face_local[ok, side]
            ]
        self.apex_index = apex_idx
        self.apex = np.where(
            (apex_idx >= 0)[:, :, None], mesh.vertices[apex_idx], np.nan
        )
        self.volume = np.where(
            self.tet >= 0, mesh.tet_volume[self.tet], np.nan
        )
        self.area = mesh.face_area
        self.normal = mesh.face_normal                 # oriented T+ -> T-

    def eval_dof(self, n, points, tol=1e-12):
        """Evaluate dof n at points; zero outside its support."""
        mesh = self.mesh
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(pts)
        for side, sign in ((0, 1.0), (1, -1.0)):
            t = self.tet[n, side]
            if t < 0:
                continue
            a = mesh.vertices[mesh.tets[t, 0]]
            M = (mesh.vertices[mesh.tets[t, 1:]] - a).T
            lam = np.linalg.solve(M, (pts - a).T).T
            inside = (lam.min(axis=1) >= -tol) & (lam.sum(axis=1) <= 1 + tol)
            val = sign * (pts - self.apex[n, side]) / (3.0 * self.volume[n, side])
            out[inside] = val[inside]
        return out if np.asarray(points).ndim == 2 else out[0]

    def eval_field(self, alpha, points):
        """Evaluate D = sum_n alpha_n f_n at points (points must be inside)."""
        mesh = self.mesh
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape, dtype=complex)
        for i, p in enumerate(pts):
            t = mesh.tet_containing(p)
            if t < 0:
                continue
            for l in range(4):
                f = mesh.tet_faces[t, l]
                s = mesh.tet_face_sign[t, l]
                side = 0 if s > 0 else 1
                out[i] += alpha[f] * s * (p - self.apex[f, side]) / (
                    3.0 * self.volume[f, side]
                )
        return out if np.asarray(points).ndim == 2 else out[0]


class Material:
    """Per-region material table; bind to a frequency to get fields."""

    def __init__(self, eps_r_prime, sigma, rho=None):
        self.eps_r_prime = np.atleast_1d(np.asarray(eps_r_prime, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if self.eps_r_prime.shape != self.sigma.shape:
            raise ValueError("eps_r_prime and sigma must have equal length")
        if rho is None:
            rho = np.full_like(self.sigma, 1000.0)
        self.rho = np.atleast_1d(np.asarray(rho, dtype=float))

    def at(self, omega, mesh):
        return BoundMaterial(self, omega, mesh)


class BoundMaterial:
    """Material evaluated on a mesh at a fixed angular frequency."""

    def __init__(self, table, omega, mesh):
        if omega <= 0:
            raise ValueError("omega must be positive")
        self.table = table
        self.omega = float(omega)
        self.mesh = mesh
        self.k0 = self.omega / C0

        reg = mesh.region
        if reg.max(initial=0) >= len(table.sigma):
            raise ValueError("mesh region id exceeds material table")
        # relative permittivity eps_r' - i sigma/(omega eps0), per tet
        self.eps_r = (table.eps_r_prime[reg]
                      - 1j * table.sigma[reg] / (self.omega * EPS0))
        self.eps = EPS0 * self.eps_r
        if np.any(self.eps == 0):
            raise ValueError("zero permittivity")
        self.inv_eps = 1.0 / self.eps
        self.kappa = 1.0 - EPS0 * self.inv_eps          # (eps - eps0)/eps
        self.sigma_t = table.sigma[reg]
        self.rho_t = table.rho[reg]

        # per-face contrast jump kappa(T-) - kappa(T+); zero on the boundary.
        # Written as eps0 (1/eps+ - 1/eps-): differencing kappa = 1 - eps0/eps
        # directly would round the O(omega^2) real part of the jump to zero
        # against the unit offsets in the conductive quasi-static regime.
        ft = mesh.face_tets
        self.dkappa = np.zeros(mesh.n_faces, dtype=complex)
        ii = mesh.interior_faces
        self.dkappa[ii] = EPS0 * (self.inv_eps[ft[ii, 0]]
                                  - self.inv_eps[ft[ii, 1]])
        # kappa on the T+ side of every face (the outer side convention)
        self.kappa_plus = self.kappa[ft[:, 0]]

    @property
    def sigma_min(self):
        return self.table.sigma.min()

    @property
    def sigma_max(self):
        return self.table.sigma.max()


def contrast_profile(mesh, mat):
    """Per-tet kappa and per-face dkappa (normal oriented T+ -> T-)."""
    return mat.kappa, mat.dkappa
