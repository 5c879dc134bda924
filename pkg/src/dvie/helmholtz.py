"""Quasi-Helmholtz decomposition machinery: star maps, loop basis, and the
oblique projectors onto the non-solenoidal (star) and solenoidal (loop)
subspaces of the SWG coefficient space.

Star maps:
  Sigma_v (N_F x N_T):  +1/-1 incidence of faces to their T+/T- tets,
  Sigma_s (N_F x N_eF): -1 at each half dof's own boundary face,
  Sigma = [Sigma_v Sigma_s];  Sigma_tilde drops the last column (the star
  coefficients have a one-dimensional redundancy on a closed mesh).

Projectors (A symmetric positive definite or complex symmetric invertible):
  P_sigma = A St (St^T A St)^-1 St^T        (St = Sigma_tilde)
  P_lambda = I - P_sigma
which realize the A-weighted oblique splitting; P_lambda annihilates St^T
and P_sigma reproduces the star range.
"""

import numpy as np
from scipy.sparse import coo_matrix, hstack as sp_hstack, csc_matrix
from scipy.sparse.linalg import splu
import scipy.linalg


class StarMaps:
    def __init__(self, sigma_v, sigma_s):
        self.sigma_v = sigma_v
        self.sigma_s = sigma_s
        self.sigma = sp_hstack([sigma_v, sigma_s]).tocsr()
        self.sigma_tilde = self.sigma[:, :-1].tocsr()


def build_star_maps(mesh):
    nf, nt = mesh.n_faces, mesh.n_tets
    rows = mesh.tet_faces.ravel()
    cols = np.repeat(np.arange(nt), 4)
    vals = mesh.tet_face_sign.ravel().astype(float)
    sigma_v = coo_matrix((vals, (rows, cols)), shape=(nf, nt)).tocsr()

    bnd = mesh.boundary_faces
    sigma_s = coo_matrix(
        (-np.ones(len(bnd)), (bnd, np.arange(len(bnd)))),
        shape=(nf, len(bnd)),
    ).tocsr()
    return StarMaps(sigma_v, sigma_s)


def build_loop_basis(mesh, method="edge_loops"):
    """Basis of the solenoidal subspace, N_F x N_L.

    edge_loops: one candidate column per interior edge (+-1 on the faces
    around the edge, sign from the directed edge's orientation in the face
    cycle), then an independent subset of size N_iE - N_iV selected by
    column-pivoted QR.
    nullspace_svd: orthonormal null space of Sigma_tilde^T.
    """
    c = mesh.counts()
    n_loop = c["n_loop"]
    if method == "nullspace_svd":
        st = build_star_maps(mesh).sigma_tilde
        lam = scipy.linalg.null_space(st.T.toarray())
        if lam.shape[1] != n_loop:
            raise RuntimeError("unexpected solenoidal dimension")
        return lam

    if method != "edge_loops":
        raise ValueError(f"unknown loop basis method: {method}")

    edge_col = {tuple(e): i for i, e in enumerate(mesh.interior_edges)}
    rows, cols, vals = [], [], []
    for f in range(mesh.n_faces):
        tri = mesh.faces[f]
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key, sign = ((a, b), 1.0) if a < b else ((b, a), -1.0)
            e = edge_col.get(key)
            if e is not None:
                rows.append(f)
                cols.append(e)
                vals.append(sign)
    cand = coo_matrix(
        (vals, (rows, cols)), shape=(mesh.n_faces, len(edge_col))
    ).toarray()
    if n_loop == cand.shape[1]:
        return cand
    _, r, piv = scipy.linalg.qr(cand, mode="economic", pivoting=True)
    keep = np.sort(piv[:n_loop])
    diag = np.abs(np.diag(r))
    if n_loop and diag[n_loop - 1] < 1e-10 * max(diag[0], 1.0):
        raise RuntimeError("loop candidates rank-deficient below n_loop")
    return cand[:, keep]


class ProjectorPair:
    """Dense realization of the A-weighted oblique projector pair."""

    def __init__(self, sigma_tilde, kind="identity", G_eps=None, D=None):
        self.kind = kind
        st = sigma_tilde
        std = st.toarray()
        if kind == "identity":
            x = std.astype(float)
        elif kind == "gram_eps_inverse":
            if G_eps is None:
                raise ValueError("gram_eps_inverse needs G_eps")
            x = splu(csc_matrix(G_eps)).solve(std.astype(complex))
        elif kind == "diag_D_inverse":
            if D is None:
                raise ValueError("diag_D_inverse needs the diagonal D")
            x = std / np.asarray(D)[:, None]
        else:
            raise ValueError(f"unknown projector kind: {kind}")
        s = std.T @ x
        self.P_sigma = x @ np.linalg.solve(s, std.T.astype(x.dtype))
        n = st.shape[0]
        self.P_lambda = np.eye(n, dtype=self.P_sigma.dtype) - self.P_sigma

    def norm_sigma(self, rng=None):
        return operator_norm(self.P_sigma, rng=rng)

    def norm_lambda(self, rng=None):
        return operator_norm(self.P_lambda, rng=rng)


def make_projectors(mesh, kind="identity", G_eps=None, D=None, star_maps=None):
    maps = star_maps or build_star_maps(mesh)
    return ProjectorPair(maps.sigma_tilde, kind=kind, G_eps=G_eps, D=D)


def build_diag_D(G_eps):
    """Diagonal scaling for projector weighting.

    Re(diag(G_eps)) when the real part of the inverse diagonal dominates,
    otherwise i Im(diag(G_eps)); the imaginary branch avoids cancellation
    for conductive media.  Ties take the real branch.
    """
    dg = np.asarray(G_eps.diagonal())
    inv = 1.0 / dg
    if np.abs(inv.real).max() >= np.abs(inv.imag).max():
        return dg.real.astype(complex)
    return 1j * dg.imag


def operator_norm(op, n=None, rng=None, iters=20, tol=1e-3):
    """Randomized power iteration estimate of the 2-norm.

    `op` is a dense matrix or a callable pair (matvec, rmatvec, n).
    """
    if callable(op):
        raise TypeError("pass a dense matrix or (matvec, rmatvec, n) tuple")
    if isinstance(op, tuple):
        mv, rmv, n = op
    else:
        A = np.asarray(op)
        mv = lambda x: A @ x
        rmv = lambda x: A.conj().T @ x
        n = A.shape[1]
    rng = rng or np.random.default_rng(1234)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = mv(x)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = rmv(y / ny)
        nx = np.linalg.norm(x)
        new = np.sqrt(ny * nx) if nx > 0 else ny
        if est > 0 and abs(new - est) < tol * est:
            return float(new)
        est = new
        if nx == 0:
            break
        x /= nx
    return float(est)