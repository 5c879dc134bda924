"""Tetrahedral mesh with the face/edge topology used by flux-conforming bases.

Conventions:
  * tets are stored with positive orientation (positive signed volume),
  * every face stores its two adjacent tets as (T+, T-); T+ is the tet with
    the smaller index (the only tet for boundary faces, with T- = -1),
  * the stored face vertex ordering is outward as seen from T+, so the face
    normal points from T+ into T- (outward on the boundary).
"""

import numpy as np

# face l is opposite local vertex l, ordered outward for a positive tet
LOCAL_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])

_TET_EDGES = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


class MeshTopologyError(Exception):
    pass


class TetMesh:
    def __init__(self, vertices, tets, region=None):
        self.vertices = np.asarray(vertices, dtype=float)
        tets = np.asarray(tets, dtype=np.int64).copy()
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise ValueError("tets must be (n_tets, 4)")
        if region is None:
            region = np.zeros(len(tets), dtype=np.int64)
        self.region = np.asarray(region, dtype=np.int64)

        # enforce positive orientation
        v = self.vertices
        d = np.einsum(
            "ij,ij->i",
            v[tets[:, 1]] - v[tets[:, 0]],
            np.cross(v[tets[:, 2]] - v[tets[:, 0]], v[tets[:, 3]] - v[tets[:, 0]]),
        )
        flip = d < 0
        tets[flip] = tets[flip][:, [0, 1, 3, 2]]
        self.tets = tets
        if np.any(np.abs(d) < 1e-300):
            raise MeshTopologyError("degenerate (zero volume) tetrahedron")

        self._build_geometry()
        self._build_faces()
        self._build_edges()

    # ------------------------------------------------------------------

    def _build_geometry(self):
        v = self.vertices[self.tets]  # (Nt, 4, 3)
        self.tet_centroid = v.mean(axis=1)
        d = np.einsum(
            "ij,ij->i",
            v[:, 1] - v[:, 0],
            np.cross(v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]),
        )
        self.tet_volume = d / 6.0
        # enclosing radius: enough for near-pair classification
        self.tet_radius = np.linalg.norm(
            v - self.tet_centroid[:, None, :], axis=2
        ).max(axis=1)

    def _build_faces(self):
        nt = len(self.tets)
        tri = self.tets[:, LOCAL_FACES]          # (Nt, 4, 3) oriented outward
        tri_flat = tri.reshape(-1, 3)
        key = np.sort(tri_flat, axis=1)

        order = np.lexsort((key[:, 2], key[:, 1], key[:, 0]))
        key_sorted = key[order]
        new = np.ones(len(key_sorted), dtype=bool)
        new[1:] = np.any(key_sorted[1:] != key_sorted[:-1], axis=1)
        group = np.cumsum(new) - 1                # face id per sorted row
        n_faces = group[-1] + 1 if len(group) else 0
        face_of = np.empty(4 * nt, dtype=np.int64)
        face_of[order] = group

        counts = np.bincount(group, minlength=n_faces)
        if counts.max(initial=0) > 2:
            raise MeshTopologyError("face shared by more than two tets")

        self.tet_faces = face_of.reshape(nt, 4)

        face_tets = -np.ones((n_faces, 2), dtype=np.int64)
        face_local = -np.ones((n_faces, 2), dtype=np.int64)
        rows = np.repeat(np.arange(nt), 4)
        local = np.tile(np.arange(4), nt)
        # T+ = first (smaller) tet index touching the face
        for f, t, l in zip(face_of, rows, local):
            if face_tets[f, 0] < 0:
                face_tets[f, 0] = t
                face_local[f, 0] = l
            else:
                face_tets[f, 1] = t
                face_local[f, 1] = l
        self.face_tets = face_tets
        self.face_local = face_local

        # vertex ordering outward from T+
        self.faces = tri[face_tets[:, 0], face_local[:, 0]]

        fv = self.vertices[self.faces]
        cr = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
        nrm = np.linalg.norm(cr, axis=1)
        if np.any(nrm < 1e-300):
            raise MeshTopologyError("degenerate face")
        self.face_area = 0.5 * nrm
        self.face_normal = cr / nrm[:, None]
        self.face_centroid = fv.mean(axis=1)

        self.boundary_faces = np.flatnonzero(face_tets[:, 1] < 0)
        self.interior_faces = np.flatnonzero(face_tets[:, 1] >= 0)

        # sign of each tet w.r.t. its four faces (+1 on T+ side)
        self.tet_face_sign = np.where(
            face_tets[self.tet_faces, 0] == np.arange(nt)[:, None], 1, -1
        )

    def _build_edges(self):
        pairs = self.tets[:, _TET_EDGES].reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        self.edges = np.unique(pairs, axis=0)

        bnd_tris = self.faces[self.boundary_faces]
        bnd_pairs = bnd_tris[:, [(0, 1), (1, 2), (0, 2)]].reshape(-1, 2)
        bnd_pairs = np.sort(bnd_pairs, axis=1)
        self.boundary_edges = np.unique(bnd_pairs, axis=0)
        self.boundary_vertices = np.unique(bnd_tris)

        edge_key = self.edges[:, 0] * len(self.vertices) + self.edges[:, 1]
        bkey = self.boundary_edges[:, 0] * len(self.vertices) + self.boundary_edges[:, 1]
        self.interior_edges = self.edges[~np.isin(edge_key, bkey)]
        used = np.unique(self.tets)
        self.interior_vertices = used[~np.isin(used, self.boundary_vertices)]

    # ------------------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_faces(self):
        return len(self.faces)

    def counts(self):
        """Mesh counts and the solenoidal / non-solenoidal space dimensions."""
        n_bf = len(self.boundary_faces)
        n_loop = len(self.interior_edges) - len(self.interior_vertices)
        n_star = self.n_tets + n_bf
        return {
            "n_vertices": self.n_vertices,
            "n_tets": self.n_tets,
            "n_faces": self.n_faces,
            "n_boundary_faces": n_bf,
            "n_interior_faces": len(self.interior_faces),
            "n_interior_edges": len(self.interior_edges),
            "n_interior_vertices": len(self.interior_vertices),
            "n_loop": n_loop,
            "n_star": n_star,
        }

    def validate(self):
        """Check the boundary is a (union of) genus-0 surface(s) and the
        loop/star dimension bookkeeping is consistent.

        Raises MeshTopologyError for handles (genus > 0), for which the
        solenoidal-space dimension formula used throughout does not hold.
        """
        vb = len(self.boundary_vertices)
        eb = len(self.boundary_edges)
        fb = len(self.boundary_faces)
        ncomp = self._boundary_components()
        euler = vb - eb + fb
        if euler != 2 * ncomp:
            raise MeshTopologyError(
                f"boundary surface has nonzero genus (chi={euler}, "
                f"components={ncomp})"
            )
        c = self.counts()
        if c["n_faces"] != c["n_loop"] + c["n_star"] - 1:
            raise MeshTopologyError("loop/star dimension mismatch; the mesh "
                                    "is not simply connected")
        return c

    def _boundary_components(self):
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        bf = self.boundary_faces
        if len(bf) == 0:
            return 0
        tris = self.faces[bf]
        # faces sharing an edge are connected
        edges = np.sort(tris[:, [(0, 1), (1, 2), (0, 2)]].reshape(-1, 2), axis=1)
        key = edges[:, 0] * len(self.vertices) + edges[:, 1]
        owner = np.repeat(np.arange(len(bf)), 3)
        order = np.argsort(key, kind="stable")
        key, owner = key[order], owner[order]
        same = key[1:] == key[:-1]
        i, j = owner[:-1][same], owner[1:][same]
        n = len(bf)
        adj = coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp

    # ------------------------------------------------------------------

    def tet_containing(self, point, tol=1e-10):
        """Index of a tet containing `point` (-1 if outside)."""
        p = np.asarray(point, dtype=float)
        v = self.vertices[self.tets]
        for t in np.argsort(np.linalg.norm(self.tet_centroid - p, axis=1)):
            a = v[t, 0]
            lam = np.linalg.solve((v[t, 1:] - a).T, p - a)
            if lam.min() >= -tol and lam.sum() <= 1.0 + tol:
                return t
        return -1
