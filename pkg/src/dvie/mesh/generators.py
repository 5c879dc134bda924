"""Structured mesh generators: cube and (layered) ball.

The ball is built by radially mapping a Kuhn-subdivided cube.  With n
divisions of [-1,1]^3 (n even) every subcube lies in exactly one max-norm
band [(k-1)/S, k/S] with S = n/2, so tets never straddle a material
interface: each interface sphere is the image of a max-norm shell and its
vertices land exactly on the requested radius.
"""

import itertools

import numpy as np

from .core import TetMesh

# the six Kuhn tets of a unit cell, all sharing the main diagonal
_KUHN = []
for perm in itertools.permutations(range(3)):
    o = np.zeros(3, dtype=np.int64)
    path = [o.copy()]
    for ax in perm:
        o[ax] = 1
        path.append(o.copy())
    _KUHN.append(np.array(path))
_KUHN = np.array(_KUHN)  # (6, 4, 3) corner offsets


def cube_mesh(divisions, side=1.0):
    """Kuhn-subdivided cube [-side/2, side/2]^3 with `divisions` cells per axis."""
    n = int(divisions)
    if n < 1:
        raise ValueError("divisions must be >= 1")
    grid = np.arange(n + 1)
    idx = lambda i, j, k: (i * (n + 1) + j) * (n + 1) + k
    I, J, K = np.meshgrid(grid, grid, grid, indexing="ij")
    verts = np.stack([I, J, K], axis=-1).reshape(-1, 3) * (side / n) - side / 2.0

    cells = np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n),
                                 indexing="ij"), axis=-1).reshape(-1, 3)
    tets = np.empty((len(cells) * 6, 4), dtype=np.int64)
    for t, offs in enumerate(_KUHN):
        c = cells[:, None, :] + offs[None, :, :]      # (ncell, 4, 3)
        tets[t::6] = idx(c[..., 0], c[..., 1], c[..., 2])
    return TetMesh(verts, tets)


def _kuhn_ball(radius, refinement):
    """Kuhn-lattice ball: radially map max-norm shells of a cube lattice."""
    n = 2 * (int(refinement) + 1)
    S = n // 2
    cube = cube_mesh(n, side=2.0)
    v = cube.vertices
    m = np.rint(np.abs(v).max(axis=1) * S).astype(np.int64)   # shell index
    rho = m * (radius / S)
    nrm = np.linalg.norm(v, axis=1)
    scale = np.zeros(len(v))
    nz = nrm > 0
    scale[nz] = rho[nz] / nrm[nz]
    return TetMesh(v * scale[:, None], cube.tets,
                   np.zeros(len(cube.tets), dtype=np.int64))


def _cubed_sphere_surface(m):
    """Triangulated unit sphere from an equiangular cubed-sphere grid.

    Returns (vertices, triangles) with outward-oriented triangles; quad
    diagonals chosen by the smallest global vertex index so the
    triangulation is independent of panel traversal order.
    """
    t = np.tan(np.linspace(-np.pi / 4, np.pi / 4, m + 1))
    uu, vv = np.meshgrid(t, t, indexing="ij")
    panels = []
    for ax, sign in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
        p = np.empty(uu.shape + (3,))
        other = [a for a in range(3) if a != ax]
        p[..., ax] = sign
        p[..., other[0]] = uu
        p[..., other[1]] = vv
        panels.append(p / np.linalg.norm(p, axis=-1, keepdims=True))
    # weld shared edge/corner points
    allp = np.concatenate([p.reshape(-1, 3) for p in panels])
    key = np.round(allp / 1e-12).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True,
                              return_inverse=True)
    verts = allp[first]
    gid = inv.reshape(6, m + 1, m + 1)
    tris = []
    for f in range(6):
        for i in range(m):
            for j in range(m):
                q = (gid[f, i, j], gid[f, i + 1, j],
                     gid[f, i + 1, j + 1], gid[f, i, j + 1])
                if min(q[0], q[2]) < min(q[1], q[3]):
                    tris += [(q[0], q[1], q[2]), (q[0], q[2], q[3])]
                else:
                    tris += [(q[1], q[2], q[3]), (q[1], q[3], q[0])]
    tris = np.array(tris, dtype=np.int64)
    # orient outward
    fv = verts[tris]
    nrm = np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0])
    flip = np.einsum("fd,fd->f", nrm, fv.mean(axis=1)) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return verts, tris


def _prism_tets(a, b, c, a2, b2, c2):
    """Split prism (bottom a,b,c / top a2,b2,c2) into 3 tets with quad
    diagonals anchored at the smallest bottom index.  With bottom indices
    always below top indices the three diagonals can never form the
    undecomposable cyclic configuration."""
    # rotate so a is the smallest bottom vertex
    while not (a < b and a < c):
        a, b, c = b, c, a
        a2, b2, c2 = b2, c2, a2
    if b < c:
        return [(a, b, c, c2), (a, b, c2, b2), (a, b2, c2, a2)]
    return [(a, b, c, b2), (a, c, c2, b2), (a, c2, a2, b2)]


def layered_ball_mesh(radii, refinement=1):
    """Concentric layered ball; region i is the layer bounded by radii[i].

    `radii` are the outer radii of the layers, strictly increasing.  A
    single layer uses the Kuhn-lattice ball.  Multiple layers use a
    radially extruded cubed-sphere: interface spheres are vertex layers
    (interface vertices land exactly on the requested radii), thick layers
    are subdivided radially, and every prism is split into tets
    conformally, so thin shells such as a skull keep their own cells.
    """
    radii = [float(r) for r in np.atleast_1d(radii)]
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise ValueError("radii must be positive and strictly increasing")
    if len(radii) == 1:
        return _kuhn_ball(radii[0], refinement)

    m = int(refinement) + 2
    sverts, stris = _cubed_sphere_surface(m)
    nv_s = len(sverts)

    # radial knots: every interface plus subdivision of thick layers at
    # roughly the angular resolution
    h_target = (np.pi / (2 * m)) * radii[-1] * 1.2
    knots = [0.0]
    layer_of_seg = []
    for i, r in enumerate(radii):
        r_in = knots[-1]
        nseg = max(1, int(round((r - r_in) / h_target)))
        knots.extend(np.linspace(r_in, r, nseg + 1)[1:].tolist())
        layer_of_seg.extend([i] * nseg)
    knots = np.array(knots[1:])              # radii of vertex layers
    K = len(knots)

    verts = np.concatenate([sverts * r for r in knots]
                           + [np.zeros((1, 3))])
    center = K * nv_s
    tets, region = [], []
    # core: first vertex layer to the center
    for (a, b, c) in stris:
        tets.append((center, a, b, c))
        region.append(layer_of_seg[0])
    # prism shells
    for k in range(K - 1):
        lo, hi = k * nv_s, (k + 1) * nv_s
        for (a, b, c) in stris:
            tets.extend(_prism_tets(lo + a, lo + b, lo + c,
                                    hi + a, hi + b, hi + c))
            region.extend([layer_of_seg[k + 1]] * 3)
    tets = np.array(tets, dtype=np.int64)
    # enforce positive orientation
    tv = verts[tets]
    det = np.linalg.det(tv[:, 1:] - tv[:, :1])
    neg = det < 0
    tets[neg] = tets[neg][:, [0, 2, 1, 3]]
    return TetMesh(verts, tets, np.array(region, dtype=np.int64))


def ball_mesh(radius, refinement=1):
    """Homogeneous ball of given radius."""
    return _kuhn_ball(radius, refinement)
