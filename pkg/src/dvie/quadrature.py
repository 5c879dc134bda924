"""Gauss rules on tets/triangles and closed-form static potential integrals.

Weights are normalized to sum to 1 (multiply by the element measure).  The
closed-form integrals (Wilton/Graglia line-reduction) provide
  triangle:  int 1/R dS, int R dS
  tet:       int 1/R dV, int (r'-r)/R dV
used for singularity extraction of the static kernel part.
"""

import numpy as np


def _perm_orbit(vals):
    """All distinct permutations of a barycentric tuple."""
    from itertools import permutations
    return sorted(set(permutations(vals)))


def _rule(orbits):
    pts, wts = [], []
    for w, vals in orbits:
        for p in _perm_orbit(vals):
            pts.append(p)
            wts.append(w)
    return np.array(pts, dtype=float), np.array(wts, dtype=float)


TET_RULES = {
    1: _rule([(1.0, (0.25, 0.25, 0.25, 0.25))]),
    4: _rule([(0.25, (0.5854101966249685, 0.1381966011250105,
                      0.1381966011250105, 0.1381966011250105))]),
    11: _rule([
        (-0.0789333333333333, (0.25, 0.25, 0.25, 0.25)),
        (0.0457333333333333, (0.7857142857142857, 0.0714285714285714,
                              0.0714285714285714, 0.0714285714285714)),
        (0.1493333333333333, (0.3994035761667992, 0.3994035761667992,
                              0.1005964238332008, 0.1005964238332008)),
    ]),
    14: _rule([
        (0.1126879257180162, (0.0673422422100982, 0.3108859192633005,
                              0.3108859192633005, 0.3108859192633005)),
        (0.0734930431163619, (0.7217942490673264, 0.0927352503108912,
                              0.0927352503108912, 0.0927352503108912)),
        (0.0425460207770812, (0.4544962958743503, 0.4544962958743503,
                              0.0455037041256497, 0.0455037041256497)),
    ]),
    24: _rule([
        (0.0399227502581679, (0.3561913862225449, 0.2146028712591517,
                              0.2146028712591517, 0.2146028712591517)),
        (0.0100772110553207, (0.8779781243961660, 0.0406739585346113,
                              0.0406739585346113, 0.0406739585346113)),
        (0.0553571815436544, (0.0329863295731731, 0.3223378901422757,
                              0.3223378901422757, 0.3223378901422757)),
        (0.0482142857142857, (0.0636610018750175, 0.0636610018750175,
                              0.2696723314583159, 0.6030056647916491)),
    ]),
}

TRI_RULES = {
    1: _rule([(1.0, (1 / 3, 1 / 3, 1 / 3))]),
    3: _rule([(1 / 3, (2 / 3, 1 / 6, 1 / 6))]),
    6: _rule([
        (0.1099517436553219, (0.8168475729804590, 0.0915762135097705,
                              0.0915762135097705)),
        (0.2233815896780115, (0.1081030181680702, 0.4459484909159649,
                              0.4459484909159649)),
    ]),
    12: _rule([
        (0.0508449063702068, (0.8738219710169956, 0.0630890144915022,
                              0.0630890144915022)),
        (0.1167862757263794, (0.5014265096581791, 0.2492867451709104,
                              0.2492867451709104)),
        (0.0828510756183736, (0.0531450498448169, 0.3103524510337844,
                              0.6365024991213987)),
    ]),
}


def tet_gauss(verts, npts):
    """Quadrature points/weights on a tet; weights include the volume."""
    bary, w = TET_RULES[npts]
    pts = bary @ verts
    v = abs(np.linalg.det(np.asarray(verts[1:]) - verts[0])) / 6.0
    return pts, w * v


def tri_gauss(verts, npts):
    bary, w = TRI_RULES[npts]
    pts = bary @ verts
    a = 0.5 * np.linalg.norm(np.cross(verts[1] - verts[0], verts[2] - verts[0]))
    return pts, w * a


# ----------------------------------------------------------------------
# closed-form static integrals

def tri_static_batch(tris, obs):
    """(int 1/R dS, int R dS) for triangles `tris` (T,3,3) at `obs` (Q,3).

    Returns two (T, Q) arrays.  Line-reduction formulas, stable for
    observation points on the triangle plane, edges, and vertices.
    """
    tris = np.asarray(tris, dtype=float)
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    cr = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    nhat = cr / np.linalg.norm(cr, axis=1)[:, None]          # (T,3)
    scale = np.maximum(np.linalg.norm(tris[:, 1] - tris[:, 0], axis=1),
                       np.linalg.norm(tris[:, 2] - tris[:, 0], axis=1))

    d = np.einsum("qd,td->tq", obs, nhat) - np.einsum(
        "td,td->t", tris[:, 0], nhat)[:, None]               # (T,Q)
    rho = obs[None, :, :] - d[:, :, None] * nhat[:, None, :]  # (T,Q,3)
    absd = np.abs(d)

    i_m1 = np.zeros_like(d)
    edge_sum = np.zeros_like(d)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        pa, pb = tris[:, a], tris[:, b]                      # (T,3)
        ell = pb - pa
        lhat = ell / np.linalg.norm(ell, axis=1)[:, None]
        mhat = np.cross(lhat, nhat)                          # outward in plane
        da = pa[:, None, :] - rho                            # (T,Q,3)
        db = pb[:, None, :] - rho
        lm = np.einsum("tqd,td->tq", da, lhat)
        lp = np.einsum("tqd,td->tq", db, lhat)
        p0 = np.einsum("tqd,td->tq", da, mhat)
        rm = np.linalg.norm(obs[None] - pa[:, None, :], axis=2)
        rp = np.linalg.norm(obs[None] - pb[:, None, :], axis=2)
        r0sq = p0 * p0 + d * d

        # stable log of (R+ + l+)/(R- + l-)
        num, den = rp + lp, rm + lm
        alt = (lp < 0) & (lm < 0)
        num = np.where(alt, rm - lm, num)
        den = np.where(alt, rp - lp, den)
        safe = (den > 0) & (num > 0)
        ln = np.where(safe, np.log(np.where(safe, num, 1.0) /
                                   np.where(safe, den, 1.0)), 0.0)

        atn = (np.arctan2(p0 * lp, r0sq + absd * rp)
               - np.arctan2(p0 * lm, r0sq + absd * rm))

        on_line = np.abs(p0) < 1e-13 * scale[:, None]
        i_m1 += np.where(on_line, 0.0, p0 * ln) - absd * atn
        k_edge = 0.5 * (lp * rp - lm * rm + r0sq * ln)
        edge_sum += np.where(on_line, 0.0, p0 * k_edge)

    i_p1 = (d * d * i_m1 + edge_sum) / 3.0
    return i_m1, i_p1


def tri_static_potentials(tri, obs):
    im1, ip1 = tri_static_batch(np.asarray(tri)[None], obs)
    return im1[0], ip1[0]


_TET_FACES = [(1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)]  # outward


def tet_static_batch(tets, obs):
    """(int 1/R dV, int (r'-r)/R dV) for tets (M,4,3) at obs (Q,3).

    Returns i0 (M, Q) and i1 (M, Q, 3).
    """
    tets = np.asarray(tets, dtype=float)
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    orient = np.sign(np.linalg.det(tets[:, 1:] - tets[:, :1]))
    i0 = np.zeros((len(tets), len(obs)))
    i1 = np.zeros((len(tets), len(obs), 3))
    for f in _TET_FACES:
        tris = tets[:, list(f)]
        cr = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        nhat = orient[:, None] * cr / np.linalg.norm(cr, axis=1)[:, None]
        im1, ip1 = tri_static_batch(tris, obs)
        # re-apply orientation: tri_static_batch used its own normal; the
        # line formulas are normal-sign invariant, so only d flips
        d = (np.einsum("td,td->t", tris[:, 0], nhat)[:, None]
             - np.einsum("qd,td->tq", obs, nhat))            # obs -> plane
        i0 += 0.5 * d * im1
        i1 += ip1[:, :, None] * nhat[:, None, :]
    return i0, i1


def tet_static_potentials(verts, obs):
    i0, i1 = tet_static_batch(np.asarray(verts)[None], obs)
    return i0[0], i1[0]
