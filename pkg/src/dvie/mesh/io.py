"""Mesh readers/writers: a plain text tet format and Gmsh ASCII (v2.2, v4.1).

Plain format:
    n_vertices n_tets
    x y z                  (one line per vertex)
    v0 v1 v2 v3 region     (one line per tet, zero-based indices)
Lines starting with '#' are ignored.
"""

import numpy as np

from .core import TetMesh


def load_mesh(path):
    with open(path) as fh:
        head = fh.read(256)
    if "$MeshFormat" in head:
        return _load_gmsh(path)
    return _load_plain(path)


def _load_plain(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh
                 if ln.strip() and not ln.lstrip().startswith("#")]
    nv, nt = (int(x) for x in lines[0].split())
    verts = np.array([[float(x) for x in ln.split()] for ln in lines[1:1 + nv]])
    rows = [[int(x) for x in ln.split()] for ln in lines[1 + nv:1 + nv + nt]]
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape != (nt, 5):
        raise ValueError(f"expected {nt} tet lines with 5 entries")
    return TetMesh(verts, rows[:, :4], rows[:, 4])


def save_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_tets}\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t, r in zip(mesh.tets, mesh.region):
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]} {r}\n")


def _load_gmsh(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    sections = {}
    i = 0
    while i < len(lines):
        ln = lines[i].strip()
        if ln.startswith("$") and not ln.startswith("$End"):
            name = ln[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                j += 1
            sections[name] = lines[i + 1:j]
            i = j + 1
        else:
            i += 1
    version = float(sections["MeshFormat"][0].split()[0])
    if version >= 4.0:
        return _parse_gmsh41(sections)
    return _parse_gmsh22(sections)


def _parse_gmsh22(sec):
    node_lines = sec["Nodes"]
    n_nodes = int(node_lines[0])
    tag2idx = {}
    verts = np.empty((n_nodes, 3))
    for i, ln in enumerate(node_lines[1:1 + n_nodes]):
        parts = ln.split()
        tag2idx[int(parts[0])] = i
        verts[i] = [float(x) for x in parts[1:4]]

    elem_lines = sec["Elements"]
    n_elem = int(elem_lines[0])
    tets, region = [], []
    for ln in elem_lines[1:1 + n_elem]:
        parts = [int(x) for x in ln.split()]
        etype, ntags = parts[1], parts[2]
        if etype != 4:      # only first-order tets
            continue
        tags = parts[3:3 + ntags]
        conn = parts[3 + ntags:3 + ntags + 4]
        tets.append([tag2idx[c] for c in conn])
        region.append(tags[0] if tags else 0)
    if not tets:
        raise ValueError("no tetrahedra found in Gmsh file")
    return TetMesh(verts, np.array(tets), np.array(region))


def _parse_gmsh41(sec):
    node_lines = sec["Nodes"]
    nblocks, n_nodes = (int(x) for x in node_lines[0].split()[:2])
    tag2idx = {}
    verts = np.empty((n_nodes, 3))
    pos = 1
    count = 0
    for _ in range(nblocks):
        nb = int(node_lines[pos].split()[3])
        pos += 1
        tags = [int(node_lines[pos + k]) for k in range(nb)]
        pos += nb
        for k in range(nb):
            tag2idx[tags[k]] = count
            verts[count] = [float(x) for x in node_lines[pos + k].split()[:3]]
            count += 1
        pos += nb

    elem_lines = sec["Elements"]
    nblocks = int(elem_lines[0].split()[0])
    pos = 1
    tets, region = [], []
    for _ in range(nblocks):
        hdr = elem_lines[pos].split()
        ent_tag, etype, nb = int(hdr[1]), int(hdr[2]), int(hdr[3])
        pos += 1
        if etype == 4:
            for k in range(nb):
                conn = [int(x) for x in elem_lines[pos + k].split()[1:5]]
                tets.append([tag2idx[c] for c in conn])
                region.append(ent_tag)
        pos += nb
    if not tets:
        raise ValueError("no tetrahedra found in Gmsh file")
    return TetMesh(verts[:count], np.array(tets), np.array(region))
