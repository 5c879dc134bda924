"""Matrix exchange formats.

Binary container: 8-byte magic b"DVIEMAT1", two uint64 little-endian
dimensions, then the complex128 little-endian entries in row-major order.
Vectors are written as n x 1 matrices.

Text triplets (for small, diffable fixtures): a header line
"triplet <rows> <cols> <nnz>", then one "row col re im" line per entry.
"""

import numpy as np

MAGIC = b"DVIEMAT1"


def save_matrix(path, M):
    M = np.asarray(M.toarray() if hasattr(M, "toarray") else M,
                   dtype=np.complex128)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("expected a vector or matrix")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.asarray(M.shape, dtype="<u8").tobytes())
        f.write(M.astype("<c16").tobytes(order="C"))


def load_matrix(path):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a matrix container "
                             f"(bad magic {magic!r})")
        dims = np.frombuffer(f.read(16), dtype="<u8")
        n = int(dims[0]) * int(dims[1])
        data = np.frombuffer(f.read(n * 16), dtype="<c16")
        if data.size != n:
            raise ValueError(f"{path}: truncated matrix data")
    return data.reshape(int(dims[0]), int(dims[1])).astype(np.complex128)


def save_triplets(path, M):
    M = np.asarray(M.toarray() if hasattr(M, "toarray") else M,
                   dtype=np.complex128)
    if M.ndim == 1:
        M = M[:, None]
    rows, cols = np.nonzero(M)
    with open(path, "w") as f:
        f.write(f"triplet {M.shape[0]} {M.shape[1]} {len(rows)}\n")
        for r, c in zip(rows, cols):
            v = M[r, c]
            f.write(f"{r} {c} {v.real!r} {v.imag!r}\n")


def load_triplets(path):
    with open(path) as f:
        head = f.readline().split()
        if len(head) != 4 or head[0] != "triplet":
            raise ValueError(f"{path}: not a triplet file")
        nr, nc, nnz = (int(x) for x in head[1:])
        M = np.zeros((nr, nc), dtype=np.complex128)
        for k in range(nnz):
            parts = f.readline().split()
            if len(parts) != 4:
                raise ValueError(f"{path}: truncated at entry {k}")
            M[int(parts[0]), int(parts[1])] = \
                float(parts[2]) + 1j * float(parts[3])
    return M
