# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernel: fused projection + running-max update.

Issues the same tiled Fortran dgemm calls as the NumPy fallback
(_kernels_py), but folds the column maxima into the output inside the
scratch pass instead of materializing the full product and reducing in a
second pass.  Tile sizes must stay in sync with _kernels_py.
"""
from libc.stdlib cimport free, malloc

from scipy.linalg.cython_blas cimport dgemm

DEF ROW_TILE = 256
DEF ITEM_TILE = 512


def max_inner_update(double[::1] out, double[:, ::1] vectors, double[:, ::1] items):
    """out[j] = max(out[j], max_i <vectors[j], items[i]>), in place."""
    cdef int m = vectors.shape[0]
    cdef int d = vectors.shape[1]
    cdef int q = items.shape[0]
    if out.shape[0] != m:
        raise ValueError("out length must equal the projection count")
    if q == 0:
        return
    if items.shape[1] != d:
        raise ValueError("item dimension must equal the projection dimension")

    cdef double* scratch = <double*> malloc(ROW_TILE * ITEM_TILE * sizeof(double))
    if scratch == NULL:
        raise MemoryError()

    cdef char trans_a = b'T', trans_b = b'N'
    cdef double alpha = 1.0, beta = 0.0
    cdef int r0, r1, c0, rows, cols, i, j
    cdef double v

    try:
        with nogil:
            r0 = 0
            while r0 < m:
                rows = ROW_TILE if m - r0 >= ROW_TILE else m - r0
                r1 = r0 + rows
                c0 = 0
                while c0 < q:
                    cols = ITEM_TILE if q - c0 >= ITEM_TILE else q - c0
                    # Row-major (rows, d) x (cols, d)^T via column-major BLAS:
                    # C (rows x cols) = A^T B with A = vectors[r0:r1].T (d x rows),
                    # B = items[c0:c0+cols].T (d x cols), both ld = d.
                    dgemm(&trans_a, &trans_b, &rows, &cols, &d, &alpha,
                          &vectors[r0, 0], &d, &items[c0, 0], &d,
                          &beta, scratch, &rows)
                    for j in range(cols):
                        for i in range(rows):
                            v = scratch[j * rows + i]
                            if v > out[r0 + i]:
                                out[r0 + i] = v
                    c0 += cols
                r0 = r1
    finally:
        free(scratch)
