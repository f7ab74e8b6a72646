"""Pure-Python (NumPy + BLAS) implementation of the hot kernel.

The kernel computes ``out[j] = max(out[j], max_i <vectors[j], items[i]>)``
for a block of items.  Both this fallback and the compiled core issue the
same Fortran ``dgemm`` calls on fixed tiles (ROW_TILE projection rows by
at most ITEM_TILE items), so every projection value is a pure function of
(projection row, item) regardless of how a stream is batched, sharded, or
reordered.  That is what makes the sketch laws (permutation, duplicate,
merge) hold bit-exactly.  Do not change the tiling without updating the
compiled core to match.
"""

import numpy as np
from scipy.linalg.blas import dgemm

ROW_TILE = 256
ITEM_TILE = 512


def max_inner_update(out, vectors, items):
    """Fold a block of items into the running maxima, in place.

    Args:
        out: (m,) float64 running maxima, updated in place.
        vectors: (m, d) float64 C-contiguous projection rows.
        items: (q, d) float64 C-contiguous unit vectors.
    """
    m, d = vectors.shape
    q = items.shape[0]
    if q == 0:
        return
    vf = vectors.T  # (d, m) Fortran view, no copy
    itf = items.T
    for r0 in range(0, m, ROW_TILE):
        r1 = min(r0 + ROW_TILE, m)
        vblk = vf[:, r0:r1]
        for c0 in range(0, q, ITEM_TILE):
            c1 = min(c0 + ITEM_TILE, q)
            prod = dgemm(1.0, vblk, itf[:, c0:c1], trans_a=1)
            np.maximum(out[r0:r1], prod.max(axis=1), out=out[r0:r1])
