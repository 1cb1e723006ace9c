"""D3Q19 lattice constants.

Direction layout: index 0 is the rest population, 1-6 the face
neighbours (+/-x, +/-y, +/-z), 7-18 the twelve edge neighbours.
"""

import numpy as np

Q = 19

# discrete velocity set
C = np.array(
    [
        [0, 0, 0],
        [1, 0, 0], [-1, 0, 0],
        [0, 1, 0], [0, -1, 0],
        [0, 0, 1], [0, 0, -1],
        [1, 1, 0], [-1, -1, 0], [1, -1, 0], [-1, 1, 0],
        [1, 0, 1], [-1, 0, -1], [1, 0, -1], [-1, 0, 1],
        [0, 1, 1], [0, -1, -1], [0, 1, -1], [0, -1, 1],
    ],
    dtype=np.int64,
)

# quadrature weights
W = np.array(
    [1.0 / 3.0]
    + [1.0 / 18.0] * 6
    + [1.0 / 36.0] * 12,
    dtype=np.float64,
)

# index of the reversed direction
OPPOSITE = np.array(
    [0, 2, 1, 4, 3, 6, 5, 8, 7, 10, 9, 12, 11, 14, 13, 16, 15, 18, 17],
    dtype=np.int64,
)

# lattice speed of sound squared
CS2 = 1.0 / 3.0

# consistency of the velocity set (checked once at import)
assert abs(W.sum() - 1.0) < 1e-15
assert np.all(C + C[OPPOSITE] == 0)
assert np.allclose(np.einsum("q,qa,qb->ab", W, C, C), CS2 * np.eye(3), atol=1e-15)
