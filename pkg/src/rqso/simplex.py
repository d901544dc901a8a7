"""
Points of the probability simplex.

States are plain ``float64`` numpy arrays of length ``m >= 2``. The
:func:`validate` gate returns a read-only copy, so a validated point can be
shared freely. Vertex indices are 0-based throughout the Python API.
"""
import numpy as np

#: Absolute tolerance for the sum-to-one invariant and the negative clamp.
SUM_TOL = 1e-12
#: Inputs whose coordinate sum is further than this from 1 are rejected.
REJECT_TOL = 1e-6


class SimplexError(ValueError):
    """Raised for vectors that are not (close to) probability vectors."""


def validate(coords):
    """Return `coords` as a validated, read-only simplex point.

    Coordinates in ``[-1e-12, 0)`` are clamped to zero and the vector is
    renormalized by its sum. Input that already satisfies the invariants
    (no negatives, sum within :data:`SUM_TOL` of one) is returned with
    identical values, which makes the function idempotent.

    Parameters
    ----------
    coords : array_like
        Candidate probability vector with at least two entries.

    Returns
    -------
    numpy.ndarray
        Read-only float64 array summing to one within :data:`SUM_TOL`.

    Raises
    ------
    SimplexError
        If a coordinate is below ``-1e-12``, the sum is off by more than
        :data:`REJECT_TOL`, there are fewer than two entries, or the input
        is not a finite 1-D vector.
    """
    x = np.array(coords, dtype=np.float64)
    if x.ndim != 1:
        raise SimplexError(f"expected a 1-D vector, got shape {x.shape}")
    if x.size < 2:
        raise SimplexError(f"need at least 2 coordinates, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise SimplexError("coordinates must be finite")
    if np.any(x < -SUM_TOL):
        raise SimplexError(f"negative coordinate {x.min():.3g} below -{SUM_TOL:g}")
    total = x.sum()
    if abs(total - 1.0) > REJECT_TOL:
        raise SimplexError(f"coordinates sum to {total!r}, not 1")
    negative = x < 0
    if negative.any() or abs(total - 1.0) > SUM_TOL:
        x[negative] = 0.0
        x /= x.sum()
    x.flags.writeable = False
    return x


def vertex(m, i):
    """The `i`-th vertex ``e_i`` of the simplex in dimension `m` (0-based)."""
    if m < 2:
        raise SimplexError("m must be at least 2")
    if not 0 <= i < m:
        raise IndexError(f"vertex index {i} out of range for m={m}")
    e = np.zeros(m)
    e[i] = 1.0
    e.flags.writeable = False
    return e


def vertices(m):
    """All vertices as rows of an ``(m, m)`` identity matrix."""
    return np.eye(m)


def barycenter(m):
    """The uniform distribution on `m` types."""
    return validate(np.full(m, 1.0 / m))


def vertex_distance(x, i):
    """Euclidean distance ``||x - e_i||``.

    ``1 - x_i`` is evaluated as the sum of the other coordinates, which is
    equal on the simplex and keeps full relative precision near the vertex.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[-1]
    if not 0 <= i < m:
        raise IndexError(f"vertex index {i} out of range for m={m}")
    others = np.delete(x, i, axis=-1)
    gap = others.sum(axis=-1)
    # scale before squaring so distances near the underflow floor survive
    scale = np.maximum(gap, others.max(axis=-1))
    safe = np.where(scale > 0, scale, 1.0)
    g, o = gap / safe, others / safe[..., None]
    return scale * np.sqrt(g * g + (o * o).sum(axis=-1))


def distance_to_vertices(x):
    """Distance from `x` (or each row of `x`) to the vertex set."""
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[-1]
    d = np.stack([vertex_distance(x, i) for i in range(m)], axis=-1)
    return d.min(axis=-1)


def in_neighborhood(x, eps):
    """Index ``j`` of the first vertex neighborhood containing `x`, else None.

    `x` is in the neighborhood of vertex ``j`` when every other coordinate
    is strictly below `eps`. Ties go to the smallest index.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    small = x < eps
    m = x.size
    n_small = int(small.sum())
    if n_small < m - 1:
        return None
    if n_small == m:
        return 0
    return int(np.flatnonzero(~small)[0])


def neighborhood_index(x, eps):
    """Vectorized :func:`in_neighborhood` over the rows of `x`; -1 means none."""
    x = np.asarray(x, dtype=np.float64)
    small = x < eps
    m = x.shape[-1]
    n_small = small.sum(axis=-1)
    # first non-small coordinate; all-small rows pick index 0
    j = np.argmin(small, axis=-1)
    return np.where(n_small >= m - 1, j, -1)


def lattice_points(m, level):
    """Vertices of the `level`-fold barycentric refinement of the simplex.

    These are all points ``k / level`` with nonnegative integer ``k``
    summing to `level`, in lexicographically decreasing order of ``k``.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for k in range(remaining, -1, -1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], level, m)
    return np.array(out, dtype=np.float64) / level
