"""
Volterra quadratic stochastic operators.

A Volterra operator on ``m`` types is held as a skew-symmetric matrix ``A``
with entries in ``[-1, 1]`` and acts by

    (V x)_k = x_k * (1 + sum_i a_ki x_i).

The equivalent heredity tensor ``p[i, j, k]`` (probability that parents of
types ``i`` and ``j`` produce type ``k``) is available through
:func:`tensor_from_matrix` and is used only as a test oracle.

Operators are serialized as ``{"m": int, "A": [[...], ...]}``, or addressed
by string: ``"extremal:<bits>"`` (bit ``t`` is the sign of the ``t``-th pair
``i < j`` in lexicographic order, ``1`` for +1) and ``"squaring:<k>"`` with a
1-based coordinate ``k``.
"""
import itertools

import numpy as np

#: Coordinates below this value are flushed to exactly zero after each step.
UNDERFLOW_FLOOR = 1e-300
ENTRY_TOL = 1e-12
TENSOR_TOL = 1e-12
MAX_EXTREMAL_PAIRS = 30


class VolterraError(ValueError):
    """Raised for matrices or tensors that do not define a Volterra operator."""


def volterra_step(A, x):
    """One application of Volterra matrices `A` to points `x`, broadcasting.

    Parameters
    ----------
    A : ndarray, shape (..., m, m)
    x : ndarray, shape (..., m)

    Returns
    -------
    y : ndarray, shape (..., m)
        Image points, renormalized, with coordinates below
        :data:`UNDERFLOW_FLOOR` flushed to zero.
    factor : ndarray, shape (..., m)
        Per-coordinate multipliers ``1 + (A x)_k`` before renormalization.
    total : ndarray, shape (...)
        Renormalization constant, equal to 1 in exact arithmetic.

    Notes
    -----
    Every reduction runs in a fixed, explicit order so a row of a batch
    gives bit-identical output regardless of batch size.
    """
    m = x.shape[-1]
    factor = 1.0 + A[..., :, 0] * x[..., None, 0]
    for j in range(1, m):
        factor = factor + A[..., :, j] * x[..., None, j]
    np.maximum(factor, 0.0, out=factor)
    y = x * factor
    total = y[..., 0].copy()
    for k in range(1, m):
        total = total + y[..., k]
    y = y / total[..., None]
    y[y < UNDERFLOW_FLOOR] = 0.0
    return y, factor, total


def _check_matrix(A):
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise VolterraError(f"matrix must be square, got shape {A.shape}")
    m = A.shape[0]
    if m < 2:
        raise VolterraError("need m >= 2")
    if not np.all(np.isfinite(A)):
        raise VolterraError("matrix entries must be finite")
    if np.any(np.abs(np.diag(A)) > ENTRY_TOL):
        raise VolterraError("diagonal of A must be zero")
    if np.any(np.abs(A + A.T) > ENTRY_TOL):
        raise VolterraError("A must be skew-symmetric")
    if np.any(np.abs(A) > 1.0 + ENTRY_TOL):
        raise VolterraError(f"entries of A must lie in [-1, 1], max |a_ij| = {np.abs(A).max():g}")
    # symmetrize exactly, then clamp
    A = np.clip(0.5 * (A - A.T), -1.0, 1.0)
    np.fill_diagonal(A, 0.0)
    return A


class VolterraOperator:
    """Immutable Volterra operator given by its skew-symmetric matrix.

    Parameters
    ----------
    A : array_like, shape (m, m)
        Skew-symmetric with ``|a_ij| <= 1``. Entries up to ``1e-12`` outside
        the constraints are accepted and snapped back.
    label : str, optional
        Free-form name used in reports.
    """

    __slots__ = ("_A", "label")

    def __init__(self, A, label=None):
        A = _check_matrix(A)
        A.flags.writeable = False
        self._A = A
        self.label = label

    @property
    def A(self):
        return self._A

    @property
    def m(self):
        return self._A.shape[0]

    def __call__(self, x):
        return apply(self, x)

    def __eq__(self, other):
        if not isinstance(other, VolterraOperator):
            return NotImplemented
        return np.array_equal(self._A, other._A)

    def __hash__(self):
        return hash(self._A.tobytes())

    def __repr__(self):
        name = f" {self.label!r}" if self.label else ""
        return f"<VolterraOperator{name} m={self.m}>"

    def squares(self):
        """Coordinates ``k`` with ``(V x)_k = x_k**2`` for every ``x``."""
        off = ~np.eye(self.m, dtype=bool)
        return [k for k in range(self.m) if np.all(self._A[k][off[k]] == -1.0)]

    def to_dict(self):
        return {"m": self.m, "A": self._A.tolist()}

    @classmethod
    def from_dict(cls, d):
        A = np.asarray(d["A"], dtype=np.float64)
        if "m" in d and A.shape != (d["m"], d["m"]):
            raise VolterraError(f"matrix shape {A.shape} does not match m={d['m']}")
        return cls(A, label=d.get("label"))


def apply(V, x):
    """Image ``V x`` of a simplex point, renormalized onto the simplex."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (V.m,):
        raise VolterraError(f"dimension mismatch: operator m={V.m}, point shape {x.shape}")
    y, _, _ = volterra_step(V.A, x)
    return y


def tensor_from_matrix(V):
    """Heredity tensor ``p[i, j, k]`` of a Volterra operator.

    ``p[i, k, k] = (1 + a_ki) / 2`` and ``p[i, k, i] = (1 - a_ki) / 2`` for
    ``i != k``, ``p[i, i, i] = 1``, all other entries zero.
    """
    A = V.A
    m = V.m
    p = np.zeros((m, m, m))
    for i in range(m):
        p[i, i, i] = 1.0
        for k in range(m):
            if i != k:
                p[i, k, k] = (1.0 + A[k, i]) / 2.0
                p[i, k, i] = (1.0 - A[k, i]) / 2.0
    return p


def check_tensor(p, volterra=True):
    """Validate a QSO tensor; raise :class:`VolterraError` on violation."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3 or not (p.shape[0] == p.shape[1] == p.shape[2]):
        raise VolterraError(f"tensor must be cubic, got shape {p.shape}")
    if np.any(p < -TENSOR_TOL):
        raise VolterraError("tensor has negative entries")
    if np.any(np.abs(p - p.transpose(1, 0, 2)) > TENSOR_TOL):
        raise VolterraError("tensor must satisfy p[i,j,k] == p[j,i,k]")
    if np.any(np.abs(p.sum(axis=2) - 1.0) > TENSOR_TOL):
        raise VolterraError("tensor rows p[i,j,:] must sum to 1")
    if volterra:
        m = p.shape[0]
        i, j, k = np.indices((m, m, m))
        outside = (k != i) & (k != j)
        if np.any(np.abs(p[outside]) > TENSOR_TOL):
            raise VolterraError("not a Volterra operator: p[i,j,k] != 0 for some k not in {i, j}")
    return p


def matrix_from_tensor(p):
    """Volterra operator with ``a_ki = 2 p[i, k, k] - 1``."""
    p = check_tensor(p, volterra=True)
    m = p.shape[0]
    A = np.zeros((m, m))
    for i in range(m):
        for k in range(m):
            if i != k:
                A[k, i] = 2.0 * p[i, k, k] - 1.0
    return VolterraOperator(A)


def apply_tensor(p, x):
    """Brute-force quadratic map ``x'_k = sum_ij p[i,j,k] x_i x_j`` (oracle)."""
    x = np.asarray(x, dtype=np.float64)
    return np.einsum("ijk,i,j->k", np.asarray(p), x, x)


def squaring_operator(m, k, block=None):
    """Operator ``V_k`` with ``(V_k x)_k = x_k**2``.

    Row `k` of the matrix is -1 off the diagonal and column `k` is +1. The
    remaining entries are free; they are zero unless `block` is given, in
    which case they are copied from that skew-symmetric matrix.
    """
    if not 0 <= k < m:
        raise IndexError(f"coordinate {k} out of range for m={m}")
    if block is None:
        A = np.zeros((m, m))
    else:
        A = _check_matrix(block).copy()
        if A.shape != (m, m):
            raise VolterraError(f"block shape {A.shape} does not match m={m}")
    A[k, :] = -1.0
    A[:, k] = 1.0
    A[k, k] = 0.0
    return VolterraOperator(A, label=f"squaring:{k + 1}")


def _pairs(m):
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


def extremal_operator(bits):
    """Extremal operator addressed by a bitstring over the pairs ``i < j``."""
    bits = str(bits)
    if not bits or set(bits) - {"0", "1"}:
        raise VolterraError(f"bad extremal bitstring {bits!r}")
    n = len(bits)
    # n = m(m-1)/2
    m = int(round((1 + np.sqrt(1 + 8 * n)) / 2))
    if m * (m - 1) // 2 != n:
        raise VolterraError(f"bitstring length {n} is not m(m-1)/2 for any m")
    A = np.zeros((m, m))
    for b, (i, j) in zip(bits, _pairs(m)):
        A[i, j] = 1.0 if b == "1" else -1.0
        A[j, i] = -A[i, j]
    return VolterraOperator(A, label=f"extremal:{bits}")


def enumerate_extremal(m):
    """All ``2**(m(m-1)/2)`` extremal operators, sign vectors in lex order."""
    if m < 2:
        raise VolterraError("need m >= 2")
    n = m * (m - 1) // 2
    if n > MAX_EXTREMAL_PAIRS:
        raise VolterraError(f"m={m} gives 2**{n} extremal operators; refusing to enumerate")
    return [extremal_operator("".join(b)) for b in itertools.product("01", repeat=n)]


def operator_from_spec(spec, m=None):
    """Build an operator from its JSON form or a string address."""
    if isinstance(spec, VolterraOperator):
        op = spec
    elif isinstance(spec, dict):
        op = VolterraOperator.from_dict(spec)
    elif isinstance(spec, str) and spec.startswith("extremal:"):
        op = extremal_operator(spec.split(":", 1)[1])
    elif isinstance(spec, str) and spec.startswith("squaring:"):
        if m is None:
            raise VolterraError("'squaring:<k>' needs the dimension m")
        k = int(spec.split(":", 1)[1])
        if not 1 <= k <= m:
            raise VolterraError(f"squaring index {k} out of range 1..{m}")
        op = squaring_operator(m, k - 1)
    else:
        raise VolterraError(f"unrecognized operator spec {spec!r}")
    if m is not None and op.m != m:
        raise VolterraError(f"operator has m={op.m}, expected {m}")
    return op


def check_doubling_bound(V, x, tol=1e-12):
    """True iff every coordinate at most doubles: ``(V x)_k <= 2 x_k``.

    `V` may also be a raw matrix; it is then applied without validation so
    the check can be exercised on inputs the constructor would reject.
    """
    A = V.A if isinstance(V, VolterraOperator) else np.asarray(V, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if isinstance(V, VolterraOperator):
        y, _, _ = volterra_step(A, x)
    else:
        y = x * (1.0 + A @ x)
    return bool(np.all(y <= 2.0 * x + tol))
