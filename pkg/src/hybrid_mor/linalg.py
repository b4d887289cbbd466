"""Dense linear-algebra kernels.

Everything here operates on small dense real matrices (n of order 10) held
as plain :class:`numpy.ndarray` objects.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionError, SingularityError

__all__ = [
    "as_matrix",
    "as_vector",
    "expm",
    "solve_sylvester",
    "spectral_radius",
    "sylvester_flow",
    "flow_integral",
    "observability_rank",
    "reachability_rank",
]

SPECTRUM_TOL = 1e-8
RESIDUAL_TOL = 1e-10
MAX_STEP_GROWTH = 2.0  # bound on (|P| + |Q|) |h| per closed-form substep


def as_matrix(a, name="matrix", shape=None):
    """Coerce ``a`` to a finite 2-D float array.

    Scalars become 1x1 matrices and 1-D input a single row, which is how
    scalar generator/filter data such as ``S = 2`` is usually written.
    """
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(1, -1)
    elif m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got {m.ndim} dimensions")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    if shape is not None:
        rows, cols = shape
        if (rows is not None and m.shape[0] != rows) or (
            cols is not None and m.shape[1] != cols
        ):
            raise DimensionError(f"{name} has shape {m.shape}, expected {shape}")
    return m


def as_vector(v, name="vector", size=None):
    x = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    if size is not None and x.size != size:
        raise DimensionError(f"{name} has length {x.size}, expected {size}")
    return x


def _require_square(a, name):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")


def expm(a, t=1.0):
    """Return ``exp(a * t)``.

    Scaling and squaring with a degree-13 Pade approximant (scipy's
    Al-Mohy/Higham implementation). ``t == 0`` returns the identity exactly.
    """
    a = np.asarray(a, dtype=float)
    _require_square(a, "A")
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if t == 0:
        return np.eye(a.shape[0])
    return scipy.linalg.expm(a * t)


def solve_sylvester(L, R, M, tol=SPECTRUM_TOL):
    """Solve ``X @ R - L @ X = M`` for ``X``.

    The equation is vectorised with Kronecker products and solved by a dense
    LU factorisation, which is adequate for the problem sizes handled here.

    Raises
    ------
    SingularityError
        If ``L`` and ``R`` share an eigenvalue, up to
        ``tol * (1 + ||L|| + ||R||)``.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _require_square(L, "L")
    _require_square(R, "R")
    a, b = L.shape[0], R.shape[0]
    if M.shape != (a, b):
        raise DimensionError(f"M has shape {M.shape}, expected {(a, b)}")

    eig_l = np.linalg.eigvals(L)
    eig_r = np.linalg.eigvals(R)
    gaps = np.abs(eig_l[:, None] - eig_r[None, :])
    k = np.unravel_index(np.argmin(gaps), gaps.shape)
    threshold = tol * (1.0 + np.linalg.norm(L, 2) + np.linalg.norm(R, 2))
    if gaps[k] < threshold:
        raise SingularityError(
            f"spectra of L and R overlap near eigenvalue {eig_l[k[0]]:.6g} "
            f"(distance {gaps[k]:.3g} < {threshold:.3g})"
        )

    # column-major vec: vec(X R) = (R^T kron I) vec X, vec(L X) = (I kron L) vec X
    K = np.kron(R.T, np.eye(a)) - np.kron(np.eye(b), L)
    x = np.linalg.solve(K, M.reshape(-1, order="F"))
    return x.reshape((a, b), order="F")


def spectral_radius(a):
    """Largest eigenvalue modulus of a square matrix."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    _require_square(a, "A")
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def _block_expm(P, K, Q, tau):
    p, q = P.shape[0], Q.shape[0]
    big = np.zeros((p + q, p + q))
    big[:p, :p] = P
    big[:p, p:] = K
    big[p:, p:] = Q
    E = expm(big, tau)
    return E[:p, :p], E[:p, p:], E[p:, p:]


def flow_integral(P, K, Q, tau):
    """Return ``(exp(P tau), int_0^tau exp(P (tau - s)) K exp(Q s) ds)``.

    Both come out of one exponential of the block upper-triangular matrix
    ``[[P, K], [0, Q]]``, so the integral carries no quadrature error.
    """
    E11, E12, _ = _block_expm(P, K, Q, tau)
    return E11, E12


def sylvester_flow(P, Q, K, X0, tau):
    """Solve ``dX/dt = P X - X Q + K`` from ``X(0) = X0`` up to ``t = tau``.

    Closed form ``(exp(P tau) X0 + int_0^tau exp(P (tau - s)) K exp(Q s) ds)
    exp(-Q tau)``. ``tau`` may be negative (backward propagation).

    Long spans are split into equal substeps: over one big step the integral
    term can grow like ``exp(|Q tau|)`` before being cancelled by
    ``exp(-Q tau)``, which destroys every significant digit.
    """
    X = np.asarray(X0, dtype=float)
    span = abs(tau) * (np.linalg.norm(P, 1) + np.linalg.norm(Q, 1))
    steps = max(1, int(np.ceil(span / MAX_STEP_GROWTH)))
    h = tau / steps
    E11, E12, _ = _block_expm(P, K, Q, h)
    back = expm(Q, -h)
    for _ in range(steps):
        X = (E11 @ X + E12) @ back
    return X


def observability_rank(A, C):
    """Rank of the observability matrix of the pair ``(A, C)``."""
    A = np.atleast_2d(A)
    C = np.atleast_2d(C)
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks)))


def reachability_rank(A, B):
    """Rank of the reachability matrix of the pair ``(A, B)``."""
    return observability_rank(np.atleast_2d(A).T, np.atleast_2d(B).T)
