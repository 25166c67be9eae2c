"""Spectral analysis of the compressible 4x4 block.

For the curl-free unknowns ``(n+, phi+, n-, phi-)`` each Fourier mode of
magnitude ``r = |xi|`` evolves by ``d/dt U = A1(r) U`` with

    A1(r) = [[0,       -b1 r,      0,     0      ],
             [b1 r,    -nu+ r^2,   b2 r,  0      ],
             [0,        0,         0,    -b4 r   ],
             [b3 r,     0,         b4 r, -nu- r^2]]

and ``nu+- = nu1+- + nu2+-``. The semigroup is assembled from eigenvalues
and Frobenius-covariant projectors, with a scaling-and-squaring matrix
exponential as fallback wherever the eigenvalues are too close to
separate reliably.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import expm

DEFAULT_GAP_THRESHOLD = 1e-8
# projectors larger than this lose too many digits to cancellation
DEFAULT_PROJECTOR_LIMIT = 1e3


class SpectralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TaylorConstants:
    kappa1: float
    kappa2: float
    nu_bar1: float
    nu_bar2: float
    omega_slow: float
    omega_fast: float


def taylor_constants(eq):
    b1, b2, b3, b4 = eq.beta1, eq.beta2, eq.beta3, eq.beta4
    nup, num = eq.nu_plus, eq.nu_minus
    kappa1 = math.sqrt((b1 ** 2 - b4 ** 2) ** 2 / 4 + b1 * b2 * b3 * b4)
    kappa2 = (b1 ** 2 + b4 ** 2) / 2
    if not kappa2 > kappa1:
        raise SpectralError(f"kappa2={kappa2} <= kappa1={kappa1}; beta1*beta4 - beta2*beta3 must be positive")
    if not kappa1 > 0:
        raise SpectralError("kappa1 must be positive")
    corr = (nup * (b1 ** 2 - b4 ** 2) + num * (b4 ** 2 - b1 ** 2)) / (8 * kappa1)
    nu_bar1 = (nup + num) / 4 - corr
    nu_bar2 = (nup + num) / 4 + corr
    if not (nu_bar1 > 0 and nu_bar2 > 0):
        raise SpectralError(f"non-positive effective diffusion: {nu_bar1}, {nu_bar2}")
    return TaylorConstants(kappa1=kappa1, kappa2=kappa2, nu_bar1=nu_bar1, nu_bar2=nu_bar2,
                           omega_slow=math.sqrt(kappa2 - kappa1),
                           omega_fast=math.sqrt(kappa2 + kappa1))


def mode_matrix(eq, r):
    """A1(r); ``r`` may be a scalar or an array (stacked along leading axes)."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("wavenumber magnitude must be non-negative")
    A = np.zeros(r.shape + (4, 4))
    r2 = r * r
    A[..., 0, 1] = -eq.beta1 * r
    A[..., 1, 0] = eq.beta1 * r
    A[..., 1, 1] = -eq.nu_plus * r2
    A[..., 1, 2] = eq.beta2 * r
    A[..., 2, 3] = -eq.beta4 * r
    A[..., 3, 0] = eq.beta3 * r
    A[..., 3, 2] = eq.beta4 * r
    A[..., 3, 3] = -eq.nu_minus * r2
    return A


def char_poly_coefficients(eq, r):
    """Coefficients (c3, c2, c1, c0) of det(lambda I - A1) = l^4 + c3 l^3 + ..."""
    b1, b2, b3, b4 = eq.beta1, eq.beta2, eq.beta3, eq.beta4
    nup, num = eq.nu_plus, eq.nu_minus
    r2 = r * r
    r4 = r2 * r2
    return ((nup + num) * r2,
            (b1 ** 2 + b4 ** 2) * r2 + nup * num * r4,
            (nup * b4 ** 2 + num * b1 ** 2) * r4,
            (b1 ** 2 * b4 ** 2 - b1 * b2 * b3 * b4) * r4)


def _sort_roots(lam):
    # deterministic order: by imaginary part, then real part
    order = np.lexsort((lam.real, lam.imag), axis=-1)
    return np.take_along_axis(lam, order, axis=-1)


def exact_eigenvalues(A):
    """Eigenvalues of a mode matrix (or a stack), ordered by (Im, Re)."""
    A = np.asarray(A)
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigenvalue routine failed: {exc}") from exc
    return _sort_roots(lam.astype(complex))


def taylor_eigenvalues(eq, r, tc=None):
    """Small-|xi| expansion: -nu_bar r^2 +- i omega r for both branches."""
    tc = tc or taylor_constants(eq)
    r = np.asarray(r, dtype=float)
    r2 = r * r
    lam = np.stack([
        -tc.nu_bar1 * r2 + 1j * tc.omega_slow * r,
        -tc.nu_bar1 * r2 - 1j * tc.omega_slow * r,
        -tc.nu_bar2 * r2 + 1j * tc.omega_fast * r,
        -tc.nu_bar2 * r2 - 1j * tc.omega_fast * r,
    ], axis=-1)
    return _sort_roots(lam)


def _min_gap(lam):
    d = np.abs(lam[..., :, None] - lam[..., None, :])
    d = d + np.where(np.eye(4, dtype=bool), np.inf, 0.0)
    return d.min(axis=(-1, -2))


def _frobenius_projectors(A, lam):
    """P_i = prod_{j != i} (A - l_j I) / (l_i - l_j), stacked as (..., 4, 4, 4)."""
    I = np.eye(4)
    A = A.astype(complex)
    P = np.empty(A.shape[:-2] + (4, 4, 4), dtype=complex)
    for i in range(4):
        M = np.broadcast_to(I, A.shape).astype(complex)
        for j in range(4):
            if j == i:
                continue
            lj = lam[..., j, None, None]
            M = M @ ((A - lj * I) / (lam[..., i, None, None] - lj))
        P[..., i, :, :] = M
    return P


@dataclass(frozen=True)
class SpectralMode:
    r: float
    matrix: np.ndarray
    eigenvalues: np.ndarray
    projectors: object  # (4, 4, 4) complex array, or None when degenerate
    degenerate: bool


def spectral_mode(eq, r, gap_threshold=DEFAULT_GAP_THRESHOLD,
                  projector_limit=DEFAULT_PROJECTOR_LIMIT):
    A = mode_matrix(eq, float(r))
    lam = exact_eigenvalues(A)
    degenerate = bool(_min_gap(lam) <= gap_threshold * (1 + r * r))
    P = None
    if not degenerate:
        P = _frobenius_projectors(A, lam)
        # ill-conditioned eigenbasis near a collision: keep the fallback
        if np.abs(P).max() > projector_limit:
            degenerate, P = True, None
    return SpectralMode(r=float(r), matrix=A, eigenvalues=lam, projectors=P,
                        degenerate=degenerate)


def projectors(mode):
    """Spectral projectors of a mode, or None when flagged degenerate."""
    return mode.projectors


def semigroup_matrix(mode, t):
    if t < 0:
        raise ValueError("t must be non-negative")
    if mode.degenerate:
        return expm(t * mode.matrix)
    return np.einsum("i,iab->ab", np.exp(mode.eigenvalues * t), mode.projectors)


def semigroup_apply(mode, t, v):
    """exp(t A1) v for one mode."""
    return semigroup_matrix(mode, t) @ np.asarray(v, dtype=complex)


def expm_oracle(mode, t, v):
    """Reference value by Pade scaling-and-squaring."""
    return expm(t * mode.matrix) @ np.asarray(v, dtype=complex)


# --------------------------------------------------------------------------
# batched evaluation over many wavenumbers
# --------------------------------------------------------------------------

@dataclass
class ModeBatch:
    r: np.ndarray
    matrices: np.ndarray
    eigenvalues: np.ndarray  # (n, 4)
    projectors: np.ndarray  # (n, 4, 4, 4); zeros where degenerate
    degenerate: np.ndarray  # (n,) bool

    def propagators(self, t):
        """exp(t A1(r)) for every r, shape (n, 4, 4) complex."""
        E = np.exp(self.eigenvalues * t)
        G = np.einsum("ni,niab->nab", E, self.projectors)
        for k in np.flatnonzero(self.degenerate):
            G[k] = expm(t * self.matrices[k])
        return G

    def apply(self, times, v):
        """exp(t A1(r)) v(r) for all r and times; v has shape (n, 4).

        Returns an array of shape (n, len(times), 4).
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        w = np.einsum("niab,nb->nia", self.projectors, v)
        E = np.exp(self.eigenvalues[:, None, :] * times[None, :, None])
        out = np.einsum("nti,nia->nta", E, w)
        for k in np.flatnonzero(self.degenerate):
            for it, t in enumerate(times):
                out[k, it] = expm(t * self.matrices[k]) @ v[k]
        return out


def mode_batch(eq, r, gap_threshold=DEFAULT_GAP_THRESHOLD,
               projector_limit=DEFAULT_PROJECTOR_LIMIT):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    A = mode_matrix(eq, r)
    lam = exact_eigenvalues(A)
    degenerate = _min_gap(lam) <= gap_threshold * (1 + r * r)
    P = np.zeros(r.shape + (4, 4, 4), dtype=complex)
    ok = ~degenerate
    if ok.any():
        P[ok] = _frobenius_projectors(A[ok], lam[ok])
        bad = np.abs(P).max(axis=(-1, -2, -3)) > projector_limit
        degenerate = degenerate | bad
        P[bad] = 0.0
    return ModeBatch(r=r, matrices=A, eigenvalues=lam, projectors=P, degenerate=degenerate)
