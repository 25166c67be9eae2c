"""Hot numeric kernels, each with a numba path and a pure-numpy twin.

Two loops dominate runtime:

* the pointwise implicit solve for the liquid density on every grid point
  (one safeguarded Newton iteration per point, called at every RK stage);
* the per-mode application of the linear propagator (Hodge split, 4x4
  compressible block, heat factors on the solenoidal part).

``rho_plus_batch`` and ``apply_propagator`` dispatch on ``_accel.USE_NUMBA``.
The ``*_numpy`` functions are always importable so the two paths can be
compared directly (see ``benchmarks/bench_kernels.py``).
"""
import numpy as np

from . import _accel
from ._accel import njit

# status codes returned by the density solve
CONVERGED = 0
NOT_CONVERGED = 1
BAD_INPUT = 2


@njit
def _pow(x, g):
    # integer adiabatic exponents are the common case and pow() dominates the solve
    if g == 2.0:
        return x * x
    if g == 1.0:
        return x
    return x ** g


@njit
def _phi(rho, rp, rm, gp, gm, fs):
    """Residual of the pressure closure and its derivative in rho."""
    gap = rho - rp
    rho_m = rm * rho / gap
    pp = _pow(rho, gp)
    pm = _pow(rho_m, gm)
    phi = pp - pm - fs * (rm - 1.0)
    s2p = gp * pp / rho
    s2m = gm * pm / rho_m
    dphi = s2p + s2m * rm * rp / (gap * gap)
    return phi, dphi, pp


@njit
def rho_plus_scalar(rp, rm, gp, gm, fs, guess, rtol, maxit):
    """Safeguarded Newton for the liquid density.

    Returns ``(rho, lo, hi, status)``. The bracket ``(lo, hi)`` always
    contains the root; ``lo = rp`` stands for the pole where the residual
    tends to minus infinity.
    """
    if not (rp > 0.0 and rm > 0.0):
        return np.nan, np.nan, np.nan, BAD_INPUT
    lo = rp
    x = guess if guess > rp else rp + rm
    # a warm start that is already a root needs a single residual
    f, d, pp = _phi(x, rp, rm, gp, gm, fs)
    if abs(f) <= rtol * abs(x) * d:
        return x - f / d, x, x, CONVERGED
    # grow the upper end until the residual changes sign
    hi = x
    for _ in range(200):
        f, d, pp = _phi(hi, rp, rm, gp, gm, fs)
        if f == 0.0:
            return hi, hi, hi, CONVERGED
        if f > 0.0:
            break
        lo = hi
        hi = rp + 2.0 * (hi - rp)
    # the guess may coincide with the lower end when it had a negative residual
    if not (lo <= x < hi):
        x = 0.5 * (lo + hi)
    for _ in range(maxit):
        f, d, pp = _phi(x, rp, rm, gp, gm, fs)
        if f == 0.0:
            return x, x, x, CONVERGED
        if f > 0.0:
            hi = x
        else:
            lo = x
        xn = x - f / d
        # a Newton step below the tolerance means converged, even at a bracket end
        if abs(xn - x) <= rtol * abs(x):
            return xn, lo, hi, CONVERGED
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= rtol * abs(xn) or (hi - lo) <= rtol * hi:
            return xn, lo, hi, CONVERGED
        x = xn
    return x, lo, hi, NOT_CONVERGED


@njit
def _rho_plus_batch_numba(rp, rm, gp, gm, fs, guess, rtol, maxit, out, status):
    for i in range(rp.size):
        r, lo, hi, st = rho_plus_scalar(rp[i], rm[i], gp, gm, fs, guess[i], rtol, maxit)
        out[i] = r
        status[i] = st


def rho_plus_batch_numpy(rp, rm, gp, gm, fs, guess, rtol=1e-13, maxit=100):
    """Vectorized twin of ``rho_plus_scalar`` over flat arrays."""
    rp = np.asarray(rp, dtype=float)
    rm = np.asarray(rm, dtype=float)
    status = np.zeros(rp.shape, dtype=np.int64)
    bad = ~((rp > 0) & (rm > 0))
    status[bad] = BAD_INPUT
    rp_s = np.where(bad, 1.0, rp)
    rm_s = np.where(bad, 1.0, rm)

    def phi(rho):
        gap = rho - rp_s
        rho_m = rm_s * rho / gap
        pp = rho ** gp
        pm = rho_m ** gm
        f = pp - pm - fs * (rm_s - 1.0)
        d = gp * pp / rho + gm * pm / rho_m * rm_s * rp_s / (gap * gap)
        return f, d

    lo = rp_s.copy()
    x = np.where(guess > rp_s, guess, rp_s + rm_s)
    hi = x.copy()
    need = np.ones(rp_s.shape, dtype=bool)
    exact = np.zeros(rp_s.shape, dtype=bool)
    for _ in range(200):
        f, _d = phi(hi)
        exact |= need & (f == 0)
        need &= ~(f >= 0)
        if not need.any():
            break
        lo = np.where(need, hi, lo)
        hi = np.where(need, rp_s + 2.0 * (hi - rp_s), hi)
    inside = (lo <= x) & (x < hi) & (x > rp_s)
    x = np.where(exact, hi, np.where(inside, x, 0.5 * (lo + hi)))
    active = ~bad & ~exact
    out = x.copy()
    for _ in range(maxit):
        if not active.any():
            break
        f, d = phi(x)
        hi = np.where(active & (f > 0), x, hi)
        lo = np.where(active & (f < 0), x, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / d
        small = np.abs(xn - x) <= rtol * np.abs(x)
        xn = np.where(small | ((lo < xn) & (xn < hi)), xn, 0.5 * (lo + hi))
        xn = np.where(f == 0, x, xn)
        done = active & (small | (np.abs(xn - x) <= rtol * np.abs(xn)) | (hi - lo <= rtol * hi) | (f == 0))
        out = np.where(active, xn, out)
        active &= ~done
        x = np.where(active, xn, x)
    status[active] = NOT_CONVERGED
    out[bad] = np.nan
    return out, status


def rho_plus_batch(rp, rm, gp, gm, fs, guess=None, rtol=1e-13, maxit=100):
    """Solve the closure at every entry of ``rp``/``rm`` (any shape)."""
    rp = np.ascontiguousarray(rp, dtype=float)
    rm = np.ascontiguousarray(rm, dtype=float)
    shape = rp.shape
    if guess is None:
        guess = np.zeros(shape)
    guess = np.ascontiguousarray(np.broadcast_to(guess, shape), dtype=float)
    if _accel.USE_NUMBA:
        out = np.empty(rp.size)
        status = np.empty(rp.size, dtype=np.int64)
        _rho_plus_batch_numba(rp.ravel(), rm.ravel(), float(gp), float(gm), float(fs),
                              guess.ravel(), float(rtol), int(maxit), out, status)
    else:
        out, status = rho_plus_batch_numpy(rp.ravel(), rm.ravel(), float(gp), float(gm),
                                           float(fs), guess.ravel(), rtol, maxit)
    return out.reshape(shape), status.reshape(shape)


# --------------------------------------------------------------------------
# linear propagator on the half (rfft) spectrum
# --------------------------------------------------------------------------

@njit
def _apply_propagator_numba(kx, ky, kz, shell, G, heat_p, heat_m, n_p, n_m, u_p, u_m):
    nx, ny, nz = n_p.shape
    for i in range(nx):
        for j in range(ny):
            for l in range(nz):
                s = shell[i, j, l]
                a = kx[i]
                b = ky[j]
                c = kz[l]
                k2 = a * a + b * b + c * c
                if k2 == 0.0:
                    continue
                r = np.sqrt(k2)
                up0 = u_p[0, i, j, l]
                up1 = u_p[1, i, j, l]
                up2 = u_p[2, i, j, l]
                um0 = u_m[0, i, j, l]
                um1 = u_m[1, i, j, l]
                um2 = u_m[2, i, j, l]
                # compressible potentials: i k.u / |k|
                php = 1j * (a * up0 + b * up1 + c * up2) / r
                phm = 1j * (a * um0 + b * um1 + c * um2) / r
                # solenoidal remainders
                fp = -1j * php / r
                fm = -1j * phm / r
                wp0 = up0 - fp * a
                wp1 = up1 - fp * b
                wp2 = up2 - fp * c
                wm0 = um0 - fm * a
                wm1 = um1 - fm * b
                wm2 = um2 - fm * c
                v0 = n_p[i, j, l]
                v2 = n_m[i, j, l]
                g = G[s]
                y0 = g[0, 0] * v0 + g[0, 1] * php + g[0, 2] * v2 + g[0, 3] * phm
                y1 = g[1, 0] * v0 + g[1, 1] * php + g[1, 2] * v2 + g[1, 3] * phm
                y2 = g[2, 0] * v0 + g[2, 1] * php + g[2, 2] * v2 + g[2, 3] * phm
                y3 = g[3, 0] * v0 + g[3, 1] * php + g[3, 2] * v2 + g[3, 3] * phm
                hp = heat_p[s]
                hm = heat_m[s]
                n_p[i, j, l] = y0
                n_m[i, j, l] = y2
                qp = -1j * y1 / r
                qm = -1j * y3 / r
                u_p[0, i, j, l] = qp * a + hp * wp0
                u_p[1, i, j, l] = qp * b + hp * wp1
                u_p[2, i, j, l] = qp * c + hp * wp2
                u_m[0, i, j, l] = qm * a + hm * wm0
                u_m[1, i, j, l] = qm * b + hm * wm1
                u_m[2, i, j, l] = qm * c + hm * wm2


def apply_propagator_numpy(kx, ky, kz, shell, G, heat_p, heat_m, n_p, n_m, u_p, u_m):
    """Vectorized twin of the numba propagator; works slab by slab in x."""
    KY = ky[:, None]
    KZ = kz[None, :]
    for i in range(n_p.shape[0]):
        a = kx[i]
        k2 = a * a + KY * KY + KZ * KZ
        zero = k2 == 0.0
        r = np.sqrt(np.where(zero, 1.0, k2))
        kv = (np.full_like(k2, a), np.broadcast_to(KY, k2.shape), np.broadcast_to(KZ, k2.shape))
        up = u_p[:, i]
        um = u_m[:, i]
        php = 1j * (kv[0] * up[0] + kv[1] * up[1] + kv[2] * up[2]) / r
        phm = 1j * (kv[0] * um[0] + kv[1] * um[1] + kv[2] * um[2]) / r
        fp = -1j * php / r
        fm = -1j * phm / r
        wp = [up[c] - fp * kv[c] for c in range(3)]
        wm = [um[c] - fm * kv[c] for c in range(3)]
        g = G[shell[i]]
        vec = np.stack([n_p[i], php, n_m[i], phm], axis=-1)
        y = np.einsum("...ab,...b->...a", g, vec)
        hp = heat_p[shell[i]]
        hm = heat_m[shell[i]]
        qp = -1j * y[..., 1] / r
        qm = -1j * y[..., 3] / r
        n_p[i] = np.where(zero, n_p[i], y[..., 0])
        n_m[i] = np.where(zero, n_m[i], y[..., 2])
        for c in range(3):
            u_p[c, i] = np.where(zero, up[c], qp * kv[c] + hp * wp[c])
            u_m[c, i] = np.where(zero, um[c], qm * kv[c] + hm * wm[c])


def apply_propagator(kx, ky, kz, shell, G, heat_p, heat_m, n_p, n_m, u_p, u_m):
    """Apply per-shell propagators in place to the half-spectrum state."""
    if _accel.USE_NUMBA:
        _apply_propagator_numba(kx, ky, kz, shell, G, heat_p, heat_m, n_p, n_m, u_p, u_m)
    else:
        apply_propagator_numpy(kx, ky, kz, shell, G, heat_p, heat_m, n_p, n_m, u_p, u_m)


# --------------------------------------------------------------------------
# pointwise nonlinear terms
# --------------------------------------------------------------------------

# order of the constants packed for ``_nonlinear_pointwise_numba``
POINTWISE_CONSTANTS = ("gamma_plus", "gamma_minus", "f_slope", "rho_plus_eq", "rho_minus_eq",
                       "C2", "alpha_plus_eq", "alpha_minus_eq", "s2_plus", "s2_minus",
                       "mu_plus", "lambda_plus", "mu_minus", "lambda_minus")


@njit
def _momentum_point(g, gbar, h, k, l, mu, lam, own, other, u0, du0, v0, phys, q, out, o):
    """One momentum term at point ``q``; channel offsets as in ``nonlinear.RHS``."""
    div = phys[du0, q] + phys[du0 + 4, q] + phys[du0 + 8, q]
    for i in range(3):
        adv = 0.0
        sp = 0.0
        sm = 0.0
        for j in range(3):
            dij = phys[du0 + 3 * i + j, q]
            adv += phys[u0 + j, q] * dij
            s = dij + phys[du0 + 3 * j + i, q]
            sp += phys[2 + j, q] * s
            sm += phys[5 + j, q] * s
        out[o + i, q] = (-g * phys[own + i, q] - gbar * phys[other + i, q] - adv
                         + mu * h * sp + mu * k * sm
                         + lam * div * (h * phys[2 + i, q] + k * phys[5 + i, q])
                         + l * phys[v0 + i, q])


@njit
def _nonlinear_pointwise_numba(phys, warm, c, rtol, maxit, out, rho_out, status):
    """Density solve, coefficients and momentum terms at every grid point.

    ``phys`` holds 38 physical channels (see ``nonlinear.RHS``); ``out``
    receives the two mass fluxes followed by the two momentum terms.
    """
    gp, gm, fp = c[0], c[1], c[2]
    rp0, rm0, C20, ap0, am0, s2p0, s2m0 = c[3], c[4], c[5], c[6], c[7], c[8], c[9]
    mup, lamp, mum, lamm = c[10], c[11], c[12], c[13]
    for q in range(phys.shape[1]):
        Rp = phys[0, q] + 1.0
        Rm = phys[1, q] + 1.0
        rho, lo, hi, st = rho_plus_scalar(Rp, Rm, gp, gm, fp, warm[q], rtol, maxit)
        rho_out[q] = rho
        status[q] = st
        if st != CONVERGED:
            continue
        # phase state
        rm = Rm * rho / (rho - Rp)
        ap = Rp / rho
        am = 1.0 - ap
        s2p = gp * _pow(rho, gp - 1.0)
        s2m = gm * _pow(rm, gm - 1.0)
        C2 = s2m * s2p / (am * rho * s2p + ap * rm * s2m)
        # coefficient functions, same formulas as closure._coefficients
        g_p = C2 * rm / rho - C20 * rm0 / rp0
        g_m = (C2 * rho / rm - C20 * rp0 / rm0
               - fp * C2 * ap / s2p + fp * C20 * ap0 / s2p0)
        gb_p = C2 - C20 + fp * C2 * am / s2m - fp * C20 * am0 / s2m0
        gb_m = C2 - C20
        h_p = C2 * am / (Rp * s2m)
        h_m = -C2 / (rm * s2m)
        k_p = -(C2 / (Rp * s2p * rho) + fp * C2 / (rho * rm * s2p * s2m))
        k_m = -ap * C2 / (Rm * s2p) + fp * ap * C2 / (rm * s2p * s2m)
        l_p = 1.0 / rho - 1.0 / rp0
        l_m = 1.0 / rm - 1.0 / rm0
        _momentum_point(g_p, gb_p, h_p, k_p, l_p, mup, lamp, 2, 5, 8, 14, 32, phys, q, out, 6)
        _momentum_point(g_m, gb_m, h_m, k_m, l_m, mum, lamm, 5, 2, 11, 23, 35, phys, q, out, 9)
        for j in range(3):
            out[j, q] = phys[0, q] * phys[8 + j, q]
            out[3 + j, q] = phys[1, q] * phys[11 + j, q]
