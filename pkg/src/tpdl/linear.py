"""Exact linear evolution and decay norms.

Two backends compute the same quantities:

* ``grid``: the periodic box. Each lattice mode is Hodge split; the
  compressible block is propagated by the spectral semigroup of its |k|
  shell and the solenoidal remainder by the heat factor ``exp(-nu1 r^2 t)``.
* ``radial``: whole space, for radially symmetric data. Norms reduce to
  one-dimensional integrals ``4 pi int r^(2l+2) |U(r, t)|^2 dr`` which are
  evaluated by adaptive Gauss-Kronrod quadrature.

Both work on the scaled variables.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import trapezoid

from . import kernels
from .fields import FIELD_GROUPS, FieldState, sobolev_norms, lp_norm, transform_inverse
from .quadrature import gk_integrate
from .spectral import mode_batch


class LinearPropagator:
    """Per-shell propagators of the linearized system on a grid."""

    def __init__(self, eq, grid):
        self.eq = eq
        self.grid = grid
        self.shell_index, self.shell_r = grid.shells()
        self.batch = mode_batch(eq, self.shell_r)
        self._k = (np.ascontiguousarray(grid.k_full), np.ascontiguousarray(grid.k_half))

    def factors(self, t):
        """``(G, heat_plus, heat_minus)`` per shell for elapsed time ``t``."""
        r2 = self.shell_r ** 2
        G = np.ascontiguousarray(self.batch.propagators(t))
        hp = np.exp(-self.eq.nu1_plus * r2 * t)
        hm = np.exp(-self.eq.nu1_minus * r2 * t)
        return G, hp, hm

    def apply(self, state, t, out=None):
        """exp(t L) applied to ``state``; in place when ``out is state``."""
        if t < 0:
            raise ValueError("t must be non-negative")
        if out is None:
            out = state.copy()
        elif out is not state:
            for k in FIELD_GROUPS:
                np.copyto(getattr(out, k), getattr(state, k))
        if t == 0:
            out.time = state.time
            return out
        G, hp, hm = self.factors(t)
        kf, kh = self._k
        kernels.apply_propagator(kf, kf, kh, self.shell_index, G, hp, hm,
                                 out.n_plus, out.n_minus, out.u_plus, out.u_minus)
        out.time = state.time + t
        return out


def evolve_linear(state0, eq, t, propagator=None):
    """Linear solution at elapsed time ``t`` starting from ``state0``."""
    prop = propagator or LinearPropagator(eq, state0.grid)
    return prop.apply(state0, t)


# --------------------------------------------------------------------------
# radial data
# --------------------------------------------------------------------------

CHANNELS = ("n_plus", "phi_plus", "n_minus", "phi_minus", "heat_plus", "heat_minus")
# generic direction so no lattice axis is special
SOLENOIDAL_AXIS = np.array([1.0, math.sqrt(2.0), math.pi / 3.0]) / math.sqrt(3.0 + math.pi ** 2 / 9.0)


def _gaussian(amp, width):
    return lambda r: amp * np.exp(-0.5 * (width * r) ** 2)


@dataclass
class RadialProfile:
    """Radially symmetric Fourier data ``U_hat(xi) = v(|xi|)``.

    ``channels`` maps names from ``CHANNELS`` to callables ``r -> values``.
    The first four populate the compressible block. ``heat_plus`` and
    ``heat_minus`` give a solenoidal velocity ``h(|xi|) i (xi x e) / |xi|``
    for a fixed unit vector ``e``; physically this is ``grad psi x e`` with
    ``psi`` radial, so its norms follow from one-dimensional transforms with
    the angular factor ``sin(theta)``.

    ``breakpoints`` lists radii where the profile changes scale, for the
    quadrature. ``r_support`` bounds the Fourier support (numerically) and
    ``x_width`` is the length scale of the physical data; both only steer
    the resolution of the Lp evaluator.
    """
    channels: dict
    breakpoints: tuple = ()
    label: str = "custom"
    r_support: float = 20.0
    x_width: float = 1.0

    def __post_init__(self):
        bad = set(self.channels) - set(CHANNELS)
        if bad:
            raise ValueError(f"unknown channels {sorted(bad)}")

    def samples(self, r):
        """Values at radii ``r`` as an array of shape (len(r), 6)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape + (6,))
        for j, name in enumerate(CHANNELS):
            if name in self.channels:
                out[..., j] = self.channels[name](r)
        return out

    @property
    def curl_free(self):
        return "heat_plus" not in self.channels and "heat_minus" not in self.channels

    @classmethod
    def gaussian(cls, amplitudes, width=1.0):
        """Every listed channel gets ``amp * exp(-(width r)^2 / 2)``."""
        chans = {k: _gaussian(float(a), width) for k, a in amplitudes.items() if a != 0}
        return cls(chans, breakpoints=(), label=f"gaussian(width={width})",
                   r_support=min(20.0, 9.0 / width), x_width=float(width))

    def sample_on_grid(self, grid, dtype=np.complex128):
        """Lattice data whose box norms approximate the whole-space norms.

        A whole-space transform ``v(|xi|)`` corresponds to box coefficients
        ``(2 pi)^{3/2} / L^3 v(|k|)``. The solenoidal part is
        ``h(|k|) i (k x e) / |k|``, which keeps the physical field real.
        """
        state = FieldState.zeros(grid, dtype)
        scale = (2 * np.pi) ** 1.5 / grid.L ** 3
        e = SOLENOIDAL_AXIS
        ky, kz = grid.k_full[:, None], grid.k_half[None, :]
        for i in range(grid.M):
            kx = grid.k_full[i]
            r = np.sqrt(kx * kx + ky * ky + kz * kz)
            v = self.samples(r) * scale
            nz = r > 0
            rs = np.where(nz, r, 1.0)
            state.n_plus[i] = v[..., 0]
            state.n_minus[i] = v[..., 2]
            kv = (np.full_like(r, kx), np.broadcast_to(ky, r.shape), np.broadcast_to(kz, r.shape))
            sol = ((kv[1] * e[2] - kv[2] * e[1]) / rs,
                   (kv[2] * e[0] - kv[0] * e[2]) / rs,
                   (kv[0] * e[1] - kv[1] * e[0]) / rs)
            for c in range(3):
                par_p = np.where(nz, -1j * v[..., 1] * kv[c] / rs, 0.0)
                par_m = np.where(nz, -1j * v[..., 3] * kv[c] / rs, 0.0)
                state.u_plus[c, i] = par_p + 1j * v[..., 4] * sol[c]
                state.u_minus[c, i] = par_m + 1j * v[..., 5] * sol[c]
        _zero_nyquist(state)
        return state


def _zero_nyquist(state):
    M = state.grid.M
    for arr in (state.n_plus, state.n_minus):
        arr[M // 2] = 0
        arr[:, M // 2] = 0
        arr[:, :, -1] = 0
    for arr in (state.u_plus, state.u_minus):
        arr[:, M // 2] = 0
        arr[:, :, M // 2] = 0
        arr[:, :, :, -1] = 0


def _group_densities(eq, profile, r, times):
    """|component|^2 per field group at radii ``r`` and all ``times``.

    Returns shape (len(r), 4, len(times)).
    """
    v = profile.samples(r)
    batch = mode_batch(eq, r)
    y = batch.apply(times, v[:, :4].astype(complex))  # (n, nt, 4)
    a2 = (y.real ** 2 + y.imag ** 2)
    r2 = (r * r)[:, None]
    times = np.asarray(times, dtype=float)[None, :]
    # angular mean of sin^2(theta) is 2/3
    hp = (2.0 / 3.0) * v[:, 4:5] ** 2 * np.exp(-2 * eq.nu1_plus * r2 * times)
    hm = (2.0 / 3.0) * v[:, 5:6] ** 2 * np.exp(-2 * eq.nu1_minus * r2 * times)
    return np.stack([a2[:, :, 0], a2[:, :, 1] + hp, a2[:, :, 2], a2[:, :, 3] + hm], axis=1)


DEFAULT_R_MAX = 20.0


def radial_norm_table(eq, profile, times, ells, r_max=DEFAULT_R_MAX, rtol=1e-8,
                      eta1=0.1, eta0=1.0):
    """Whole-space norms ``||nabla^l g(t)||_{L^2}`` for every field group.

    One adaptive integration covers all (group, l, t) outputs; each output is
    held to relative tolerance ``rtol``. Returns an array of shape
    (4, len(ells), len(times)).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ells = np.atleast_1d(np.asarray(ells, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    if np.any(ells < 0):
        raise ValueError("radial backend supports l >= 0")

    def integrand(r):
        dens = _group_densities(eq, profile, r, times)  # (n, 4, nt)
        w = 4 * np.pi * r[:, None] ** (2 * ells[None, :] + 2)  # (n, nl)
        return dens[:, :, None, :] * w[:, None, :, None]

    bps = [0.0, r_max] + [b for b in (eta1, eta0, *profile.breakpoints) if 0 < b < r_max]
    # decay concentrates mass near r ~ 1/sqrt(t); give the quadrature those scales
    bps += [s for s in 1.0 / np.sqrt(times[times > 0]) if 0 < s < r_max]
    def reference(v):
        # outputs far below the other groups at the same (l, t) only need
        # absolute accuracy relative to that column
        v = np.abs(v)
        return np.maximum(v, 1e-12 * v.max(axis=0, keepdims=True))

    val, _err = gk_integrate(integrand, bps, rtol=rtol, atol=0.0, reference=reference)
    return np.sqrt(np.maximum(val, 0.0))


def radial_decay_norm(eq, profile, t, ell, **kw):
    """``||nabla^l U(t)||_{L^2}`` of the whole state (sum over groups)."""
    tab = radial_norm_table(eq, profile, [t], [ell], **kw)
    return float(tab[:, 0, 0].sum())


def _sph_j0_j1(x):
    """Spherical Bessel j0, j1 with series near zero."""
    small = x < 0.05
    xs = np.where(small, 1.0, x)
    j0 = np.sin(xs) / xs
    j1 = (j0 - np.cos(xs)) / xs
    # series only where needed; the outer products here are large
    if small.any():
        z = x[small]
        z2 = z * z
        j0[small] = 1 - z2 / 6 + z2 * z2 / 120 - z2 ** 3 / 5040
        j1[small] = z / 3 - z * z2 / 30 + z * z2 * z2 / 840 - z * z2 ** 3 / 45360
    return j0, j1


_GL16 = np.polynomial.legendre.leggauss(16)
_GL_MU = np.polynomial.legendre.leggauss(32)


def _gl_nodes(R, n_panels):
    x, w = _GL16
    edges = np.linspace(0.0, R, n_panels + 1)
    h = 0.5 * np.diff(edges)
    c = 0.5 * (edges[1:] + edges[:-1])
    return (c[:, None] + h[:, None] * x[None, :]).ravel(), (h[:, None] * w[None, :]).ravel()


def radial_physical(eq, profile, t, s):
    """Physical radial functions of the evolved data at distances ``s``.

    Returns ``(f_plus, g_plus, q_plus, f_minus, g_minus, q_minus)``: the
    densities ``n(x) = f(|x|)``, the curl-free velocity ``g(|x|) x/|x|`` and
    the solenoidal velocity ``grad psi x e`` with ``|grad psi| = |q|``.
    """
    tc_nu = _nu_range(eq)
    R = float(profile.r_support)
    if t > 0:
        R = min(R, math.sqrt(80.0 / (tc_nu[0] * t)))
    s = np.asarray(s, dtype=float)
    k_top = float(s.max(initial=0.0)) + _omega_fast(eq) * t
    n_panels = max(16, int(math.ceil(R * k_top / 4.0)))
    r, w = _gl_nodes(R, n_panels)
    v = profile.samples(r)
    y = mode_batch(eq, r).apply([t], v[:, :4].astype(complex))[:, 0, :].real
    hp = v[:, 4] * np.exp(-eq.nu1_plus * r * r * t)
    hm = v[:, 5] * np.exp(-eq.nu1_minus * r * r * t)
    cols = np.stack([y[:, 0], y[:, 1], hp, y[:, 2], y[:, 3], hm], axis=1) * (w * r * r)[:, None]
    out = np.zeros((6, s.size))
    pref = math.sqrt(2.0 / math.pi)
    step = max(1, int(2e6 // max(r.size, 1)))
    for a in range(0, s.size, step):
        sl = slice(a, a + step)
        j0, j1 = _sph_j0_j1(np.outer(s[sl], r))
        out[[0, 3], sl] = pref * (j0 @ cols[:, [0, 3]]).T
        out[[1, 2, 4, 5], sl] = pref * (j1 @ cols[:, [1, 2, 4, 5]]).T
    # grad psi = -(q) x/|x| with psi_hat = h / r; only the magnitude is used
    return tuple(out)


def _nu_range(eq):
    from .spectral import taylor_constants
    tc = taylor_constants(eq)
    vals = (tc.nu_bar1, tc.nu_bar2, eq.nu1_plus, eq.nu1_minus)
    return min(vals), max(vals)


def _omega_fast(eq):
    from .spectral import taylor_constants
    return taylor_constants(eq).omega_fast


def _parabolic_peak(vals, ds):
    i = int(np.argmax(vals))
    if 0 < i < vals.size - 1:
        a, b, c = vals[i - 1], vals[i], vals[i + 1]
        den = a - 2 * b + c
        if den < 0:
            return b - 0.25 * (a - c) ** 2 / den
    return vals[i]


def radial_lp_table(eq, profile, times, ps, points_per_width=16):
    """Whole-space ``L^p`` norms per field group, shape (4, len(ps), len(times)).

    The evolved radial data are transformed to physical space by direct
    Gauss-Legendre quadrature of the spherical Bessel integrals on a uniform
    grid of distances. ``p = inf`` uses the sampled maximum refined by a
    parabola through its neighbours.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    nu_lo, nu_hi = _nu_range(eq)
    wf = _omega_fast(eq)
    mu, wmu = _GL_MU
    sin2 = 1.0 - mu * mu
    out = np.zeros((4, len(ps), times.size))
    for it, t in enumerate(times):
        width = math.sqrt(2 * nu_lo * t) + profile.x_width
        s_max = wf * t + 12.0 * (math.sqrt(2 * nu_hi * t) + 3.0 * profile.x_width)
        ds = width / points_per_width
        s = np.arange(0.0, s_max + ds, ds)
        f_p, g_p, q_p, f_m, g_m, q_m = radial_physical(eq, profile, t, s)
        for gi, (kind, a, b) in enumerate((("s", f_p, None), ("v", g_p, q_p),
                                           ("s", f_m, None), ("v", g_m, q_m))):
            for ip, p in enumerate(ps):
                if p == np.inf:
                    mag = np.abs(a) if kind == "s" else np.sqrt(a * a + b * b)
                    out[gi, ip, it] = _parabolic_peak(mag, ds)
                    continue
                if kind == "s":
                    dens = 4 * np.pi * np.abs(a) ** p
                else:
                    ang = (a[:, None] ** 2 + b[:, None] ** 2 * sin2[None, :]) ** (p / 2)
                    dens = 2 * np.pi * ang @ wmu
                out[gi, ip, it] = trapezoid(s * s * dens, s) ** (1.0 / p)
    return out


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------

GROUPS = FIELD_GROUPS + ("total",)


@dataclass
class NormTable:
    """Norm time series; ``values[(group, kind, order)]`` is an array over ``times``.

    ``kind`` is ``"H"`` for ``||nabla^l .||_{L^2}`` (order ``l``) or ``"L"``
    for ``L^p`` norms (order ``p``, ``inf`` allowed).
    """
    times: np.ndarray
    backend: str
    values: dict = field(default_factory=dict)

    def series(self, group, kind, order):
        return self.values[(group, kind, float(order))]

    def keys(self):
        # deterministic order: group, then kind, then order
        gi = {g: i for i, g in enumerate(GROUPS)}
        return sorted(self.values, key=lambda k: (gi.get(k[0], 99), k[1], k[2]))

    def rows(self):
        for key in self.keys():
            g, kind, order = key
            for t, v in zip(self.times, self.values[key]):
                yield (float(t), g, kind, order, float(v))

    def add(self, group, kind, order, series):
        self.values[(group, kind, float(order))] = np.asarray(series, dtype=float)


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if times[0] < 0:
        raise ValueError("times must be non-negative")
    return times


def _grid_norms(state, ells, ps):
    out = {}
    norms = state.sobolev(ells)
    for g in GROUPS:
        for j, ell in enumerate(ells):
            out[(g, "H", float(ell))] = norms[g][j]
    if ps:
        grid = state.grid
        tot = {float(p): 0.0 for p in ps}
        for g in FIELD_GROUPS:
            f = transform_inverse(getattr(state, g), grid)
            for p in ps:
                v = lp_norm(f, grid, p)
                out[(g, "L", float(p))] = v
                tot[float(p)] += v
            del f
        for p, v in tot.items():
            out[("total", "L", p)] = v
    return out


def linear_decay_series(source, eq, times, ells=(0,), ps=(), backend=None, **radial_kw):
    """Decay table of the linear evolution.

    ``source`` is a ``FieldState`` (grid backend) or a ``RadialProfile``
    (radial backend, or grid backend when ``radial_kw`` carries ``grid``).
    On the radial backend ``radial_kw`` may carry ``points_per_width`` for
    the Lp evaluator; the remaining keys go to ``radial_norm_table``.
    """
    times = _check_times(times)
    ells = [float(l) for l in ells]
    if backend is None:
        backend = "grid" if isinstance(source, FieldState) else "radial"
    if backend == "radial":
        if not isinstance(source, RadialProfile):
            raise TypeError("radial backend needs a RadialProfile")
        ppw = radial_kw.pop("points_per_width", 16)
        tab = radial_norm_table(eq, source, times, ells, **radial_kw)
        table = NormTable(times, "linear-radial")
        for gi, g in enumerate(FIELD_GROUPS):
            for li, ell in enumerate(ells):
                table.add(g, "H", ell, tab[gi, li])
        for li, ell in enumerate(ells):
            table.add("total", "H", ell, tab[:, li].sum(axis=0))
        if ps:
            ps = [float(p) for p in ps]
            lp = radial_lp_table(eq, source, times, ps, points_per_width=ppw)
            for pi, p in enumerate(ps):
                for gi, g in enumerate(FIELD_GROUPS):
                    table.add(g, "L", p, lp[gi, pi])
                table.add("total", "L", p, lp[:, pi].sum(axis=0))
        return table
    if backend != "grid":
        raise ValueError(f"unknown backend {backend!r}")
    if isinstance(source, RadialProfile):
        grid = radial_kw.pop("grid")
        state = source.sample_on_grid(grid, radial_kw.pop("dtype", np.complex128))
    else:
        state = source.copy()
    prop = LinearPropagator(eq, state.grid)
    table = NormTable(times, "linear-grid")
    acc = {}
    t_now = 0.0
    for t in times:
        prop.apply(state, t - t_now, out=state)
        t_now = t
        for key, v in _grid_norms(state, ells, ps).items():
            acc.setdefault(key, []).append(v)
    for (g, kind, order), vals in acc.items():
        table.add(g, kind, order, vals)
    return table
