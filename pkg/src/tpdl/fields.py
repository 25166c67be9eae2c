"""Periodic-box field representation and Fourier-side operators.

Storage is the real-to-complex half spectrum: a scalar field on an
``M**3`` grid is held as an ``(M, M, M//2 + 1)`` complex array of
normalized coefficients ``c = rfftn(f) / M**3``, so that

    f(x) = sum_k c_k exp(i k.x),   k in (2 pi / L) Z^3.

With this convention ``||f||_{L^2(box)}^2 = L^3 sum_k |c_k|^2`` and the
whole-space transform of a profile sampled on the box is approximated by
``f_hat(k) ~ (L / 2 pi)^{3/2} L^{3/2} c_k``.

Nyquist entries of the wavevector components are set to zero: derivatives
of Nyquist modes vanish, which keeps spectral derivatives of real fields
real. Generators keep Nyquist amplitudes at zero anyway.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.fft as sfft


class FieldError(ValueError):
    pass


class DomainError(ValueError):
    pass


def _wavenumbers(M, L, half=False):
    n = np.fft.rfftfreq(M, 1.0 / M) if half else np.fft.fftfreq(M, 1.0 / M)
    n = n.copy()
    if half:
        n[-1] = 0.0
    else:
        n[M // 2] = 0.0
    return n, 2 * np.pi / L * n


@dataclass(eq=False)
class Grid:
    """Cubic periodic box ``[0, L)^3`` sampled with ``M`` points per axis."""
    box_length: float
    points_per_axis: int
    _cache: dict = field(default_factory=dict, repr=False)

    dimension = 3

    def __post_init__(self):
        M = int(self.points_per_axis)
        if M <= 0 or M % 2:
            raise FieldError(f"points_per_axis must be even and positive, got {self.points_per_axis}")
        if not self.box_length > 0:
            raise FieldError("box_length must be positive")
        self.points_per_axis = M
        self.box_length = float(self.box_length)
        self.n_full, self.k_full = _wavenumbers(M, self.box_length)
        self.n_half, self.k_half = _wavenumbers(M, self.box_length, half=True)

    @property
    def M(self):
        return self.points_per_axis

    @property
    def L(self):
        return self.box_length

    @property
    def dk(self):
        return 2 * np.pi / self.box_length

    @property
    def dx(self):
        return self.box_length / self.points_per_axis

    @property
    def spectral_shape(self):
        return (self.M, self.M, self.M // 2 + 1)

    @property
    def physical_shape(self):
        return (self.M, self.M, self.M)

    @property
    def k_nyquist(self):
        """Largest wavenumber magnitude resolved along one axis."""
        return self.dk * (self.M // 2 - 1)

    @property
    def kx(self):
        return self.k_full

    @property
    def ky(self):
        return self.k_full

    @property
    def kz(self):
        return self.k_half

    def kvec(self, i=slice(None)):
        """Broadcastable wavevector components for the x-slabs selected by slice ``i``."""
        return (self.k_full[i][:, None, None], self.k_full[None, :, None],
                self.k_half[None, None, :])

    def k2(self, i=slice(None)):
        kx, ky, kz = self.kvec(i)
        return kx * kx + ky * ky + kz * kz

    def kmag(self, i=slice(None)):
        return np.sqrt(self.k2(i))

    def half_weights(self):
        """Multiplicity of each half-spectrum column in the full spectrum."""
        w = np.full(self.M // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def shells(self):
        """``(shell_index, shell_radius)``: modes grouped by exact |k|.

        The index array has the spectral shape; radii are sorted, with the
        zero mode in shell 0.
        """
        if "shells" not in self._cache:
            # lookup table over integer |n|^2, filled slab by slab to bound memory
            nx = self.n_full.astype(np.int64)
            nz = self.n_half.astype(np.int64)
            plane = nx[:, None] ** 2 + nz[None, :] ** 2
            present = np.zeros(3 * (self.M // 2) ** 2 + 1, dtype=bool)
            for a in nx:
                present[plane + a * a] = True
            levels = np.flatnonzero(present)
            lookup = np.cumsum(present, dtype=np.int64).astype(np.int32) - 1
            idx = np.empty(self.spectral_shape, dtype=np.int32)
            for i, a in enumerate(nx):
                idx[i] = lookup[plane + a * a]
            self._cache["shells"] = (idx, self.dk * np.sqrt(levels.astype(float)))
        return self._cache["shells"]

    def coordinates(self):
        x = np.arange(self.M) * self.dx
        return x

    def mesh(self):
        x = self.coordinates()
        return np.meshgrid(x, x, x, indexing="ij")


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def transform_forward(f, grid):
    """Physical (..., M, M, M) real array -> normalized half-spectrum coefficients."""
    f = np.asarray(f)
    if f.shape[-3:] != grid.physical_shape:
        raise FieldError(f"shape {f.shape} does not match grid {grid.physical_shape}")
    if np.iscomplexobj(f):
        raise FieldError("physical fields must be real")
    return sfft.rfftn(f, axes=(-3, -2, -1), workers=-1) / grid.M ** 3


def transform_inverse(c, grid):
    c = np.asarray(c)
    if c.shape[-3:] != grid.spectral_shape:
        raise FieldError(f"shape {c.shape} does not match spectral shape {grid.spectral_shape}")
    return sfft.irfftn(c * grid.M ** 3, s=grid.physical_shape, axes=(-3, -2, -1), workers=-1)


def derivative(c, grid, axis):
    """Spectral derivative along ``axis`` (0, 1, 2)."""
    k = grid.kvec()[axis]
    return 1j * k * c


def gradient(c, grid):
    kx, ky, kz = grid.kvec()
    return np.stack([1j * kx * c, 1j * ky * c, 1j * kz * c])


def divergence(u, grid):
    kx, ky, kz = grid.kvec()
    return 1j * (kx * u[0] + ky * u[1] + kz * u[2])


def lambda_power(c, s, grid):
    """Multiply coefficients by |k|^s; the zero mode is zeroed for s < 0."""
    if s == 0:
        return np.array(c, copy=True)
    k2 = grid.k2()
    if s < 0:
        with np.errstate(divide="ignore"):
            fac = np.where(k2 > 0, k2, np.inf) ** (0.5 * s)
    else:
        fac = k2 ** (0.5 * s)
    return c * fac


# --------------------------------------------------------------------------
# Hodge split of vector fields
# --------------------------------------------------------------------------

def hodge_decompose(u, grid):
    """``u -> (phi, w)`` with ``phi = i k.u / |k|`` and ``w`` solenoidal.

    The parallel (curl-free) part of ``u`` is ``-i k phi / |k|``. The zero
    mode has no direction and goes entirely to ``w``.
    """
    kx, ky, kz = grid.kvec()
    k2 = kx * kx + ky * ky + kz * kz
    kabs = np.sqrt(k2)
    safe = np.where(k2 > 0, kabs, 1.0)
    phi = np.where(k2 > 0, 1j * (kx * u[0] + ky * u[1] + kz * u[2]) / safe, 0.0)
    w = u - parallel_part(phi, grid)
    return phi, w


def parallel_part(phi, grid):
    """Curl-free velocity ``-i k phi / |k|`` carried by the potential ``phi``."""
    kx, ky, kz = grid.kvec()
    kabs = np.sqrt(kx * kx + ky * ky + kz * kz)
    q = np.where(kabs > 0, -1j * phi / np.where(kabs > 0, kabs, 1.0), 0.0)
    return np.stack([q * kx, q * ky, q * kz])


def hodge_compose(phi, w, grid):
    return parallel_part(phi, grid) + w


# --------------------------------------------------------------------------
# low / high frequency split
# --------------------------------------------------------------------------

def _smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class CutoffProfile:
    """Radial low-pass profile: 1 on ``r <= eta0/2``, 0 on ``r >= eta0``."""
    eta0: float = 1.0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise FieldError("eta0 must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        h = 0.5 * self.eta0
        return 1.0 - _smooth_step((r - h) / h)


def freq_split(c, grid, cutoff=None):
    """``(low, high)`` parts of coefficients ``c`` (scalar or stacked vector)."""
    cutoff = cutoff or CutoffProfile()
    phi = cutoff(grid.kmag())
    low = c * phi
    return low, c - low


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

def _components(c, grid):
    c = np.asarray(c)
    if c.shape == grid.spectral_shape:
        return c[None]
    if c.shape[1:] == grid.spectral_shape:
        return c
    raise FieldError(f"coefficient shape {c.shape} does not match grid")


def shell_energy(c, grid):
    """``L^3 sum |c_k|^2`` accumulated per |k| shell (components summed).

    Returns ``(radii, energy)``; Sobolev norms of any order follow from
    ``sum energy * radii**(2 l)`` without touching the field again.
    """
    idx, radii = grid.shells()
    w = grid.half_weights()
    acc = np.zeros(radii.size)
    for comp in _components(c, grid):
        for i in range(grid.M):
            e = (comp[i].real ** 2 + comp[i].imag ** 2) * w
            acc += np.bincount(idx[i].ravel(), weights=e.ravel(), minlength=radii.size)
    return radii, acc * grid.L ** 3


def sobolev_norms(c, grid, ells):
    """Homogeneous norms ``||Lambda^l f||_{L^2}`` for several orders at once."""
    radii, energy = shell_energy(c, grid)
    out = []
    for ell in ells:
        if ell < -1:
            raise DomainError("only orders l >= -1 are supported")
        if ell < 0:
            if energy[0] > 1e-28 * max(energy.sum(), 1e-300):
                raise DomainError("negative order norm needs a mean-zero field")
            out.append(math.sqrt(np.sum(energy[1:] * radii[1:] ** (2.0 * ell))))
        elif ell == 0:
            out.append(math.sqrt(energy.sum()))
        else:
            out.append(math.sqrt(np.sum(energy * radii ** (2.0 * ell))))
    return np.array(out)


def sobolev_norm(c, grid, ell=0):
    """``||nabla^l f||_{L^2}`` of a scalar or vector field from its coefficients."""
    return float(sobolev_norms(c, grid, [ell])[0])


def hs_norm(c, grid, s=2):
    """Inhomogeneous ``H^s`` norm, ``sum_{j<=s} ||nabla^j f||^2`` under the root."""
    vals = sobolev_norms(c, grid, list(range(int(s) + 1)))
    return float(np.sqrt(np.sum(vals ** 2)))


def lp_norm(f, grid, p=2):
    """``L^p`` norm of a physical field over the box; vectors use the pointwise
    Euclidean length. ``p`` in ``[2, inf]``."""
    f = np.asarray(f)
    if f.shape == grid.physical_shape:
        mag = np.abs(f)
    elif f.shape[1:] == grid.physical_shape:
        mag = np.sqrt(np.sum(f * f, axis=0))
    else:
        raise FieldError(f"physical shape {f.shape} does not match grid")
    if p == np.inf or p == "inf":
        return float(mag.max())
    p = float(p)
    if p < 2:
        raise DomainError("p must lie in [2, inf]")
    scale = mag.max()
    if scale == 0:
        return 0.0
    return float(scale * (np.sum((mag / scale) ** p) * grid.dx ** 3) ** (1.0 / p))


# --------------------------------------------------------------------------
# state
# --------------------------------------------------------------------------

FIELD_GROUPS = ("n_plus", "u_plus", "n_minus", "u_minus")


@dataclass(eq=False)
class FieldState:
    """Half-spectrum coefficients of ``(n+, u+, n-, u-)`` in scaled variables."""
    n_plus: np.ndarray
    u_plus: np.ndarray
    n_minus: np.ndarray
    u_minus: np.ndarray
    grid: Grid
    time: float = 0.0

    def __post_init__(self):
        ss = self.grid.spectral_shape
        for name in ("n_plus", "n_minus"):
            if getattr(self, name).shape != ss:
                raise FieldError(f"{name} has shape {getattr(self, name).shape}, expected {ss}")
        for name in ("u_plus", "u_minus"):
            if getattr(self, name).shape != (3,) + ss:
                raise FieldError(f"{name} has shape {getattr(self, name).shape}, expected {(3,) + ss}")

    @classmethod
    def zeros(cls, grid, dtype=np.complex128):
        ss = grid.spectral_shape
        return cls(np.zeros(ss, dtype), np.zeros((3,) + ss, dtype),
                   np.zeros(ss, dtype), np.zeros((3,) + ss, dtype), grid)

    @classmethod
    def from_physical(cls, n_plus, u_plus, n_minus, u_minus, grid, time=0.0):
        f = lambda a: transform_forward(a, grid)
        return cls(f(n_plus), f(u_plus), f(n_minus), f(u_minus), grid, time)

    def to_physical(self):
        g = self.grid
        return tuple(transform_inverse(getattr(self, k), g) for k in FIELD_GROUPS)

    def copy(self):
        return FieldState(self.n_plus.copy(), self.u_plus.copy(), self.n_minus.copy(),
                          self.u_minus.copy(), self.grid, self.time)

    def groups(self):
        return {k: getattr(self, k) for k in FIELD_GROUPS}

    def stacked(self):
        """All eight scalar components as one (8, ...) array (a copy)."""
        return np.concatenate([self.n_plus[None], self.u_plus, self.n_minus[None], self.u_minus])

    @classmethod
    def from_stacked(cls, a, grid, time=0.0):
        return cls(a[0], a[1:4], a[4], a[5:8], grid, time)

    @property
    def dtype(self):
        return self.n_plus.dtype

    def sobolev(self, ells):
        """Per-group homogeneous norms plus their sum under key ``total``."""
        out = {k: sobolev_norms(v, self.grid, ells) for k, v in self.groups().items()}
        out["total"] = sum(out[k] for k in FIELD_GROUPS)
        return out

    def hs_norm(self, s=2):
        """``||(n+, u+, n-, u-)||_{H^s}`` as the sum over the four groups."""
        return sum(hs_norm(v, self.grid, s) for v in self.groups().values())


def state_from_scaled_physical(n_plus, u_plus, n_minus, u_minus, grid, time=0.0):
    return FieldState.from_physical(n_plus, u_plus, n_minus, u_minus, grid, time)


def scale_state(state, eq):
    """Unscaled perturbations ``(R+ - 1, u+, R- - 1, u-)`` -> scaled variables."""
    a1, a4 = eq.alpha1, eq.alpha4
    return FieldState(state.n_plus * a1, state.u_plus * math.sqrt(a1),
                      state.n_minus * a4, state.u_minus * math.sqrt(a4), state.grid, state.time)


def unscale_state(state, eq):
    a1, a4 = eq.alpha1, eq.alpha4
    return FieldState(state.n_plus / a1, state.u_plus / math.sqrt(a1),
                      state.n_minus / a4, state.u_minus / math.sqrt(a4), state.grid, state.time)


def dealias_mask(grid, fraction=2.0 / 3.0):
    """Boolean mask keeping modes with every |n_i| < fraction * M / 2."""
    cut = fraction * grid.M / 2
    ax = np.abs(np.fft.fftfreq(grid.M, 1.0 / grid.M)) < cut
    az = np.abs(np.fft.rfftfreq(grid.M, 1.0 / grid.M)) < cut
    ax[grid.M // 2] = False
    az[-1] = False
    return ax[:, None, None] & ax[None, :, None] & az[None, None, :]
