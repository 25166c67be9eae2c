"""Equilibrium closure of the two-phase model.

Given the conserved masses ``R+ = a+ rho+`` and ``R- = a- rho-`` the
phase densities follow from the pressure balance

    P+(rho+) - P-(R- rho+ / (rho+ - R+)) = f(R-),   P(rho) = rho**gamma,

which has exactly one root ``rho+ > R+``. Everything downstream (the
linearized constants, the scaled constants, the ten coefficient functions
appearing in the nonlinear terms) is evaluated from this root.

The capillary law is the linear family ``f(z) = f_slope * (z - 1)``.
"""
from dataclasses import dataclass, fields, asdict
import math

import numpy as np

from . import kernels


class ClosureError(ValueError):
    """Invalid physical parameters or a violated structural condition."""


class ConvergenceError(RuntimeError):
    """The implicit density solve did not converge."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True)
class RawParams:
    gamma_plus: float = 2.0
    gamma_minus: float = 2.0
    mu_plus: float = 1.0
    mu_minus: float = 1.0
    lambda_plus: float = 0.0
    lambda_minus: float = 0.0
    f_slope: float = -7.95
    eta_small: float = 0.05
    # pressure constants; the model fixes both to one
    A_plus: float = 1.0
    A_minus: float = 1.0

    def validate(self):
        if self.A_plus != 1.0 or self.A_minus != 1.0:
            raise ClosureError("pressure constants A_plus, A_minus are fixed to 1")
        for name in ("gamma_plus", "gamma_minus"):
            if not getattr(self, name) >= 1.0:
                raise ClosureError(f"{name} must be >= 1, got {getattr(self, name)}")
        for sign in ("plus", "minus"):
            mu = getattr(self, f"mu_{sign}")
            lam = getattr(self, f"lambda_{sign}")
            if not mu > 0:
                raise ClosureError(f"mu_{sign} must be positive, got {mu}")
            if not 2 * mu + 3 * lam >= 0:
                raise ClosureError(f"2*mu_{sign} + 3*lambda_{sign} must be >= 0")
        if not self.eta_small > 0:
            raise ClosureError("eta_small must be positive")
        return self

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def capillary(z, params):
    return params.f_slope * (z - 1.0)


def pressure_residual(rho_plus, R_plus, R_minus, params):
    """phi(rho+, R+, R-) of the pressure balance."""
    rho_minus = R_minus * rho_plus / (rho_plus - R_plus)
    return (rho_plus ** params.gamma_plus - rho_minus ** params.gamma_minus
            - capillary(R_minus, params))


def solve_rho_plus(R_plus, R_minus, params, guess=None, rtol=1e-13, maxit=100):
    """Liquid density rho+ in (R+, inf) solving the pressure balance."""
    if not (R_plus > 0 and R_minus > 0):
        raise ClosureError(f"masses must be positive, got R+={R_plus}, R-={R_minus}")
    rho, lo, hi, status = kernels.rho_plus_scalar(
        float(R_plus), float(R_minus), float(params.gamma_plus), float(params.gamma_minus),
        float(params.f_slope), float(guess) if guess is not None else 0.0, rtol, maxit)
    if status != kernels.CONVERGED:
        raise ConvergenceError(
            f"density solve did not converge for R+={R_plus}, R-={R_minus}", bracket=(lo, hi))
    return float(rho)


def phase_state(R_plus, R_minus, rho_plus, params):
    """Densities, volume fractions, sound speeds and C^2 at given masses.

    Works elementwise on arrays.
    """
    gp, gm = params.gamma_plus, params.gamma_minus
    rho_minus = R_minus * rho_plus / (rho_plus - R_plus)
    a_plus = R_plus / rho_plus
    a_minus = 1.0 - a_plus
    s2p = gp * rho_plus ** (gp - 1.0)
    s2m = gm * rho_minus ** (gm - 1.0)
    C2 = s2m * s2p / (a_minus * rho_plus * s2p + a_plus * rho_minus * s2m)
    return {"rho_plus": rho_plus, "rho_minus": rho_minus, "alpha_plus": a_plus,
            "alpha_minus": a_minus, "s2_plus": s2p, "s2_minus": s2m, "C2": C2}


@dataclass(frozen=True)
class EquilibriumClosure:
    params: RawParams
    rho_plus_eq: float
    rho_minus_eq: float
    alpha_plus_eq: float
    alpha_minus_eq: float
    s2_plus: float
    s2_minus: float
    C2: float
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    nu1_plus: float
    nu2_plus: float
    nu1_minus: float
    nu2_minus: float
    beta_plus: float
    beta_minus: float

    @property
    def nu_plus(self):
        return self.nu1_plus + self.nu2_plus

    @property
    def nu_minus(self):
        return self.nu1_minus + self.nu2_minus

    @property
    def beta_gap(self):
        """beta1*beta4 - beta2*beta3, positive by construction."""
        return self.beta1 * self.beta4 - self.beta2 * self.beta3

    def beta_gap_closed_form(self):
        return -self.C2 * self.params.f_slope / (math.sqrt(self.alpha1 * self.alpha4) * self.rho_plus_eq)

    def as_row(self):
        """Flat mapping of every derived constant (no raw params)."""
        row = {k: v for k, v in asdict(self).items() if k != "params"}
        row["beta1beta4_minus_beta2beta3"] = self.beta_gap
        return row


def f_slope_band(params):
    """Open interval of capillary slopes allowed by the structural condition.

    The equilibrium densities do not depend on f'(1) because f(1) = 0.
    """
    rho = solve_rho_plus(1.0, 1.0, params)
    st = phase_state(1.0, 1.0, rho, params)
    lo = -st["s2_minus"] / st["alpha_minus"]
    hi = (params.eta_small - st["s2_minus"]) / st["alpha_minus"]
    return lo, hi


def build_equilibrium(params=None):
    params = (params or RawParams()).validate()
    rho_p = solve_rho_plus(1.0, 1.0, params)
    st = phase_state(1.0, 1.0, rho_p, params)
    rho_m = st["rho_minus"]
    a_p, a_m = st["alpha_plus"], st["alpha_minus"]
    s2p, s2m, C2 = st["s2_plus"], st["s2_minus"], st["C2"]
    fp = params.f_slope

    lower = -s2m / a_m
    upper = (params.eta_small - s2m) / a_m
    if not lower < fp:
        raise ClosureError(f"structural condition violated: f'(1)={fp} <= -s_-^2/alpha^- = {lower}")
    if not fp < upper:
        raise ClosureError(f"structural condition violated: f'(1)={fp} >= (eta - s_-^2)/alpha^- = {upper}")
    if not upper < 0:
        raise ClosureError(f"structural condition violated: (eta - s_-^2)/alpha^- = {upper} >= 0")

    alpha1 = C2 * rho_m / rho_p
    alpha2 = C2 + C2 * a_m * fp / s2m
    alpha3 = C2
    alpha4 = C2 * rho_p / rho_m - C2 * a_p * fp / s2p
    beta1 = math.sqrt(alpha1)
    beta2 = alpha2 * math.sqrt(alpha1) / alpha4
    beta3 = alpha3 * math.sqrt(alpha4) / alpha1
    beta4 = math.sqrt(alpha4)

    eq = EquilibriumClosure(
        params=params, rho_plus_eq=rho_p, rho_minus_eq=rho_m, alpha_plus_eq=a_p,
        alpha_minus_eq=a_m, s2_plus=s2p, s2_minus=s2m, C2=C2,
        alpha1=alpha1, alpha2=alpha2, alpha3=alpha3, alpha4=alpha4,
        beta1=beta1, beta2=beta2, beta3=beta3, beta4=beta4,
        nu1_plus=params.mu_plus / rho_p,
        nu2_plus=(params.mu_plus + params.lambda_plus) / rho_p,
        nu1_minus=params.mu_minus / rho_m,
        nu2_minus=(params.mu_minus + params.lambda_minus) / rho_m,
        beta_plus=math.sqrt(beta1 / beta2), beta_minus=math.sqrt(beta4 / beta3),
    )
    gap = eq.beta_gap
    closed = eq.beta_gap_closed_form()
    if not gap > 0:
        raise ClosureError(f"beta1*beta4 - beta2*beta3 = {gap} is not positive")
    if abs(gap - closed) > 1e-10 * abs(closed):
        raise ClosureError(f"beta gap identity failed: {gap} vs {closed}")
    if not (eq.nu1_plus > 0 and eq.nu2_plus > 0 and eq.nu1_minus > 0 and eq.nu2_minus > 0):
        raise ClosureError("viscosity coefficients nu1, nu2 must be positive")
    return eq


COEFFICIENT_NAMES = ("g_plus", "g_minus", "gbar_plus", "gbar_minus", "h_plus", "h_minus",
                     "k_plus", "k_minus", "l_plus", "l_minus")


@dataclass(frozen=True)
class CoefficientSample:
    g_plus: float
    g_minus: float
    gbar_plus: float
    gbar_minus: float
    h_plus: float
    h_minus: float
    k_plus: float
    k_minus: float
    l_plus: float
    l_minus: float


def _coefficients(R_plus, R_minus, rho_plus, eq):
    """The ten coefficient functions as written in the perturbation form.

    g, gbar and l are differences from equilibrium and vanish at the
    origin; h and k multiply products of gradients and do not.
    """
    p = eq.params
    fp = p.f_slope  # f' is constant for the linear capillary family
    st = phase_state(R_plus, R_minus, rho_plus, p)
    rp, rm = st["rho_plus"], st["rho_minus"]
    ap, am = st["alpha_plus"], st["alpha_minus"]
    s2p, s2m, C2 = st["s2_plus"], st["s2_minus"], st["C2"]

    rp0, rm0 = eq.rho_plus_eq, eq.rho_minus_eq
    C20 = eq.C2
    g_plus = C2 * rm / rp - C20 * rm0 / rp0
    g_minus = (C2 * rp / rm - C20 * rp0 / rm0
               - fp * C2 * ap / s2p + fp * C20 * eq.alpha_plus_eq / eq.s2_plus)
    gbar_plus = C2 - C20 + fp * C2 * am / s2m - fp * C20 * eq.alpha_minus_eq / eq.s2_minus
    gbar_minus = C2 - C20
    h_plus = C2 * am / (R_plus * s2m)
    h_minus = -C2 / (rm * s2m)
    k_plus = -(C2 / (R_plus * s2p * rp) + fp * C2 / (rp * rm * s2p * s2m))
    k_minus = -ap * C2 / (R_minus * s2p) + fp * ap * C2 / (rm * s2p * s2m)
    l_plus = 1.0 / rp - 1.0 / rp0
    l_minus = 1.0 / rm - 1.0 / rm0
    return (g_plus, g_minus, gbar_plus, gbar_minus, h_plus, h_minus,
            k_plus, k_minus, l_plus, l_minus)


def coefficients_at(n_plus, n_minus, eq, warm_start=None):
    """Coefficient functions at the perturbation point (n+, n-)."""
    R_plus, R_minus = n_plus + 1.0, n_minus + 1.0
    if not (R_plus > 0 and R_minus > 0):
        raise ClosureError(f"vacuum: n+ + 1 = {R_plus}, n- + 1 = {R_minus}")
    rho = solve_rho_plus(R_plus, R_minus, eq.params, guess=warm_start)
    return CoefficientSample(*(float(v) for v in _coefficients(R_plus, R_minus, rho, eq)))


def coefficient_fields(n_plus, n_minus, eq, warm_start=None):
    """Array version of ``coefficients_at`` for whole physical grids.

    Returns ``(coeffs, rho_plus)``; ``coeffs`` maps names to arrays and
    ``rho_plus`` can be fed back as the next warm start.
    """
    R_plus = np.asarray(n_plus) + 1.0
    R_minus = np.asarray(n_minus) + 1.0
    if np.any(R_plus <= 0) or np.any(R_minus <= 0):
        raise ClosureError("vacuum: n +/- 1 <= 0 somewhere on the grid")
    p = eq.params
    if warm_start is None:
        warm_start = np.full(R_plus.shape, eq.rho_plus_eq)
    rho, status = kernels.rho_plus_batch(R_plus, R_minus, p.gamma_plus, p.gamma_minus,
                                         p.f_slope, guess=warm_start)
    if np.any(status != kernels.CONVERGED):
        idx = np.flatnonzero(status != kernels.CONVERGED)[0]
        raise ConvergenceError(
            f"density solve failed at flat index {idx} "
            f"(R+={R_plus.flat[idx]}, R-={R_minus.flat[idx]})")
    vals = _coefficients(R_plus, R_minus, rho, eq)
    return dict(zip(COEFFICIENT_NAMES, vals)), rho
