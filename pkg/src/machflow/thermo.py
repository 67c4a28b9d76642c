"""Equations of state, admissibility checks, and constant-state coefficients.

All downstream spectral identities depend on the thermodynamic derivatives at
the constant reference state (rho0, theta0); derivatives are supplied
analytically (catalog closures or sympy expressions), never by numerical
differentiation.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class EquationOfState:
    """Pressure/internal-energy closures with analytic partial derivatives.

    Each entry is a callable of (rho, theta) accepting scalars or arrays.
    Transport coefficients mu (shear viscosity), lam (bulk/second viscosity),
    kappa (heat conductivity) are callables as well.
    """

    p: Callable
    e: Callable
    p_rho: Callable
    p_theta: Callable
    p_rhorho: Callable
    p_rhotheta: Callable
    p_thetatheta: Callable
    e_rho: Callable
    e_theta: Callable
    e_rhotheta: Callable
    e_thetatheta: Callable
    mu: Callable = field(default=lambda r, t: 0.1 + 0 * r)
    lam: Callable = field(default=lambda r, t: 0.0 + 0 * r)
    kappa: Callable = field(default=lambda r, t: 0.1 + 0 * r)
    name: str = "custom"


def ideal_gas(c_v=1.0, mu=0.1, lam=0.0, kappa=0.1):
    """Ideal gas p = rho*theta, e = c_v*theta with constant transport."""
    z = lambda r, t: 0.0 * r * t
    return EquationOfState(
        p=lambda r, t: r * t,
        e=lambda r, t: c_v * t + 0.0 * r,
        p_rho=lambda r, t: t + 0.0 * r,
        p_theta=lambda r, t: r + 0.0 * t,
        p_rhorho=z,
        p_rhotheta=lambda r, t: 1.0 + 0.0 * r * t,
        p_thetatheta=z,
        e_rho=z,
        e_theta=lambda r, t: c_v + 0.0 * r * t,
        e_rhotheta=z,
        e_thetatheta=z,
        mu=lambda r, t: mu + 0.0 * r,
        lam=lambda r, t: lam + 0.0 * r,
        kappa=lambda r, t: kappa + 0.0 * r,
        name=f"ideal-gas(c_v={c_v})",
    )


def from_expressions(p_expr, e_expr, mu=0.1, lam=0.0, kappa=0.1, name=None):
    """Build an EOS from sympy-parsable strings in variables rho, theta."""
    import sympy as sp

    rho, theta = sp.symbols("rho theta", positive=True)
    # sympify must reuse these exact symbols, or the derivatives come out zero
    ns = {"rho": rho, "theta": theta}
    p = sp.sympify(p_expr, locals=ns)
    e = sp.sympify(e_expr, locals=ns)

    def lam_of(expr):
        fn = sp.lambdify((rho, theta), expr, "numpy")
        return lambda r, t: np.asarray(fn(r, t), dtype=float) + 0.0 * r

    return EquationOfState(
        p=lam_of(p),
        e=lam_of(e),
        p_rho=lam_of(p.diff(rho)),
        p_theta=lam_of(p.diff(theta)),
        p_rhorho=lam_of(p.diff(rho, 2)),
        p_rhotheta=lam_of(p.diff(rho, theta)),
        p_thetatheta=lam_of(p.diff(theta, 2)),
        e_rho=lam_of(e.diff(rho)),
        e_theta=lam_of(e.diff(theta)),
        e_rhotheta=lam_of(e.diff(rho, theta)),
        e_thetatheta=lam_of(e.diff(theta, 2)),
        mu=lambda r, t: mu + 0.0 * r,
        lam=lambda r, t: lam + 0.0 * r,
        kappa=lambda r, t: kappa + 0.0 * r,
        name=name or f"expr(p={p_expr}, e={e_expr})",
    )


CATALOG = {
    "ideal": ideal_gas,
}


def validate_eos(eos, state, sample_box=None, tol=1e-8):
    """Admissibility report at the reference state.

    Checks e_theta > 0, p_rho > 0, and the thermodynamic compatibility
    residual e_rho - (p - theta*p_theta)/rho^2 over a sample box of
    (rho, theta) pairs around the state.
    """
    rho0, theta0 = state
    if sample_box is None:
        dr = 0.2 * rho0
        dt = 0.2 * theta0
        rs = np.linspace(rho0 - dr, rho0 + dr, 5)
        ts = np.linspace(theta0 - dt, theta0 + dt, 5)
        sample_box = [(r, t) for r in rs for t in ts]
    report = {"state": (rho0, theta0), "ok": True, "checks": {}}
    try:
        et = float(eos.e_theta(rho0, theta0))
        pr = float(eos.p_rho(rho0, theta0))
        report["checks"]["e_theta_positive"] = et > 0
        report["checks"]["p_rho_positive"] = pr > 0
        resid = 0.0
        for r, t in sample_box:
            lhs = float(eos.e_rho(r, t))
            rhs = (float(eos.p(r, t)) - t * float(eos.p_theta(r, t))) / r**2
            resid = max(resid, abs(lhs - rhs))
        report["compat_residual"] = resid
        report["checks"]["compatibility"] = resid < tol
    except Exception as exc:  # EOS evaluation failure
        report["ok"] = False
        report["error"] = repr(exc)
        return report
    report["ok"] = all(report["checks"].values())
    return report


@dataclass(frozen=True)
class StateConstants:
    """Every constant-state coefficient used by the spectral machinery."""

    dim: int
    volume: float
    rho0: float
    theta0: float
    p0: float
    e0: float
    p_rho0: float
    p_theta0: float
    p_rhorho0: float
    p_rhotheta0: float
    p_thetatheta0: float
    e_rho0: float
    e_theta0: float
    e_rhotheta0: float
    e_thetatheta0: float
    mu0: float
    lam0: float
    kappa0: float
    nu0: float          # (2 - 2/N) mu0 + lam0, the hybrid-norm anchor scale
    c0: float           # sound speed
    c_N: float          # eigenmode normalization
    C: tuple            # C[1]..C[11] quadratic/spectral constants (C[0] unused)
    mu_bar: float       # averaged diffusion coefficient (inner-product route)
    mu_bar_printed: float  # volume-dependent transcription, kept for reports

    @property
    def weight_diag(self):
        """Diagonal of the entropy weight matrix (length N + 2)."""
        w_rho = self.p_rho0 / (self.rho0 * self.theta0)
        w_u = self.rho0 / self.theta0
        w_th = self.rho0 * self.e_theta0 / self.theta0**2
        return np.array([w_rho] + [w_u] * self.dim + [w_th])


def entropy_weight_matrix(consts):
    """Entropy-Hessian weight: diag(p_rho/(rho theta), (rho/theta) I, rho e_theta/theta^2)."""
    return np.diag(consts.weight_diag)


def derive_constants(eos, rho0, theta0, volume, dim):
    """Evaluate every constant-state coefficient at (rho0, theta0)."""
    rep = validate_eos(eos, (rho0, theta0))
    if not rep["ok"]:
        raise ValueError(f"inadmissible reference state: {rep}")

    g = lambda f: float(f(rho0, theta0))
    p_rho0 = g(eos.p_rho)
    p_theta0 = g(eos.p_theta)
    e_theta0 = g(eos.e_theta)
    mu0, lam0, kappa0 = g(eos.mu), g(eos.lam), g(eos.kappa)
    N = dim

    c0 = np.sqrt(p_rho0 + theta0 * p_theta0**2 / (rho0**2 * e_theta0))
    c_N = np.sqrt(theta0 / (2 * rho0)) / (c0 * np.sqrt(volume))

    p_rhorho0 = g(eos.p_rhorho)
    p_rhotheta0 = g(eos.p_rhotheta)
    p_thetatheta0 = g(eos.p_thetatheta)
    e_rhotheta0 = g(eos.e_rhotheta)
    e_thetatheta0 = g(eos.e_thetatheta)

    C = [0.0] * 12
    C[1] = p_rhorho0 / rho0 - p_rho0 / rho0**2
    C[2] = p_thetatheta0 / rho0
    C[3] = p_rhotheta0 / rho0
    C[4] = p_rhotheta0 / rho0 - p_theta0 / rho0**2
    C[5] = (
        p_theta0 / (rho0 * e_theta0)
        + theta0 * p_thetatheta0 / (rho0 * e_theta0)
        - theta0 * p_theta0 * e_thetatheta0 / (rho0 * e_theta0**2)
    )
    C[6] = (
        theta0 * p_rhotheta0 / (rho0 * e_theta0)
        - theta0 * p_theta0 / (rho0**2 * e_theta0)
        - theta0 * p_theta0 * e_rhotheta0 / (rho0 * e_theta0**2)
    )
    C[7] = C[3] * rho0 - C[2] * theta0 * p_theta0**2 / (rho0 * e_theta0 * p_rho0)
    C[8] = C[2] * rho0 - C[3] * theta0 * p_theta0**2 / (rho0 * e_theta0 * p_rho0)
    C[9] = (theta0 * p_theta0 / (rho0 * e_theta0)) * C[4] - rho0 * (
        p_theta0 / p_rho0
    ) * C[1]
    C[10] = rho0 * C[5] + (theta0 * p_theta0 / (rho0 * e_theta0)) * C[6]
    C[11] = C[6] - (p_theta0 / p_rho0) * C[1]

    nu_c = ((2 * N - 2) / N) * mu0 + lam0
    mu_bar = nu_c / (2 * rho0) + kappa0 * theta0 * p_theta0**2 / (
        2 * rho0**3 * e_theta0**2 * c0**2
    )
    # an alternative transcription keeps a (c_N c0)^2 prefactor, which drags
    # the torus volume into a diffusion constant; recorded for reports only
    mu_bar_printed = (
        nu_c / theta0 + kappa0 * (p_theta0 / (rho0 * c0 * e_theta0)) ** 2
    ) * (c_N * c0) ** 2

    return StateConstants(
        dim=N,
        volume=volume,
        rho0=rho0,
        theta0=theta0,
        p0=g(eos.p),
        e0=g(eos.e),
        p_rho0=p_rho0,
        p_theta0=p_theta0,
        p_rhorho0=p_rhorho0,
        p_rhotheta0=p_rhotheta0,
        p_thetatheta0=p_thetatheta0,
        e_rho0=g(eos.e_rho),
        e_theta0=e_theta0,
        e_rhotheta0=e_rhotheta0,
        e_thetatheta0=e_thetatheta0,
        mu0=mu0,
        lam0=lam0,
        kappa0=kappa0,
        nu0=(2 - 2 / N) * mu0 + lam0,
        c0=c0,
        c_N=c_N,
        C=tuple(C),
        mu_bar=mu_bar,
        mu_bar_printed=mu_bar_printed,
    )
