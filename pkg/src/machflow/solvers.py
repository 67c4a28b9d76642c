"""Time integrators for the three dynamical systems.

All three solvers use a Lawson (integrating-factor) RK2 step: the stiff
constant-coefficient linear part — acoustic rotation over the fast time
t/eps plus dissipation — is applied exactly through a precomputed per-mode
propagator, and only the O(1) nonlinear remainder is treated explicitly.
The time step is set by an advective CFL condition and does not depend on
eps.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import fftn, ifftn
from scipy.linalg import expm

from .acoustic import (
    KernelPart,
    OscCoeffs,
    decompose,
    filter_phase,
    reconstruct_osc,
    zero_kernel,
    zero_osc,
)
from .besov import NormSpec, norm
from .lattice import (
    GridField,
    SpectralField,
    leray_project,
    transform_forward,
    transform_inverse,
    zero_field,
)
from .resonance import (
    ThreeWaveTable,
    TwoWaveTable,
    k3_constant,
    prime_decompose,
    prime_recompose,
)

# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _batch_inverse(lattice, arrays, pad=1.5):
    """One fused inverse transform of a stack of coefficient arrays."""
    stack = np.stack(arrays)
    f = SpectralField(lattice, stack, real_valued=False)
    g = transform_inverse(f, pad=pad)
    return [g.data[i].real for i in range(len(arrays))]


def _batch_forward(lattice, grids, pad=1.5):
    g = GridField(lattice, np.stack(grids), pad)
    return list(transform_forward(g).data)


# ---------------------------------------------------------------------------
# full fluctuation system
# ---------------------------------------------------------------------------

@dataclass
class FullState:
    field: SpectralField           # fluctuations (rho~, u~, theta~)
    eps: float
    t: float
    consts: object
    eos: object

    def copy(self):
        return FullState(self.field.copy(), self.eps, self.t, self.consts, self.eos)


def linear_propagator(lattice, consts, eps, dt):
    """exp(dt (-A_k/eps + D_k)) per mode: exact acoustic rotation plus
    exact constant-coefficient dissipation.  Shape (nmodes, N+2, N+2)."""
    N = lattice.dim
    c = consts
    kflat = lattice.k.reshape(N, -1).T           # (nm, N)
    nm = len(kflat)
    th_coef = c.theta0 * c.p_theta0 / (c.rho0 * c.e_theta0)
    nu_x = ((N - 2) / N) * c.mu0 + c.lam0
    out = np.empty((nm, N + 2, N + 2), dtype=complex)
    for a in range(nm):
        k = kflat[a]
        ksq = float(k @ k)
        A = np.zeros((N + 2, N + 2), dtype=complex)
        A[0, 1 : 1 + N] = c.rho0 * 1j * k
        A[1 : 1 + N, 0] = (c.p_rho0 / c.rho0) * 1j * k
        A[1 : 1 + N, 1 + N] = (c.p_theta0 / c.rho0) * 1j * k
        A[1 + N, 1 : 1 + N] = th_coef * 1j * k
        D = np.zeros((N + 2, N + 2), dtype=complex)
        D[1 : 1 + N, 1 : 1 + N] = -(c.mu0 / c.rho0) * ksq * np.eye(N) - (
            nu_x / c.rho0
        ) * np.outer(k, k)
        D[1 + N, 1 + N] = -(c.kappa0 / (c.rho0 * c.e_theta0)) * ksq
        out[a] = expm(dt * (-A / eps + D))
    return out


def _apply_propagator(prop, f: SpectralField) -> SpectralField:
    flat = f.data.reshape(f.ncomp, -1)
    out = np.einsum("nij,jn->in", prop, flat)
    return SpectralField(f.lattice, out.reshape(f.data.shape), f.real_valued)


def full_nonlinear_rhs(state: FullState) -> SpectralField:
    """The O(1) remainder G(U): primitive-equation right-hand side plus the
    subtracted linear acoustic/dissipative parts.

    The stiff 1/eps pressure and compression terms appear only through
    differences of thermodynamic coefficients between the actual state and
    the reference state, which are O(1) in eps.
    """
    U = state.field
    lat = U.lattice
    c = state.consts
    eos = state.eos
    eps = state.eps
    N = lat.dim
    ik = 1j * lat.k

    rho_c = U.data[0]
    u_c = U.data[1 : 1 + N]
    th_c = U.data[1 + N]
    divu_c = np.sum(ik * u_c, axis=0)

    # spectral pieces to bring to the padded grid in one transform
    stack = [rho_c, *u_c, th_c]
    stack += [ik[i] * rho_c for i in range(N)]
    stack += [ik[i] * th_c for i in range(N)]
    stack += [ik[j] * u_c[i] for i in range(N) for j in range(N)]
    stack.append(divu_c)
    # constant-coefficient dissipation D(u), D(theta), spectrally exact
    nu_x = ((N - 2) / N) * c.mu0 + c.lam0
    kdotu = np.sum(lat.k * u_c, axis=0)
    Du = [
        -(c.mu0 / c.rho0) * lat.k_sq * u_c[i]
        - (nu_x / c.rho0) * lat.k[i] * kdotu
        for i in range(N)
    ]
    Dth = -(c.kappa0 / (c.rho0 * c.e_theta0)) * lat.k_sq * th_c
    stack += Du
    stack.append(Dth)

    g = _batch_inverse(lat, stack)
    p = 0
    rho_g = g[p]; p += 1
    u_g = g[p : p + N]; p += N
    th_g = g[p]; p += 1
    grho = g[p : p + N]; p += N
    gth = g[p : p + N]; p += N
    gu = [[g[p + i * N + j] for j in range(N)] for i in range(N)]  # gu[i][j] = d_j u_i
    p += N * N
    divu = g[p]; p += 1
    Du_g = g[p : p + N]; p += N
    Dth_g = g[p]

    rho = c.rho0 + eps * rho_g
    th = c.theta0 + eps * th_g
    if np.min(rho) <= 0 or np.min(th) <= 0:
        raise FloatingPointError("positivity violation: step rejected")

    p_rho = eos.p_rho(rho, th)
    p_th = eos.p_theta(rho, th)
    e_th = eos.e_theta(rho, th)
    mu = eos.mu(rho, th) + 0.0 * rho
    lam = eos.lam(rho, th) + 0.0 * rho
    kap = eos.kappa(rho, th) + 0.0 * rho

    # viscous stress on the grid (variable coefficients allowed)
    S = [[None] * N for _ in range(N)]
    for i in range(N):
        for j in range(N):
            sym = gu[i][j] + gu[j][i]
            S[i][j] = mu * (sym - (2.0 / N) * (divu if i == j else 0.0)) + (
                lam * divu if i == j else 0.0
            )
    flux = [rho_g * u_g[i] for i in range(N)]             # density flux
    heat = [kap * gth[i] for i in range(N)]               # conductive flux
    fw = _batch_forward(
        lat, flux + heat + [S[i][j] for i in range(N) for j in range(N)]
    )
    flux_c = fw[:N]
    heat_c = fw[N : 2 * N]
    S_c = [[fw[2 * N + i * N + j] for j in range(N)] for i in range(N)]
    divS_c = [sum(ik[j] * S_c[i][j] for j in range(N)) for i in range(N)]
    div_heat_c = sum(ik[i] * heat_c[i] for i in range(N))
    back = _batch_inverse(lat, divS_c + [div_heat_c])
    divS_g = back[:N]
    divheat_g = back[N]

    # assemble G on the grid
    G = [None] * (N + 2)
    # density: mean-free part of -div(rho~ u~), done spectrally below
    Sgradu = sum(S[i][j] * gu[i][j] for i in range(N) for j in range(N))
    pr_diff = p_rho / rho - c.p_rho0 / c.rho0
    pt_diff = p_th / rho - c.p_theta0 / c.rho0
    comp_diff = th * p_th / (rho * e_th) - c.theta0 * c.p_theta0 / (
        c.rho0 * c.e_theta0
    )
    for i in range(N):
        adv = sum(u_g[j] * gu[i][j] for j in range(N))
        G[1 + i] = (
            -adv
            - (pr_diff * grho[i] + pt_diff * gth[i]) / eps
            + divS_g[i] / rho
            - Du_g[i]
        )
    adv_th = sum(u_g[j] * gth[j] for j in range(N))
    G[1 + N] = (
        -adv_th
        - comp_diff * divu / eps
        + divheat_g / (rho * e_th)
        - Dth_g
        + eps * Sgradu / (rho * e_th)
    )
    G[0] = np.zeros_like(G[1])
    out = _batch_forward(lat, G)
    out_c = np.stack(out)
    out_c[0] = -sum(ik[i] * flux_c[i] for i in range(N))
    return SpectralField(lat, out_c, True)


def step_full(state: FullState, dt, prop=None) -> FullState:
    """One Lawson-RK2 step of the full system; prop caches the propagator."""
    if prop is None:
        prop = linear_propagator(state.field.lattice, state.consts, state.eps, dt)
    g0 = full_nonlinear_rhs(state)
    pred = state.copy()
    pred.field = _apply_propagator(
        prop, SpectralField(state.field.lattice, state.field.data + dt * g0.data)
    )
    pred.t = state.t + dt
    g1 = full_nonlinear_rhs(pred)
    eu = _apply_propagator(prop, state.field)
    eg0 = _apply_propagator(prop, g0)
    new = state.copy()
    new.field = SpectralField(
        state.field.lattice, eu.data + 0.5 * dt * (eg0.data + g1.data)
    )
    new.t = state.t + dt
    if not np.all(np.isfinite(new.field.data)):
        raise FloatingPointError("non-finite state: aborting")
    return new


def conserved(state: FullState):
    """Grid quadrature of mass, momentum, and total energy in primitive
    variables rho = rho0 + eps rho~, theta = theta0 + eps theta~.

    In the low-Mach scaling the conserved energy density is
    rho e(rho, theta) + (eps^2/2) rho |u|^2.
    """
    lat = state.field.lattice
    N = lat.dim
    g = _batch_inverse(lat, list(state.field.data), pad=1.0)
    rho = state.consts.rho0 + state.eps * g[0]
    u = np.stack(g[1 : 1 + N])
    th = state.consts.theta0 + state.eps * g[1 + N]
    e = state.eos.e(rho, th)
    vol = lat.volume
    mass = vol * float(np.mean(rho))
    mom = vol * np.array([float(np.mean(rho * u[i])) for i in range(N)])
    energy = vol * float(
        np.mean(rho * e + 0.5 * state.eps**2 * rho * np.sum(u**2, axis=0))
    )
    return mass, mom, energy


# ---------------------------------------------------------------------------
# incompressible limit system
# ---------------------------------------------------------------------------

@dataclass
class InsfState:
    kernel: KernelPart
    t: float

    def copy(self):
        return InsfState(self.kernel.copy(), self.t)


def _insf_rhs(kernel: KernelPart):
    """(-Pi(omega.grad omega), -omega.grad vartheta) via dealiased products."""
    lat = kernel.lattice
    N = lat.dim
    ik = 1j * lat.k
    stack = list(kernel.omega)
    stack += [ik[j] * kernel.omega[i] for i in range(N) for j in range(N)]
    stack += [ik[j] * kernel.vartheta for j in range(N)]
    g = _batch_inverse(lat, stack)
    u = g[:N]
    gu = [[g[N + i * N + j] for j in range(N)] for i in range(N)]
    gth = g[N * N + N :]
    adv = [sum(u[j] * gu[i][j] for j in range(N)) for i in range(N)]
    adv_th = sum(u[j] * gth[j] for j in range(N))
    fw = _batch_forward(lat, adv + [adv_th])
    advec = leray_project(
        SpectralField(lat, np.stack(fw[:N]), True)
    ).data
    zero = lat.mode_index((0,) * N)
    d_omega = -advec
    d_theta = -fw[N]
    d_theta[zero] = 0.0
    for i in range(N):
        d_omega[(i,) + zero] = 0.0
    return d_omega, d_theta


def insf_diffusivities(consts):
    nu_omega = consts.mu0 / consts.rho0
    nu_theta = consts.kappa0 * consts.p_rho0 / (
        consts.c0**2 * consts.rho0 * consts.e_theta0
    )
    return nu_omega, nu_theta


def step_insf(state: InsfState, dt) -> InsfState:
    kernel = state.kernel
    lat = kernel.lattice
    nu_o, nu_t = insf_diffusivities(kernel.consts)
    Eo = np.exp(-nu_o * lat.k_sq * dt)
    Et = np.exp(-nu_t * lat.k_sq * dt)
    do0, dt0 = _insf_rhs(kernel)
    pred = kernel.copy()
    pred.omega = Eo * (kernel.omega + dt * do0)
    pred.vartheta = Et * (kernel.vartheta + dt * dt0)
    do1, dt1 = _insf_rhs(pred)
    new = kernel.copy()
    new.omega = Eo * kernel.omega + 0.5 * dt * (Eo * do0 + do1)
    new.vartheta = Et * kernel.vartheta + 0.5 * dt * (Et * dt0 + dt1)
    return InsfState(new, state.t + dt)


# ---------------------------------------------------------------------------
# oscillating limit system: averaged spectral form and the coupled
# one-dimensional viscous Burgers form
# ---------------------------------------------------------------------------

@dataclass
class LimitState:
    osc: OscCoeffs
    t: float

    def copy(self):
        return LimitState(self.osc.copy(), self.t)


class AveragedLS:
    """Spectral limit-system stepper driven by resonant interaction tables."""

    def __init__(self, lattice, consts, u_of_t=None):
        self.lattice = lattice
        self.consts = consts
        self.q3 = ThreeWaveTable(lattice, consts)
        self.q2 = TwoWaveTable(lattice, consts)
        self.u_of_t = u_of_t            # callable t -> mean-free SpectralField

    def rhs(self, osc, t):
        out = self.q3.apply(osc, osc)
        data = -out.data
        if self.u_of_t is not None:
            data = data - self.q2.apply(self.u_of_t(t), osc).data
        return data

    def step(self, state: LimitState, dt) -> LimitState:
        lat = self.lattice
        E = np.exp(-self.consts.mu_bar * lat.k_sq * dt)
        g0 = self.rhs(state.osc, state.t)
        pred = OscCoeffs(lat, self.consts, E * (state.osc.data + dt * g0))
        g1 = self.rhs(pred, state.t + dt)
        new = OscCoeffs(
            lat, self.consts, E * state.osc.data + 0.5 * dt * (E * g0 + g1)
        )
        return LimitState(new, state.t + dt)


class IcvbLS:
    """Equivalent coupled viscous Burgers system along primitive directions.

    Per line p the unknown w = K * V obeys a 1-D Burgers equation in the
    line coordinate with viscosity mu_bar |p|^2; two-wave coupling between
    lines reuses the pair-coupling table translated to line coordinates.
    """

    def __init__(self, lattice, consts, u_of_t=None):
        self.lattice = lattice
        self.consts = consts
        self.K3 = k3_constant(lattice, consts)
        self.u_of_t = u_of_t
        self.q2 = TwoWaveTable(lattice, consts)

    # conversions ---------------------------------------------------------
    def from_osc(self, osc: OscCoeffs):
        dec = prime_decompose(osc)
        lines = {}
        for p, line in dec.lines.items():
            L = max(abs(n) for n in line)
            arr = np.zeros(2 * L + 1, dtype=complex)   # index n + L
            for n, v in line.items():
                arr[n + L] = self.K3 * v
            lines[p] = arr
        return lines

    def to_osc(self, lines) -> OscCoeffs:
        from .resonance import PrimeDecomposition

        rec = {}
        for p, arr in lines.items():
            L = (len(arr) - 1) // 2
            rec[p] = {
                n: arr[n + L] / self.K3 for n in range(-L, L + 1) if n != 0
            }
        return prime_recompose(
            PrimeDecomposition(self.lattice, self.consts, rec)
        )

    def rhs(self, lines, t):
        out = {}
        for p, w in lines.items():
            L = (len(w) - 1) // 2
            pabs = float(
                np.linalg.norm(np.asarray(p, dtype=float) / self.lattice.aspect)
            )
            conv = np.convolve(w, w)[L : 3 * L + 1]    # (w*w)_n over n in [-L, L]
            ns = np.arange(-L, L + 1)
            d = -1j * pabs * ns * conv
            d[L] = 0.0
            out[p] = d
        if self.u_of_t is not None:
            coupled = self.q2.apply(self.u_of_t(t), self.to_osc(lines))
            extra = self.from_osc(coupled)
            for p, arr in extra.items():
                if p in out:
                    L_out = (len(out[p]) - 1) // 2
                    L_in = (len(arr) - 1) // 2
                    lo = min(L_out, L_in)
                    out[p][L_out - lo : L_out + lo + 1] -= arr[
                        L_in - lo : L_in + lo + 1
                    ]
        return out

    def step(self, lines, t, dt):
        new = {}
        g0 = self.rhs(lines, t)
        pred = {}
        for p, w in lines.items():
            L = (len(w) - 1) // 2
            pabs = float(
                np.linalg.norm(np.asarray(p, dtype=float) / self.lattice.aspect)
            )
            ns = np.arange(-L, L + 1)
            E = np.exp(-self.consts.mu_bar * pabs**2 * ns**2 * dt)
            pred[p] = E * (w + dt * g0[p])
        g1 = self.rhs(pred, t + dt)
        for p, w in lines.items():
            L = (len(w) - 1) // 2
            pabs = float(
                np.linalg.norm(np.asarray(p, dtype=float) / self.lattice.aspect)
            )
            ns = np.arange(-L, L + 1)
            E = np.exp(-self.consts.mu_bar * pabs**2 * ns**2 * dt)
            new[p] = E * w + 0.5 * dt * (E * g0[p] + g1[p])
        return new


def step_limit(state: LimitState, dt, form="averaged", stepper=None):
    """Advance the oscillating limit system one step.

    `stepper` carries the precomputed tables (AveragedLS or IcvbLS); it is
    created on the fly when omitted, which is only sensible for tiny grids.
    """
    if stepper is None:
        cls = AveragedLS if form == "averaged" else IcvbLS
        stepper = cls(state.osc.lattice, state.osc.consts)
    if form == "averaged":
        return stepper.step(state, dt)
    lines = stepper.from_osc(state.osc)
    lines = stepper.step(lines, state.t, dt)
    return LimitState(
        OscCoeffs(state.osc.lattice, state.osc.consts, stepper.to_osc(lines).data),
        state.t + dt,
    )


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def make_initial(
    lattice,
    consts,
    seed=0,
    kernel_amp=1.0,
    osc_amp=1.0,
    decay=2.0,
    target_norm=None,
    norm_spec=None,
):
    """Random real fluctuation field with prescribed structure.

    kernel_amp/osc_amp scale the two orthogonal parts (either may be zero);
    `decay` is the spectral envelope exponent; when `target_norm` is given
    the field is rescaled so the configured norm matches it.
    """
    rng = np.random.default_rng(seed)
    N = lattice.dim
    shape = (N + 2,) + lattice.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    env = (1.0 + lattice.k_sq) ** (-decay / 2.0)
    f = SpectralField(lattice, raw * env, real_valued=False)
    # hermitian symmetrization makes the field real
    flipped = f.data.copy()
    for ax in range(1, f.data.ndim):
        flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
    f = SpectralField(lattice, 0.5 * (f.data + np.conj(flipped)), True)
    kernel, osc = decompose(f, consts)
    kernel.mean[:] = 0.0
    kernel.omega *= kernel_amp
    kernel.vartheta *= kernel_amp
    osc.data *= osc_amp
    total = SpectralField(
        lattice, kernel.to_field().data + reconstruct_osc(osc).data, True
    )
    if target_norm is not None:
        spec = norm_spec or NormSpec("H", s=N / 2.0 + 0.5)
        measured = norm(total, spec)
        if measured <= 0:
            raise ValueError("target norm unreachable: field is null")
        total = SpectralField(lattice, total.data * (target_norm / measured), True)
    return total
