"""Acoustic operator, entropy inner product, eigenbasis, projections, filter.

The linearization around the constant state is skew-adjoint in the entropy
inner product; its nonzero spectrum is i*c0*alpha*sg(k)*|k| with explicit
single-mode eigenfunctions.  Fields split orthogonally into a kernel part
(divergence-free velocity plus the density/temperature constraint), an
oscillating part encoded by eigenmode coefficients, and the spatial mean.
"""

from dataclasses import dataclass

import numpy as np

from .lattice import (
    FrequencyLattice,
    SpectralField,
    leray_project,
    sg,
    single_mode,
    zero_field,
)
from .thermo import StateConstants


def entropy_inner(v1: SpectralField, v2: SpectralField, consts) -> complex:
    """<V1, V2>_H = |T| sum_n V1(n)^T W conj(V2(n)) with the entropy weight."""
    if v1.lattice is not v2.lattice and v1.lattice.shape != v2.lattice.shape:
        raise ValueError("lattice mismatch")
    w = consts.weight_diag.reshape((-1,) + (1,) * v1.lattice.dim)
    return complex(v1.lattice.volume * np.sum(v1.data * w * np.conj(v2.data)))


def entropy_norm(v: SpectralField, consts) -> float:
    return float(np.sqrt(max(entropy_inner(v, v, consts).real, 0.0)))


def _eigvec(consts, alpha, n, lattice):
    """Component amplitudes of the unit eigenmode at integer frequency n."""
    k = np.asarray(n, dtype=float) / lattice.aspect
    kabs = np.linalg.norm(k)
    vel = consts.c0 * alpha * sg(n) * k / kabs
    th = consts.theta0 * consts.p_theta0 / (consts.rho0 * consts.e_theta0)
    return consts.c_N * np.concatenate(([consts.rho0], vel, [th]))


def eigenmode(alpha, n, lattice, consts) -> SpectralField:
    """Unit-norm eigenfield at frequency n with eigenvalue i c0 alpha sg(n)|k|."""
    return single_mode(lattice, n, _eigvec(consts, alpha, n, lattice))


def eigenvalue(alpha, n, lattice, consts) -> complex:
    k = np.asarray(n, dtype=float) / lattice.aspect
    return 1j * consts.c0 * alpha * sg(n) * float(np.linalg.norm(k))


def apply_acoustic(v: SpectralField, consts) -> SpectralField:
    """(rho0 div u, (p_rho0 grad rho + p_theta0 grad theta)/rho0, coef div u)."""
    lat = v.lattice
    ik = 1j * lat.k
    rho, u, th = v.data[0], v.data[1 : 1 + lat.dim], v.data[1 + lat.dim]
    divu = np.sum(ik * u, axis=0)
    out = np.empty_like(v.data)
    out[0] = consts.rho0 * divu
    grad_p = (consts.p_rho0 * rho + consts.p_theta0 * th) / consts.rho0
    for i in range(lat.dim):
        out[1 + i] = ik[i] * grad_p
    out[1 + lat.dim] = (
        consts.theta0
        * consts.p_theta0
        / (consts.rho0 * consts.e_theta0)
        * divu
    )
    return SpectralField(lat, out, v.real_valued)


@dataclass
class OscCoeffs:
    """Eigenmode coefficients V^alpha_k of the oscillating part.

    `data` has shape (2,) + lattice.shape; branch 0 holds alpha = +1 and
    branch 1 holds alpha = -1, indexed by the integer frequency in FFT
    ordering.  The zero mode carries no coefficient (kept exactly 0).
    """

    lattice: FrequencyLattice
    consts: StateConstants
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        zero = self.lattice.mode_index((0,) * self.lattice.dim)
        self.data[(slice(None),) + zero] = 0.0

    def copy(self):
        return OscCoeffs(self.lattice, self.consts, self.data.copy())

    def get(self, alpha, n):
        return self.data[(0 if alpha == 1 else 1,) + self.lattice.mode_index(n)]

    def set(self, alpha, n, value):
        self.data[(0 if alpha == 1 else 1,) + self.lattice.mode_index(n)] = value

    def norm(self):
        """Entropy (= l2 over the orthonormal basis) norm."""
        return float(np.linalg.norm(self.data))

    def sobolev_inner(self, other, s=0):
        """Sum over modes of |k|^{2s} V conj(W); s = 0 is the entropy pairing."""
        w = np.where(self.lattice.nonzero, self.lattice.k_sq, 1.0) ** s
        return complex(np.sum(self.data * np.conj(other.data) * w))

    def conj_symmetry_defect(self):
        """Reality: the coefficient at (alpha, -k) conjugates the one at
        (alpha, k) -- conjugating an eigenmode negates its frequency but
        keeps the branch."""
        flipped = self.data.copy()
        for ax in range(1, self.data.ndim):
            flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
        return float(np.max(np.abs(flipped - np.conj(self.data))))


def zero_osc(lattice, consts):
    return OscCoeffs(lattice, consts, np.zeros((2,) + lattice.shape))


@dataclass
class KernelPart:
    """Null-space data: scalar theta-variable, divergence-free velocity, mean.

    The embedded density is -(p_theta0/p_rho0) * vartheta; vartheta and omega
    are mean-free spectral coefficient arrays.
    """

    lattice: FrequencyLattice
    consts: StateConstants
    vartheta: np.ndarray        # lattice-shaped complex array
    omega: np.ndarray           # (N,) + lattice shape
    mean: np.ndarray            # (N + 2,) real/complex

    def copy(self):
        return KernelPart(
            self.lattice,
            self.consts,
            self.vartheta.copy(),
            self.omega.copy(),
            self.mean.copy(),
        )

    def to_field(self, include_mean=True) -> SpectralField:
        c = self.consts
        lat = self.lattice
        data = np.zeros((lat.dim + 2,) + lat.shape, dtype=complex)
        data[0] = -(c.p_theta0 / c.p_rho0) * self.vartheta
        data[1 : 1 + lat.dim] = self.omega
        data[1 + lat.dim] = self.vartheta
        if include_mean:
            zero = lat.mode_index((0,) * lat.dim)
            for c_i in range(lat.dim + 2):
                data[(c_i,) + zero] = self.mean[c_i]
        return SpectralField(lat, data)


def zero_kernel(lattice, consts):
    return KernelPart(
        lattice,
        consts,
        np.zeros(lattice.shape, dtype=complex),
        np.zeros((lattice.dim,) + lattice.shape, dtype=complex),
        np.zeros(lattice.dim + 2, dtype=complex),
    )


def _osc_projection_arrays(lattice, consts):
    """Cached per-mode data for projections: unit k, sg, |k|."""
    ksq = np.where(lattice.nonzero, lattice.k_sq, 1.0)
    kabs = np.sqrt(ksq)
    kunit = lattice.k / kabs
    return kunit, kabs


def decompose(v: SpectralField, consts):
    """Split V into (KernelPart, OscCoeffs); parts are H-orthogonal and sum to V."""
    lat = v.lattice
    c = consts
    rho, u, th = v.data[0], v.data[1 : 1 + lat.dim], v.data[1 + lat.dim]
    zero = lat.mode_index((0,) * lat.dim)

    mean = np.array([v.data[(i,) + zero] for i in range(lat.dim + 2)])

    mask = lat.nonzero
    # kernel scalar: vartheta combines temperature and density along Null(A)
    fac = c.theta0 * c.p_theta0 / (c.rho0**2 * c.e_theta0 * c.c0**2)
    vartheta = np.where(mask, (c.p_rho0 / c.c0**2) * th - c.p_rho0 * fac * rho, 0.0)
    omega = np.array(
        leray_project(SpectralField(lat, np.where(mask, u, 0.0))).data
    )
    omega[(slice(None),) + zero] = 0.0
    kernel = KernelPart(lat, c, vartheta, omega, mean)

    # oscillating coefficients V^alpha_k = <V, H^alpha_k>_H
    kunit, kabs = _osc_projection_arrays(lat, c)
    kdotu = np.sum(kunit * u, axis=0)
    w = c.weight_diag
    base = w[0] * c.rho0 * rho + w[-1] * (
        c.theta0 * c.p_theta0 / (c.rho0 * c.e_theta0)
    ) * th
    vel = w[1] * c.c0 * lat.sg_grid * kdotu
    pref = lat.volume * c.c_N
    data = np.stack([pref * (base + vel), pref * (base - vel)])
    osc = OscCoeffs(lat, c, np.where(mask, data, 0.0))
    return kernel, osc


def reconstruct_osc(osc: OscCoeffs) -> SpectralField:
    """Sum of V^alpha_k H^alpha_k as a spectral field (the oscillating part)."""
    lat = osc.lattice
    c = osc.consts
    kunit, kabs = _osc_projection_arrays(lat, c)
    plus, minus = osc.data[0], osc.data[1]
    th_fac = c.theta0 * c.p_theta0 / (c.rho0 * c.e_theta0)
    data = np.zeros((lat.dim + 2,) + lat.shape, dtype=complex)
    s = plus + minus
    d = plus - minus
    data[0] = c.c_N * c.rho0 * s
    for i in range(lat.dim):
        data[1 + i] = c.c_N * c.c0 * lat.sg_grid * kunit[i] * d
    data[1 + lat.dim] = c.c_N * th_fac * s
    return SpectralField(lat, data)


def project_oscillating(v: SpectralField, consts) -> SpectralField:
    """Direct oscillating projection (pressure-like component plus v = u - Pi u)."""
    lat = v.lattice
    c = consts
    rho, u, th = v.data[0], v.data[1 : 1 + lat.dim], v.data[1 + lat.dim]
    mask = lat.nonzero
    pi = c.p_rho0 * rho + c.p_theta0 * th
    kunit, kabs = _osc_projection_arrays(lat, c)
    kdotu = np.sum(kunit * u, axis=0)
    data = np.zeros_like(v.data)
    data[0] = np.where(mask, pi / c.c0**2, 0.0)
    for i in range(lat.dim):
        data[1 + i] = np.where(mask, kunit[i] * kdotu, 0.0)
    data[1 + lat.dim] = np.where(
        mask,
        c.theta0 * c.p_theta0 / (c.c0**2 * c.rho0**2 * c.e_theta0) * pi,
        0.0,
    )
    return SpectralField(lat, data, v.real_valued)


def eigenvalue_grid(lattice, consts):
    """lambda^alpha_k over both branches, shape (2,) + lattice.shape."""
    lam = 1j * consts.c0 * lattice.sg_grid * lattice.k_abs
    return np.stack([lam, -lam])


def filter_phase(osc: OscCoeffs, tau: float) -> OscCoeffs:
    """Apply the acoustic group: multiply V^alpha_k by e^{tau lambda^alpha_k}.

    tau is the dimensionless phase time (callers pass t/eps); an isometry and
    a one-parameter group in tau.
    """
    lam = eigenvalue_grid(osc.lattice, osc.consts)
    return OscCoeffs(osc.lattice, osc.consts, osc.data * np.exp(tau * lam))
