"""Littlewood-Paley blocks and (hybrid) Besov/Sobolev measurement norms.

The dyadic bump is phi(r) = psi(r/2) - psi(r) for a smooth step psi equal to
1 on [0, 5/6] and 0 beyond 6/5, so phi is supported in [5/6, 12/5] and the
telescoping sum gives an exact partition of unity for r > 0; weights are
additionally renormalized on the discrete set of lattice radii so the
partition is exact there to rounding.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import SpectralField

_R0 = 5.0 / 6.0
_R1 = 6.0 / 5.0


def _smooth_step(r):
    """C-infinity step: 1 for r <= 5/6, 0 for r >= 6/5."""
    r = np.asarray(r, dtype=float)
    up = np.clip(_R1 - r, 0.0, None)
    dn = np.clip(r - _R0, 0.0, None)
    fu = np.where(up > 0, np.exp(-1.0 / np.where(up > 0, up, 1.0)), 0.0)
    fd = np.where(dn > 0, np.exp(-1.0 / np.where(dn > 0, dn, 1.0)), 0.0)
    return fu / (fu + fd)


def bump(r):
    """The dyadic bump phi, supported in [5/6, 12/5]."""
    r = np.asarray(r, dtype=float)
    return _smooth_step(r / 2.0) - _smooth_step(r)


class DyadicPartition:
    """Block weights phi(2^{-q}|k|) tabulated on a lattice's radii."""

    def __init__(self, lattice):
        self.lattice = lattice
        radii = lattice.k_abs[lattice.nonzero]
        r_min, r_max = float(np.min(radii)), float(np.max(radii))
        self.q_min = int(np.floor(np.log2(r_min))) - 2
        self.q_max = int(np.ceil(np.log2(r_max))) + 1
        self.qs = list(range(self.q_min, self.q_max + 1))
        tables = []
        total = np.zeros(lattice.shape)
        for q in self.qs:
            t = np.where(lattice.nonzero, bump(lattice.k_abs / 2.0**q), 0.0)
            tables.append(t)
            total += t
        # renormalize on the discrete radius set (a no-op up to rounding,
        # since the telescoping sum is already 1 away from the support ends)
        total = np.where(lattice.nonzero, total, 1.0)
        self.tables = [t / total for t in tables]

    def weight(self, q):
        if not self.q_min <= q <= self.q_max:
            return np.zeros(self.lattice.shape)
        return self.tables[q - self.q_min]


def dyadic_block(u: SpectralField, q, partition=None) -> SpectralField:
    """Delta_q u: coefficients scaled by phi(2^{-q}|k|); kills the mean."""
    part = partition or DyadicPartition(u.lattice)
    return SpectralField(u.lattice, u.data * part.weight(q), u.real_valued)


@dataclass
class NormSpec:
    """A measurement norm: family, regularity indices, hybrid anchor, time mode.

    family: 'H' | 'B' | 'Hdot' | 'Bdot' | 'hybrid-H' | 'hybrid-B'
    s, t:   regularity below/above the anchor (t used by hybrid families)
    eta:    hybrid anchor > 0; the split frequency is q0 = -log2(eta)
    time_r: None or one of 1, 2, 'inf', 'loc-inf', 'loc-2' for trajectories
    """

    family: str = "H"
    s: float = 0.0
    t: Optional[float] = None
    eta: Optional[float] = None
    time_r: object = None

    def __post_init__(self):
        if self.family.startswith("hybrid"):
            if self.eta is None or self.eta <= 0:
                raise ValueError("hybrid norms require an anchor eta > 0")
            if self.t is None:
                raise ValueError("hybrid norms require both indices s, t")

    @property
    def homogeneous(self):
        return self.family in ("Hdot", "Bdot")

    @property
    def l2_blocks(self):
        return self.family in ("H", "Hdot", "hybrid-H")


def _mean_l2(u: SpectralField):
    zero = u.lattice.mode_index((0,) * u.lattice.dim)
    m = np.array([u.data[(c,) + zero] for c in range(u.ncomp)])
    return float(np.sqrt(u.lattice.volume) * np.linalg.norm(m))


def block_l2_series(u: SpectralField, partition):
    """L2 norms of Delta_q u (all components together), one entry per q."""
    mags = np.sum(np.abs(u.data) ** 2, axis=0)
    out = []
    for q in partition.qs:
        w = partition.weight(q)
        out.append(float(np.sqrt(u.lattice.volume * np.sum(w**2 * mags))))
    return np.array(out)


def _q_weights(spec, qs):
    qs = np.asarray(qs, dtype=float)
    s = spec.s
    if spec.family.startswith("hybrid"):
        q0 = -np.log2(spec.eta)
        t = spec.t
        return np.where(
            qs <= q0, 2.0 ** (qs * s), spec.eta ** (t - s) * 2.0 ** (qs * t)
        )
    return 2.0 ** (qs * s)


def _aggregate(spec, weighted_blocks, mean_term):
    if spec.l2_blocks:
        return float(np.sqrt(mean_term**2 + np.sum(weighted_blocks**2)))
    return float(mean_term + np.sum(weighted_blocks))


def norm(u: SpectralField, spec: NormSpec, partition=None):
    """Evaluate a NormSpec on a spectral field.

    Homogeneous families drop the mean (flagged via the returned warning on
    `norm_with_flags`); inhomogeneous families add the L2 size of the mean.
    """
    value, _ = norm_with_flags(u, spec, partition)
    return value


def norm_with_flags(u: SpectralField, spec: NormSpec, partition=None):
    part = partition or DyadicPartition(u.lattice)
    blocks = block_l2_series(u, part)
    weights = _q_weights(spec, part.qs)
    mean_sz = _mean_l2(u)
    flags = {}
    if spec.homogeneous:
        if mean_sz > 0:
            flags["mean_dropped"] = mean_sz
        mean_sz = 0.0
    return _aggregate(spec, weights * blocks, mean_sz), flags


def truncate(u: SpectralField, M, side="low") -> SpectralField:
    """Frequency truncation: low keeps |k| <= M, high keeps |k| >= M.

    The shell |k| = M belongs to both halves (non-strict inequalities), so
    u_M + u^M double-counts exactly that shell; low is the side used when a
    disjoint split is needed.
    """
    lat = u.lattice
    if side == "low":
        mask = lat.k_abs <= M + 1e-12
    elif side == "high":
        mask = lat.k_abs >= M - 1e-12
    else:
        raise ValueError("side must be 'low' or 'high'")
    return SpectralField(lat, np.where(mask, u.data, 0.0), u.real_valued)


def trajectory_norm(times, fields, spec: NormSpec, partition=None):
    """Time-aggregated norm of a sampled trajectory.

    Localized styles ('loc-*' and integer r via L-tilde) take the time norm
    block-by-block first, then aggregate over q; plain styles ('Linf' is
    'inf') take the time norm of the spatial norm.  Quadrature is
    trapezoidal on the sample grid.
    """
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        raise ValueError("empty trajectory")
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("time stamps must increase")
    part = partition or DyadicPartition(fields[0].lattice)
    r = spec.time_r

    if r in ("inf",):
        return max(norm(f, spec, part) for f in fields)
    if r in (1, 2) and not str(r).startswith("loc"):
        vals = np.array([norm(f, spec, part) for f in fields])
        p = float(r)
        return float(np.trapezoid(vals**p, times) ** (1.0 / p))

    # localized (L-tilde) styles: per-block time norm first
    if r == "loc-inf":
        tr = lambda series: float(np.max(series))
    elif r == "loc-2":
        tr = lambda series: float(np.sqrt(np.trapezoid(series**2, times)))
    elif r == "loc-1":
        tr = lambda series: float(np.trapezoid(series, times))
    else:
        raise ValueError(f"unsupported time aggregation {r!r}")

    blocks = np.stack([block_l2_series(f, part) for f in fields])  # (nt, nq)
    means = np.array([_mean_l2(f) for f in fields])
    per_block = np.array([tr(blocks[:, j]) for j in range(blocks.shape[1])])
    mean_term = 0.0 if spec.homogeneous else tr(means)
    weights = _q_weights(spec, part.qs)
    return _aggregate(spec, weights * per_block, mean_term)


class GNormAccumulator:
    """Streaming version of `g_norm` for lockstep time integration.

    Feed fields in time order with `update(t, field)`; `value()` returns
    max of the localized-sup norm at regularity s - 1 and the trapezoidal
    L2-in-time norm at regularity s, matching `g_norm` on the same samples.
    """

    def __init__(self, lattice, s, partition=None):
        self.part = partition or DyadicPartition(lattice)
        self.s = s
        self.w_lo = _q_weights(NormSpec("H", s - 1), self.part.qs)
        self.w_hi = _q_weights(NormSpec("H", s), self.part.qs)
        self.block_max = np.zeros_like(self.w_lo)
        self.mean_max = 0.0
        self.sq_integral = 0.0
        self._prev = None               # (t, H^s norm squared)

    def update(self, t, field: SpectralField):
        blocks = block_l2_series(field, self.part)
        mean_sz = _mean_l2(field)
        self.block_max = np.maximum(self.block_max, blocks)
        self.mean_max = max(self.mean_max, mean_sz)
        hs_sq = mean_sz**2 + float(np.sum((self.w_hi * blocks) ** 2))
        if self._prev is not None:
            t0, v0 = self._prev
            if t <= t0:
                raise ValueError("time stamps must increase")
            self.sq_integral += 0.5 * (t - t0) * (v0 + hs_sq)
        self._prev = (t, hs_sq)

    def value(self):
        loc_inf = float(
            np.sqrt(self.mean_max**2 + np.sum((self.w_lo * self.block_max) ** 2))
        )
        return max(loc_inf, float(np.sqrt(self.sq_integral)))


def g_norm(times, fields, s, partition=None):
    """Convergence-diagnostic norm: max of the localized-sup norm at
    regularity s - 1 and the L2-in-time norm at regularity s."""
    a = trajectory_norm(
        times, fields, NormSpec("H", s - 1, time_r="loc-inf"), partition
    )
    b = trajectory_norm(times, fields, NormSpec("H", s, time_r=2), partition)
    return max(a, b)
