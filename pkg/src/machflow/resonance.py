"""Resonance sets, averaged/oscillatory operators, and small-divisor scans.

Resonance classification is exact: it runs on integer frequency indices with
the squared aspect ratios as rationals.  Floating point is used only for
divisor magnitudes and operator coefficients.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

from .acoustic import (
    OscCoeffs,
    entropy_inner,
    eigenmode,
    _eigvec,
    zero_osc,
)
from .lattice import (
    FrequencyLattice,
    SpectralField,
    dealiased_product,
    sg,
    single_mode,
    transform_forward,
    transform_inverse,
)

# ---------------------------------------------------------------------------
# exact predicates
# ---------------------------------------------------------------------------

def _check_exact(lattice):
    if lattice.aspect_sq_rational is None:
        raise ValueError(
            "resonance predicates need exact a_i^2; construct the lattice "
            "with aspect_sq_rational"
        )


def is_resonant_2wave(alpha, k, gamma, m, lattice):
    """Phase cancellation of order two: |k| = |m| exactly and matching signs."""
    _check_exact(lattice)
    if all(c == 0 for c in k) or all(c == 0 for c in m):
        raise ValueError("two-wave resonance needs nonzero frequencies")
    return (
        lattice.k_sq_exact(k) == lattice.k_sq_exact(m)
        and alpha * sg(k) == gamma * sg(m)
    )


def _collinear(k, l):
    n = len(k)
    for i in range(n):
        for j in range(i + 1, n):
            if k[i] * l[j] != k[j] * l[i]:
                return False
    return True


def is_resonant_3wave(alpha, k, beta, l, gamma, m, lattice):
    """Phase cancellation of order three on the convolution shell k + l = m.

    Happens exactly when all three branch signs agree and k, l are parallel
    (the orientation condition k.l = sg(k)sg(l)|k||l| follows automatically
    from the sign convention once k and l are parallel).
    """
    _check_exact(lattice)
    if tuple(a + b for a, b in zip(k, l)) != tuple(m):
        raise ValueError("three-wave predicate requires k + l = m")
    for v in (k, l, m):
        if all(c == 0 for c in v):
            raise ValueError("three-wave resonance needs nonzero frequencies")
    if not (alpha == beta == gamma):
        return False
    if not _collinear(k, l):
        return False
    # orientation: the rational dot product k.l must carry sign sg(k) sg(l)
    dot = sum(
        Fraction(int(a) * int(b), 1) / r
        for a, b, r in zip(k, l, lattice.aspect_sq_rational)
    )
    sign = 1 if dot > 0 else (-1 if dot < 0 else 0)
    return sign == sg(k) * sg(l)


# ---------------------------------------------------------------------------
# mode enumeration and shells
# ---------------------------------------------------------------------------

def modes_within(M, lattice):
    """Nonzero integer index vectors with |k| <= M (exact radius test).

    Enumerates the integer box |n_i| <= a_i*M and filters with the rational
    radius; not limited by the lattice cutoff.
    """
    _check_exact(lattice)
    M_sq = Fraction(M) ** 2
    ranges = [
        np.arange(-int(np.floor(lattice.aspect[i] * M + 1e-9)),
                  int(np.floor(lattice.aspect[i] * M + 1e-9)) + 1)
        for i in range(lattice.dim)
    ]
    grid = np.meshgrid(*ranges, indexing="ij")
    pts = np.stack([g.ravel() for g in grid], axis=1)
    out = []
    for row in pts:
        t = tuple(int(c) for c in row)
        if all(c == 0 for c in t):
            continue
        if lattice.k_sq_exact(t) <= M_sq:
            out.append(t)
    return out


def shells(modes, lattice):
    """Group modes by exact squared radius; returns {Fraction: [modes]}."""
    out = {}
    for n in modes:
        out.setdefault(lattice.k_sq_exact(n), []).append(n)
    return out


# ---------------------------------------------------------------------------
# minimal off-line lattice distance
# ---------------------------------------------------------------------------

def d_min(k, lattice):
    """Exact minimal Euclidean distance from the line t*k to off-line
    lattice points.

    Computed as the shortest distance achieved inside a rigorously large
    search window: a candidate minimizer can always be translated by integer
    multiples of k into |p| <= |k|/2 + d_ub, where d_ub is any achieved
    off-line distance.
    """
    k = tuple(int(c) for c in k)
    if all(c == 0 for c in k):
        raise ValueError("zero frequency")
    a = lattice.aspect
    kv = np.asarray(k, dtype=float) / a
    kabs = float(np.linalg.norm(kv))

    def scan(limits):
        ranges = [np.arange(-r, r + 1) for r in limits]
        grid = np.meshgrid(*ranges, indexing="ij")
        q = np.stack([g.ravel() for g in grid], axis=1)  # integer indices
        # exact off-line test: some integer cross component q_i k_j - q_j k_i != 0
        off = np.zeros(len(q), dtype=bool)
        for i in range(lattice.dim):
            for j in range(i + 1, lattice.dim):
                off |= q[:, i] * k[j] != q[:, j] * k[i]
        p = q[off] / a
        proj = p @ kv / kabs
        dist_sq = np.einsum("ij,ij->i", p, p) - proj**2
        return float(np.sqrt(max(np.min(dist_sq), 0.0)))

    d_ub = scan([2] * lattice.dim)
    limits = [int(np.ceil(a[i] * (kabs / 2 + d_ub))) + 1 for i in range(lattice.dim)]
    return scan(limits)


def d_min_gcd(k, lattice):
    """Closed-form gcd lower-bound formula for the off-line distance.

    Exact in two dimensions; in higher dimensions it can misestimate when a
    cross-product component degenerates, so d_min() is the authoritative
    value and this form is kept for reporting.
    """
    k = tuple(int(c) for c in k)
    a = lattice.aspect
    kabs = float(np.linalg.norm(np.asarray(k, dtype=float) / a))
    total = 0.0
    for i in range(lattice.dim):
        for j in range(i + 1, lattice.dim):
            total += (gcd(abs(k[i]), abs(k[j])) / (a[i] * a[j])) ** 2
    return float(np.sqrt(total)) / kabs


# ---------------------------------------------------------------------------
# divisor scans
# ---------------------------------------------------------------------------

@dataclass
class DivisorReport:
    M: float
    aspect: tuple
    order: str                    # 'two-wave' | 'three-wave'
    C_value: float
    witness: dict
    census: dict
    bound_checks: dict

    def row(self):
        w = self.witness
        return {
            "M": self.M,
            "order": self.order,
            "C_value": self.C_value,
            "witness": ";".join(
                f"{key}={val}" for key, val in sorted(w.items())
            ),
        }


def _mode_arrays(modes, lattice):
    n = np.array(modes, dtype=np.int64)
    kf = n / lattice.aspect
    r = np.sqrt(np.sum(kf**2, axis=1))
    s = np.zeros(len(n), dtype=np.int64)
    undecided = np.ones(len(n), dtype=bool)
    for i in range(lattice.dim):
        s = np.where(undecided & (n[:, i] > 0), 1, s)
        s = np.where(undecided & (n[:, i] < 0), -1, s)
        undecided &= n[:, i] == 0
    return n, r, s


def divisor_scan_2wave(M, lattice):
    """Maximal reciprocal two-wave divisor over |k|, |m| <= M, non-resonant."""
    modes = modes_within(M, lattice)
    if not modes:
        raise ValueError("radius M below the lattice granularity")
    sh = shells(modes, lattice)
    keys = sorted(sh.keys())
    radii = [float(np.sqrt(float(key))) for key in keys]
    # non-resonant pairs with minimal |s1|k| - s3|m||: distinct shells with
    # aligned effective signs; the extremal gap is between adjacent radii
    best = None
    for i in range(len(keys) - 1):
        gap = radii[i + 1] - radii[i]
        if best is None or gap < best[0]:
            best = (gap, i)
    if best is None:
        raise ValueError("need at least two shells within M")
    gap, i = best
    k = sh[keys[i + 1]][0]
    m = sh[keys[i]][0]
    n_res = 2 * sum(len(v) ** 2 for v in sh.values())
    n_tot = 4 * len(modes) ** 2
    report = DivisorReport(
        M=M,
        aspect=tuple(lattice.aspect),
        order="two-wave",
        C_value=1.0 / gap,
        witness={"k": k, "m": m, "alpha": sg(k), "gamma": sg(m)},
        census={
            "modes": len(modes),
            "shells": len(keys),
            "resonant": n_res,
            "nonresonant": n_tot - n_res,
        },
        bound_checks=_two_wave_bound_checks(sh, keys, radii, lattice),
    )
    return report


def _two_wave_bound_checks(sh, keys, radii, lattice):
    """For integer-square lattices: 1/||k|-|m|| <= |k|+|m| on every pair."""
    checks = {}
    if all(r.denominator == 1 for r in lattice.aspect_sq_rational) and all(
        key.denominator == 1 for key in keys
    ):
        ok = True
        worst = 0.0
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                lhs = 1.0 / (radii[j] - radii[i])
                rhs = radii[j] + radii[i]
                worst = max(worst, lhs / rhs)
                ok &= lhs <= rhs * (1 + 1e-12)
        checks["integer_gap_holds"] = ok
        checks["integer_gap_worst_ratio"] = worst
    return checks


def divisor_scan_3wave(M, lattice, geometry_samples=200, rng=None):
    """Maximal reciprocal three-wave divisor over |k|,|l|,|m| <= M, k+l=m.

    Also verifies the two proof branches: on parallel opposite-orientation
    pairs the reciprocal equals (|k|+|l|+|m|)/(4|k||l|); on non-parallel
    triads the gap obeys the minimal-line-distance geometry bound.
    """
    modes = modes_within(M, lattice)
    if not modes:
        raise ValueError("radius M below the lattice granularity")
    n, r, s = _mode_arrays(modes, lattice)
    nm = len(modes)
    dim = lattice.dim
    key_of = {tuple(row): i for i, row in enumerate(map(tuple, n.tolist()))}
    M_sq = Fraction(M) ** 2

    best = (np.inf, None)  # (divisor value, witness dict)
    census = {"triads": 0, "resonant": 0, "nonresonant_combos": 0}
    opp_check_worst = 0.0
    opp_checked = 0
    geo_fail = 0
    geo_checked = 0
    rng = rng or np.random.default_rng(0)
    dmin_cache = {}
    geometry_probability = None

    for ik in range(nm):
        nk = n[ik]
        nl = n
        nmv = nk[None, :] + nl
        # m must be nonzero, within radius M, and on the lattice list
        valid = ~np.all(nmv == 0, axis=1)
        rm_sq = np.sum((nmv / lattice.aspect) ** 2, axis=1)
        valid &= rm_sq <= M**2 + 1e-9
        idx = np.nonzero(valid)[0]
        if len(idx) == 0:
            continue
        nmv = nmv[idx]
        # exact radius filter for anisotropic rationals at the boundary
        if any(q.denominator != 1 for q in lattice.aspect_sq_rational):
            keep = np.array(
                [lattice.k_sq_exact(tuple(row)) <= M_sq for row in nmv.tolist()]
            )
            idx = idx[keep]
            nmv = nmv[keep]
            if len(idx) == 0:
                continue
        rl = r[idx]
        sl = s[idx]
        rm = np.sqrt(np.sum((nmv / lattice.aspect) ** 2, axis=1))
        sm = np.zeros(len(idx), dtype=np.int64)
        undecided = np.ones(len(idx), dtype=bool)
        for i in range(dim):
            sm = np.where(undecided & (nmv[:, i] > 0), 1, sm)
            sm = np.where(undecided & (nmv[:, i] < 0), -1, sm)
            undecided &= nmv[:, i] == 0
        # collinearity of k with each l (exact integer cross products)
        coll = np.ones(len(idx), dtype=bool)
        for i in range(dim):
            for j in range(i + 1, dim):
                coll &= nk[i] * n[idx][:, j] == nk[j] * n[idx][:, i]
        census["triads"] += len(idx)
        census["resonant"] += 2 * int(np.sum(coll))  # two sign branches each

        rk, sk = r[ik], s[ik]
        for s1 in (1, -1):
            for s2 in (1, -1):
                for s3 in (1, -1):
                    val = np.abs(s1 * rk + s2 * rl - s3 * rm)
                    resonant = coll & (s1 * sk == s2 * sl) & (s2 * sl == s3 * sm)
                    val = np.where(resonant, np.inf, val)
                    census["nonresonant_combos"] += int(np.sum(~resonant))
                    j = int(np.argmin(val))
                    if val[j] < best[0]:
                        best = (
                            float(val[j]),
                            {
                                "k": tuple(int(c) for c in nk),
                                "l": tuple(int(c) for c in n[idx][j]),
                                "m": tuple(int(c) for c in nmv[j]),
                                "signs": (s1, s2, s3),
                            },
                        )
        # proof-branch checks on the (+,+,-)-style aligned combination
        val_ppm = np.abs(rk + rl - rm)
        opp = coll & (sk != sl)
        for j in np.nonzero(opp)[0]:
            lhs = 1.0 / val_ppm[j]
            rhs = (rk + rl[j] + rm[j]) / (4 * rk * rl[j])
            opp_check_worst = max(opp_check_worst, abs(lhs - rhs) / rhs)
            opp_checked += 1
        noncoll = np.nonzero(~coll)[0]
        if len(noncoll):
            take = rng.choice(
                noncoll, size=min(4, len(noncoll)), replace=False
            )
            for j in take:
                key = tuple(int(c) for c in nk)
                if key not in dmin_cache:
                    dmin_cache[key] = d_min(key, lattice)
                d = dmin_cache[key]
                lower = rk * d**2 / (rl[j] * (rk + rl[j] + rm[j]))
                geo_checked += 1
                if val_ppm[j] < lower * (1 - 1e-9):
                    geo_fail += 1
                if geo_checked >= geometry_samples:
                    break

    if not np.isfinite(best[0]):
        raise ValueError("no non-resonant triads within M")
    return DivisorReport(
        M=M,
        aspect=tuple(lattice.aspect),
        order="three-wave",
        C_value=1.0 / best[0],
        witness=best[1],
        census=census,
        bound_checks={
            "opposite_orientation_identity_worst": opp_check_worst,
            "opposite_orientation_checked": opp_checked,
            "geometry_checked": geo_checked,
            "geometry_failures": geo_fail,
        },
    )


def divisor_scan(M, lattice, order):
    if order in ("two-wave", 2):
        return divisor_scan_2wave(M, lattice)
    if order in ("three-wave", 3):
        return divisor_scan_3wave(M, lattice)
    raise ValueError("order must be 'two-wave' or 'three-wave'")


def bound_fit(reports):
    """Least-squares slope of log C vs log(1 + M) with violation flags."""
    if len(reports) < 4:
        raise ValueError("need at least 4 radii for a slope fit")
    M = np.array([rep.M for rep in reports], dtype=float)
    C = np.array([rep.C_value for rep in reports], dtype=float)
    order = reports[0].order
    slope, intercept = np.polyfit(np.log(1 + M), np.log(C), 1)
    out = {
        "order": order,
        "slope": float(slope),
        "intercept": float(intercept),
    }
    if order == "three-wave":
        out["violates"] = slope > 5.5
    else:
        dim = len(reports[0].aspect)
        square = all(float(a) == 1.0 for a in reports[0].aspect)
        out["violates"] = slope > (1.3 if square else 2 * dim + 2 - 1 + 1.0)
    return out


# ---------------------------------------------------------------------------
# quadratic form: physical-space route and analytic single-mode symbol
# ---------------------------------------------------------------------------

def quadratic_field(v: SpectralField, w: SpectralField, consts) -> SpectralField:
    """Polarized fluctuation quadratic form evaluated alias-free in
    physical space.

    For v = w this is (div(rho u), u.grad u + C1 rho grad rho + C2 theta
    grad theta + C3 theta grad rho + C4 rho grad theta, u.grad theta +
    (C5 theta + C6 rho) div u).
    """
    lat = v.lattice
    N = lat.dim
    C = consts.C
    ik = 1j * lat.k

    def parts(f):
        rho = f.data[0]
        u = f.data[1 : 1 + N]
        th = f.data[1 + N]
        grad_rho = ik * rho
        grad_th = ik * th
        grad_u = np.stack([ik[j] * u for j in range(N)])  # (j, i, ...) d_j u_i
        div_u = np.sum(ik * u, axis=0)
        return rho, u, th, grad_rho, grad_th, grad_u, div_u

    va = parts(v)
    wa = parts(w)

    def grid(arr):
        return transform_inverse(
            SpectralField(lat, arr.reshape((-1,) + lat.shape), False), pad=1.5
        ).data.reshape(arr.shape[:-lat.dim] + lat.grid_shape(1.5))

    (rv, uv, tv, grv, gtv, guv, dv) = [grid(np.asarray(x)) for x in va]
    (rw, uw, tw, grw, gtw, guw, dw) = [grid(np.asarray(x)) for x in wa]

    out = np.empty((N + 2,) + lat.grid_shape(1.5), dtype=complex)
    # density: div(rho u) = grad rho . u + rho div u (polarized)
    out[0] = 0.5 * (
        np.sum(grv * uw, axis=0) + rv * dw + np.sum(grw * uv, axis=0) + rw * dv
    )
    adv_vw = np.einsum("j...,ji...->i...", uv, guw)  # (u_v . grad) u_w
    adv_wv = np.einsum("j...,ji...->i...", uw, guv)
    for i in range(N):
        out[1 + i] = 0.5 * (
            adv_vw[i]
            + adv_wv[i]
            + C[1] * (rv * grw[i] + rw * grv[i])
            + C[2] * (tv * gtw[i] + tw * gtv[i])
            + C[3] * (tv * grw[i] + tw * grv[i])
            + C[4] * (rv * gtw[i] + rw * gtv[i])
        )
    out[1 + N] = 0.5 * (
        np.sum(uv * gtw, axis=0)
        + np.sum(uw * gtv, axis=0)
        + C[5] * (tv * dw + tw * dv)
        + C[6] * (rv * dw + rw * dv)
    )
    from .lattice import GridField

    res = transform_forward(GridField(lat, out, 1.5))
    res.real_valued = v.real_valued and w.real_valued
    return res


def mode_coeff(v_amp, k_vec, w_amp, l_vec, consts):
    """Coefficient at k+l of the polarized quadratic of two single modes.

    Batched: v_amp, w_amp have shape (..., N+2); k_vec, l_vec shape (..., N)
    holding real wave vectors.  Returns shape (..., N+2).
    """
    C = consts.C
    N = k_vec.shape[-1]
    rv, uv, tv = v_amp[..., 0], v_amp[..., 1 : 1 + N], v_amp[..., 1 + N]
    rw, uw, tw = w_amp[..., 0], w_amp[..., 1 : 1 + N], w_amp[..., 1 + N]
    m_vec = k_vec + l_vec
    ul_dot = np.sum(uv * l_vec, axis=-1)   # u_v . l
    uk_dot = np.sum(uw * k_vec, axis=-1)   # u_w . k
    lw_dot = np.sum(uw * l_vec, axis=-1)   # l . u_w
    kv_dot = np.sum(uv * k_vec, axis=-1)   # k . u_v
    out = np.zeros(v_amp.shape, dtype=complex)
    out[..., 0] = 0.5j * np.sum(m_vec * (rv[..., None] * uw + rw[..., None] * uv), axis=-1)
    out[..., 1 : 1 + N] = 0.5j * (
        ul_dot[..., None] * uw
        + uk_dot[..., None] * uv
        + C[1] * (rv * rw)[..., None] * (l_vec + k_vec)
        + C[2] * (tv * tw)[..., None] * (l_vec + k_vec)
        + C[3] * ((tv * rw)[..., None] * l_vec + (tw * rv)[..., None] * k_vec)
        + C[4] * ((rv * tw)[..., None] * l_vec + (rw * tv)[..., None] * k_vec)
    )
    out[..., 1 + N] = 0.5j * (
        ul_dot * tw
        + uk_dot * tv
        + C[5] * (tv * lw_dot + tw * kv_dot)
        + C[6] * (rv * lw_dot + rw * kv_dot)
    )
    return out


def triad_coeff(alpha, k, beta, l, gamma, m, lattice, consts):
    """<Q(H^alpha_k, H^beta_l), H^gamma_m>_H via the physical-space route.

    Built on a minimal enclosing lattice with the same aspect ratios (the
    coefficient only depends on the torus, not on the truncation).
    """
    if tuple(a + b for a, b in zip(k, l)) != tuple(m):
        return 0.0 + 0.0j
    cut = max(max(abs(c) for c in v) for v in (k, l, m))
    small = FrequencyLattice(
        lattice.dim, max(cut, 1), lattice.aspect, lattice.aspect_sq_rational
    )
    fk = eigenmode(alpha, k, small, consts)
    fl = eigenmode(beta, l, small, consts)
    fm = eigenmode(gamma, m, small, consts)
    q = quadratic_field(fk, fl, consts)
    return complex(entropy_inner(q, fm, consts))


def pair_coeff(u_amp, l, alpha, k, gamma, m, lattice, consts):
    """2 <Q(U_l e^{il.x}, H^alpha_k), H^gamma_m>_H for a kernel mode at l."""
    if tuple(a + b for a, b in zip(k, l)) != tuple(m):
        return 0.0 + 0.0j
    cut = max(max(abs(c) for c in v) for v in (k, l, m))
    small = FrequencyLattice(
        lattice.dim, max(cut, 1), lattice.aspect, lattice.aspect_sq_rational
    )
    fl = single_mode(small, l, u_amp)
    fk = eigenmode(alpha, k, small, consts)
    fm = eigenmode(gamma, m, small, consts)
    q = quadratic_field(fl, fk, consts)
    return 2.0 * complex(entropy_inner(q, fm, consts))


# ---------------------------------------------------------------------------
# resonant interaction tables and averaged operators
# ---------------------------------------------------------------------------

def _eig_amp_arrays(lattice, consts):
    """Eigenvector amplitudes for both branches at every mode, flat layout."""
    N = lattice.dim
    nflat = lattice.n.reshape(N, -1).T            # (nm, N)
    kflat = nflat / lattice.aspect
    kabs = np.linalg.norm(kflat, axis=1)
    sg_flat = lattice.sg_grid.reshape(-1)
    mask = kabs > 0
    kunit = np.where(mask[:, None], kflat / np.where(mask, kabs, 1.0)[:, None], 0.0)
    th_fac = consts.theta0 * consts.p_theta0 / (consts.rho0 * consts.e_theta0)
    amps = np.zeros((2, len(nflat), N + 2))
    for b, alpha in enumerate((1, -1)):
        amps[b, :, 0] = consts.c_N * consts.rho0
        amps[b, :, 1 : 1 + N] = (
            consts.c_N * consts.c0 * alpha * sg_flat[:, None] * kunit
        )
        amps[b, :, 1 + N] = consts.c_N * th_fac
    amps[:, ~mask, :] = 0.0
    return nflat, kflat, kabs, sg_flat, amps


class ThreeWaveTable:
    """Resonant triads (collinear, equal branch signs) with coefficients."""

    def __init__(self, lattice, consts):
        self.lattice = lattice
        self.consts = consts
        N = lattice.dim
        K = lattice.cutoff
        size = lattice.size
        w = consts.weight_diag

        # primitive directions with positive sign covering the box
        prims = []
        for n in lattice.modes():
            g = np.gcd.reduce([abs(c) for c in n])
            p = tuple(c // g for c in n)
            if sg(p) == 1 and p not in set(prims) and g >= 1:
                if all(abs(c * 1) <= K for c in p):
                    prims.append(p)
        prims = sorted(set(prims))

        entries_b, entries_k, entries_l, entries_m = [], [], [], []
        for p in prims:
            pmax = max(abs(c) for c in p)
            L = K // pmax
            if L < 2:
                continue
            ns = [i for i in range(-L, L + 1) if i != 0]
            for n1 in ns:
                for n2 in ns:
                    n3 = n1 + n2
                    if n3 == 0 or abs(n3) > L:
                        continue
                    k = tuple(n1 * c for c in p)
                    l = tuple(n2 * c for c in p)
                    m = tuple(n3 * c for c in p)
                    for b in (0, 1):
                        entries_b.append(b)
                        entries_k.append(lattice.mode_index(k))
                        entries_l.append(lattice.mode_index(l))
                        entries_m.append(lattice.mode_index(m))
        idx = lambda tup: np.ravel_multi_index(np.array(tup).T, lattice.shape)
        self.branch = np.array(entries_b)
        self.idx_k = idx(entries_k) if entries_k else np.zeros(0, dtype=int)
        self.idx_l = idx(entries_l) if entries_l else np.zeros(0, dtype=int)
        self.idx_m = idx(entries_m) if entries_l else np.zeros(0, dtype=int)

        # coefficients <Q(H^a_k, H^a_l), H^a_m>_H, vectorized
        nflat, kflat, kabs, sg_flat, amps = _eig_amp_arrays(lattice, consts)
        vk = amps[self.branch, self.idx_k]
        vl = amps[self.branch, self.idx_l]
        kv = kflat[self.idx_k]
        lv = kflat[self.idx_l]
        q = mode_coeff(vk, kv, vl, lv, consts)
        hm = amps[self.branch, self.idx_m]
        self.coeff = lattice.volume * np.sum(q * w[None, :] * hm, axis=-1)

    def apply(self, A: OscCoeffs, B: OscCoeffs) -> OscCoeffs:
        out = zero_osc(self.lattice, self.consts)
        if len(self.branch) == 0:
            return out
        flat = out.data.reshape(2, -1)
        vals = (
            self.coeff
            * A.data.reshape(2, -1)[self.branch, self.idx_k]
            * B.data.reshape(2, -1)[self.branch, self.idx_l]
        )
        np.add.at(flat, (self.branch, self.idx_m), vals)
        return OscCoeffs(self.lattice, self.consts, flat.reshape(out.data.shape))


class TwoWaveTable:
    """Resonant mode pairs (equal radius, matching signs) with the linear
    coupling functional in the kernel-mode amplitudes.

    The mediating kernel frequency is l = m - k; the zero mode (k = m) is
    excluded — couplings are built for mean-free advecting fields.
    """

    def __init__(self, lattice, consts):
        self.lattice = lattice
        self.consts = consts
        N = lattice.dim
        w = consts.weight_diag

        sh = shells(lattice.modes(), lattice)
        pair_k, pair_m, branch_a, branch_g = [], [], [], []
        for key, group in sh.items():
            for k in group:
                for m in group:
                    if k == m:
                        continue
                    l = tuple(b - a for a, b in zip(k, m))
                    if any(abs(c) > lattice.cutoff for c in l):
                        continue
                    for ba, alpha in enumerate((1, -1)):
                        gamma = alpha * sg(k) * sg(m)
                        bg = 0 if gamma == 1 else 1
                        pair_k.append(lattice.mode_index(k))
                        pair_m.append(lattice.mode_index(m))
                        branch_a.append(ba)
                        branch_g.append(bg)
        idx = lambda tups: (
            np.ravel_multi_index(np.array(tups).T, lattice.shape)
            if tups
            else np.zeros(0, dtype=int)
        )
        self.idx_k = idx(pair_k)
        self.idx_m = idx(pair_m)
        self.branch_a = np.array(branch_a, dtype=int)
        self.branch_g = np.array(branch_g, dtype=int)

        nflat, kflat, kabs, sg_flat, amps = _eig_amp_arrays(lattice, consts)
        npairs = len(self.idx_k)
        self.idx_l = (
            np.ravel_multi_index(
                (
                    (nflat[self.idx_m] - nflat[self.idx_k])
                    % lattice.size
                ).T,
                lattice.shape,
            )
            if npairs
            else np.zeros(0, dtype=int)
        )
        # coupling functional: coefficient of each kernel component of U_l
        self.cvec = np.zeros((npairs, N + 2), dtype=complex)
        if npairs:
            vk = amps[self.branch_a, self.idx_k]
            kv = kflat[self.idx_k]
            lv = kflat[self.idx_m] - kflat[self.idx_k]
            hm = amps[self.branch_g, self.idx_m]
            for j in range(N + 2):
                basis = np.zeros((npairs, N + 2))
                basis[:, j] = 1.0
                q = mode_coeff(basis, lv, vk, kv, consts)
                self.cvec[:, j] = 2.0 * lattice.volume * np.sum(
                    q * consts.weight_diag[None, :] * hm, axis=-1
                )

    def apply(self, u_field: SpectralField, B: OscCoeffs) -> OscCoeffs:
        """Q2r(U, B): U given as a mean-free spectral field (N+2 comps)."""
        out = zero_osc(self.lattice, self.consts)
        if len(self.idx_k) == 0:
            return out
        uflat = u_field.data.reshape(u_field.ncomp, -1)
        ul = uflat[:, self.idx_l].T                      # (npairs, N+2)
        vals = np.sum(self.cvec * ul, axis=1) * B.data.reshape(2, -1)[
            self.branch_a, self.idx_k
        ]
        flat = out.data.reshape(2, -1)
        np.add.at(flat, (self.branch_g, self.idx_m), vals)
        return OscCoeffs(self.lattice, self.consts, flat.reshape(out.data.shape))


def Q3r_avg(A: OscCoeffs, B: OscCoeffs, table=None) -> OscCoeffs:
    table = table or ThreeWaveTable(A.lattice, A.consts)
    return table.apply(A, B)


def Q2r_avg(U, B: OscCoeffs, table=None) -> OscCoeffs:
    """U may be a KernelPart or a mean-free SpectralField."""
    table = table or TwoWaveTable(B.lattice, B.consts)
    field = U.to_field(include_mean=False) if hasattr(U, "to_field") else U
    return table.apply(field, B)


def Dbar(A: OscCoeffs) -> OscCoeffs:
    """Averaged dissipation: diagonal -mu_bar |m|^2 on every coefficient."""
    return OscCoeffs(
        A.lattice, A.consts, -A.consts.mu_bar * A.lattice.k_sq * A.data
    )


# ---------------------------------------------------------------------------
# oscillatory (non-averaged) operators, for small truncations
# ---------------------------------------------------------------------------

def _lambda_flat(lattice, consts):
    lam = 1j * consts.c0 * lattice.sg_grid * lattice.k_abs
    return np.stack([lam, -lam]).reshape(2, -1)


def Q3r_eps(A: OscCoeffs, B: OscCoeffs, tau) -> OscCoeffs:
    """Full filtered quadratic: every pair weighted by
    e^{-tau (lambda_k + lambda_l - lambda_m)}."""
    lat = A.lattice
    consts = A.consts
    nflat, kflat, kabs, sg_flat, amps = _eig_amp_arrays(lat, consts)
    lam = _lambda_flat(lat, consts)
    nm = len(nflat)
    live = kabs > 0
    out = zero_osc(lat, consts)
    flat = out.data.reshape(2, -1)
    w = consts.weight_diag
    size = lat.size
    for ia in np.nonzero(live)[0]:
        nk = nflat[ia]
        nmv = nk[None, :] + nflat            # candidate m per l
        inside = np.all(np.abs(nmv) <= lat.cutoff, axis=1) & live
        inside &= ~np.all(nmv == 0, axis=1)
        js = np.nonzero(inside)[0]
        if len(js) == 0:
            continue
        im = np.ravel_multi_index((nmv[js] % size).T, lat.shape)
        for ba in (0, 1):
            for bb in (0, 1):
                q = mode_coeff(
                    np.broadcast_to(amps[ba, ia], (len(js), lat.dim + 2)),
                    np.broadcast_to(kflat[ia], (len(js), lat.dim)),
                    amps[bb, js],
                    kflat[js],
                    consts,
                )
                prod = A.data.reshape(2, -1)[ba, ia] * B.data.reshape(2, -1)[bb, js]
                for bg in (0, 1):
                    hm = amps[bg, im]
                    coeff = lat.volume * np.sum(q * w[None, :] * hm, axis=-1)
                    phase = np.exp(
                        -tau * (lam[ba, ia] + lam[bb, js] - lam[bg, im])
                    )
                    np.add.at(flat, (bg, im), coeff * phase * prod)
    return OscCoeffs(lat, consts, flat.reshape(out.data.shape))


def Q2r_eps(U, B: OscCoeffs, tau) -> OscCoeffs:
    """Filtered two-wave interaction with a mean-free kernel field U."""
    lat = B.lattice
    consts = B.consts
    field = U.to_field(include_mean=False) if hasattr(U, "to_field") else U
    nflat, kflat, kabs, sg_flat, amps = _eig_amp_arrays(lat, consts)
    lam = _lambda_flat(lat, consts)
    live = kabs > 0
    out = zero_osc(lat, consts)
    flat = out.data.reshape(2, -1)
    w = consts.weight_diag
    size = lat.size
    uflat = field.data.reshape(field.ncomp, -1)
    for ia in np.nonzero(live)[0]:
        nk = nflat[ia]
        nmv = nk[None, :] + nflat            # m = k + l over kernel modes l
        inside = np.all(np.abs(nmv) <= lat.cutoff, axis=1) & live
        inside &= ~np.all(nmv == 0, axis=1)
        js = np.nonzero(inside)[0]
        if len(js) == 0:
            continue
        im = np.ravel_multi_index((nmv[js] % size).T, lat.shape)
        ul = uflat[:, js].T
        if not np.any(ul):
            continue
        for ba in (0, 1):
            q = mode_coeff(
                ul,
                kflat[js],
                np.broadcast_to(amps[ba, ia], (len(js), lat.dim + 2)),
                np.broadcast_to(kflat[ia], (len(js), lat.dim)),
                consts,
            )
            A_val = B.data.reshape(2, -1)[ba, ia]
            for bg in (0, 1):
                hm = amps[bg, im]
                coeff = 2.0 * lat.volume * np.sum(q * w[None, :] * hm, axis=-1)
                phase = np.exp(-tau * (lam[ba, ia] - lam[bg, im]))
                np.add.at(flat, (bg, im), coeff * phase * A_val)
    return OscCoeffs(lat, consts, flat.reshape(out.data.shape))


def D_eps(A: OscCoeffs, tau) -> OscCoeffs:
    """Filtered dissipation, including the cross-branch oscillatory terms."""
    lat, consts = A.lattice, A.consts
    ksq = lat.k_sq
    nu_c = ((2 * lat.dim - 2) / lat.dim) * consts.mu0 + consts.lam0
    visc = nu_c / (2 * consts.rho0)
    heat = (
        consts.kappa0
        * consts.theta0
        * consts.p_theta0**2
        / (2 * consts.rho0**3 * consts.e_theta0**2 * consts.c0**2)
    )
    d_same = -(visc + heat) * ksq          # = -mu_bar |k|^2
    d_opp = -(-visc + heat) * ksq
    lam = 1j * consts.c0 * lat.sg_grid * lat.k_abs
    out = zero_osc(lat, consts)
    # gamma = alpha term is phase-free; gamma = -alpha carries e^{-tau(lam_a - lam_g)}
    out.data[0] = d_same * A.data[0] + d_opp * np.exp(-2 * tau * lam) * A.data[1]
    out.data[1] = d_same * A.data[1] + d_opp * np.exp(2 * tau * lam) * A.data[0]
    return out


# ---------------------------------------------------------------------------
# prime-direction decomposition
# ---------------------------------------------------------------------------

@dataclass
class PrimeDecomposition:
    """One-dimensional coefficient sequences along primitive directions.

    lines maps a primitive integer vector p (either sign) to a dict
    n -> coefficient with n in Z*, where the original coefficient lived at
    branch sign sg(p) and frequency n*p.
    """

    lattice: FrequencyLattice
    consts: object
    lines: dict

    def energy(self):
        return sum(
            sum(abs(v) ** 2 for v in line.values()) for line in self.lines.values()
        )


def prime_decompose(A: OscCoeffs) -> PrimeDecomposition:
    lat = A.lattice
    lines = {}
    for n in lat.modes():
        g = int(np.gcd.reduce([abs(c) for c in n]))
        prim = tuple(c // g for c in n)
        for b, alpha in enumerate((1, -1)):
            val = A.data[(b,) + lat.mode_index(n)]
            s = alpha * sg(n)
            p = tuple(s * c for c in prim)
            pos = s * g
            lines.setdefault(p, {})[pos] = val
    return PrimeDecomposition(lat, A.consts, lines)


def prime_recompose(dec: PrimeDecomposition) -> OscCoeffs:
    out = zero_osc(dec.lattice, dec.consts)
    for p, line in dec.lines.items():
        alpha = sg(p)
        b = 0 if alpha == 1 else 1
        for n, val in line.items():
            mode = tuple(n * c for c in p)
            out.data[(b,) + dec.lattice.mode_index(mode)] = val
    return out


def k3_constant(lattice, consts):
    """Real constant K with triad coefficient i K gamma sg(m) |m| on any
    resonant collinear triad; extracted from one reference triad."""
    e1 = (1,) + (0,) * (lattice.dim - 1)
    m = tuple(2 * c for c in e1)
    T = triad_coeff(1, e1, 1, e1, 1, m, lattice, consts)
    mabs = float(np.linalg.norm(np.asarray(m) / lattice.aspect))
    K = T / (1j * mabs)
    return float(K.real)
