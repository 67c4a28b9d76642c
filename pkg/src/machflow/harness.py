"""Experiment orchestration: configuration, eps-sweeps with convergence
diagnostics, divisor scans, identity suites, and CSV/manifest emission.

A run is fully determined by its configuration (including seeds); identical
configurations produce byte-identical output files.
"""

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .acoustic import OscCoeffs, decompose, filter_phase, reconstruct_osc
from .besov import GNormAccumulator, NormSpec, norm
from .lattice import FrequencyLattice, SpectralField, save_snapshot
from .resonance import bound_fit, divisor_scan, prime_decompose
from .solvers import (
    AveragedLS,
    FullState,
    InsfState,
    LimitState,
    conserved,
    full_nonlinear_rhs,
    linear_propagator,
    make_initial,
    step_full,
    step_insf,
)
from .thermo import derive_constants, entropy_weight_matrix, ideal_gas

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_LIST_KEYS = {"aspect", "aspect_sq", "eps_list", "m_grid"}
_INT_KEYS = {"schema", "dim", "cutoff", "seed", "record_every", "n_aspect_samples"}
_STR_KEYS = {"eos", "outdir"}


@dataclass
class ExperimentConfig:
    """Flat key = value configuration; see README for the schema."""

    schema: int = 1
    dim: int = 2
    cutoff: int = 32
    aspect: tuple = (1.0, 1.0)
    aspect_sq: tuple = None          # exact squared periods, as fractions
    eos: str = "ideal"
    c_v: float = 1.0
    mu: float = 0.1
    lam: float = 0.0
    kappa: float = 0.1
    rho0: float = 1.0
    theta0: float = 1.0
    seed: int = 0
    eps_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    eps0: float = 0.2
    horizon: float = 0.5
    dt: float = 5e-4
    delta: float = 0.5
    tau: float = 1.0
    init_norm: float = 0.05
    kernel_amp: float = 1.0
    osc_amp: float = 1.0
    decay: float = 2.0
    m_grid: tuple = (4, 8, 16, 32)
    n_aspect_samples: int = 10
    record_every: int = 0            # simulate: snapshot cadence, 0 = none
    outdir: str = "out"

    # -- parsing -----------------------------------------------------------
    @classmethod
    def from_file(cls, path):
        text = Path(path).read_text()
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text):
        cfg = cls()
        overrides = {}
        for line_no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {line_no}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            overrides[key] = val
        return cfg.with_overrides(overrides)

    def with_overrides(self, overrides):
        known = {f.name for f in fields(self)}
        kw = {}
        for key, val in overrides.items():
            if key not in known:
                raise KeyError(f"unknown config key {key!r}")
            kw[key] = _parse_value(key, val)
        out = replace(self, **kw)
        out.validate()
        return out

    def validate(self):
        if self.schema != 1:
            raise ValueError(f"unsupported schema {self.schema}")
        eps = list(self.eps_list)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing")
        if not (0 < self.delta <= 1):
            raise ValueError("delta must lie in (0, 1]")
        if any(e > self.eps0 for e in eps):
            raise ValueError("every eps must be <= eps0")
        return self

    # -- canonical form (hashing / manifests) ------------------------------
    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- derived objects ---------------------------------------------------
    def make_lattice(self, cutoff=None):
        return FrequencyLattice(
            self.dim,
            self.cutoff if cutoff is None else cutoff,
            aspect=None if self.aspect_sq else self.aspect,
            aspect_sq_rational=self.aspect_sq,
        )

    def make_eos(self):
        if self.eos != "ideal":
            from .thermo import CATALOG

            return CATALOG[self.eos](mu=self.mu, lam=self.lam, kappa=self.kappa)
        return ideal_gas(c_v=self.c_v, mu=self.mu, lam=self.lam, kappa=self.kappa)

    def make_constants(self, lattice=None):
        lat = lattice or self.make_lattice()
        return derive_constants(
            self.make_eos(), self.rho0, self.theta0, lat.volume, self.dim
        )


def _parse_value(key, val):
    if not isinstance(val, str):
        return val
    if key in _STR_KEYS:
        return val
    if key in _LIST_KEYS:
        parts = [p.strip() for p in val.split(",") if p.strip()]
        if key == "aspect_sq":
            return tuple(Fraction(p) for p in parts)
        if key == "m_grid":
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    if key in _INT_KEYS:
        return int(val)
    return float(val)


def worker_count(n_jobs):
    cap = int(os.environ.get("MACHFLOW_THREADS", "1"))
    return max(1, min(cap, n_jobs))


# ---------------------------------------------------------------------------
# convergence sweep
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceTable:
    rows: list
    slopes: dict
    flags: dict
    config: ExperimentConfig

    COLUMNS = (
        "eps",
        "W",
        "Z",
        "mean_gap",
        "dv_filtered_max",
        "dv_unfiltered_max",
        "mass_drift",
        "momentum_drift",
        "energy_drift",
        "nsteps",
        "seed",
    )

    def csv_rows(self):
        return [[row[c] for c in self.COLUMNS] for row in self.rows]


def initial_field(config, lattice=None, consts=None):
    lat = lattice or config.make_lattice()
    c = consts or config.make_constants(lat)
    spec = NormSpec(
        "hybrid-B",
        s=config.dim / 2.0 - 1.0,
        t=config.dim / 2.0 + 1.0,
        eta=config.eps0 * c.nu0,
    )
    return make_initial(
        lat,
        c,
        seed=config.seed,
        kernel_amp=config.kernel_amp,
        osc_amp=config.osc_amp,
        decay=config.decay,
        target_norm=config.init_norm,
        norm_spec=spec,
    )


def _converge_one(config, eps, lat, consts, eos, u_in, ls_tables):
    """Lockstep run of the full system against INSF and the limit system at
    one eps, accumulating the diagnostic gaps step by step."""
    dt = config.dt
    nsteps = int(round(config.horizon / dt))
    s_diag = config.dim / 2.0 - config.delta

    kernel0, osc0 = decompose(u_in, consts)
    mean0 = kernel0.mean.copy()

    full = FullState(u_in.copy(), eps, 0.0, consts, eos)
    prop = linear_propagator(lat, consts, eps, dt)
    insf = InsfState(kernel0.copy(), 0.0)
    insf.kernel.mean[:] = 0.0

    ls = AveragedLS.__new__(AveragedLS)
    ls.lattice, ls.consts = lat, consts
    ls.q3, ls.q2 = ls_tables
    insf_states = {0: insf}

    def u_of_t(t):
        n = int(round(t / dt))
        return insf_states[n].kernel.to_field(include_mean=False)

    ls.u_of_t = u_of_t
    limit = LimitState(osc0.copy(), 0.0)

    w_acc = GNormAccumulator(lat, s_diag)
    z_acc = GNormAccumulator(lat, s_diag)
    mean_gap = 0.0
    dv_filt = 0.0
    dv_unfilt = 0.0
    prev_filt = None
    prev_osc = None
    cons0 = conserved(full)
    drift = [0.0, 0.0, 0.0]

    for n in range(nsteps + 1):
        t = n * dt
        kernel_e, osc_e = decompose(full.field, consts)
        # the linear flow damps coefficients by exp(-lambda t / eps); undo it
        filt = filter_phase(osc_e, t / eps)

        w_acc.update(
            t,
            SpectralField(
                lat,
                kernel_e.to_field(include_mean=False).data
                - insf.kernel.to_field(include_mean=False).data,
                True,
            ),
        )
        z_acc.update(
            t,
            reconstruct_osc(
                OscCoeffs(lat, consts, filt.data - limit.osc.data)
            ),
        )
        mean_gap = max(mean_gap, float(np.max(np.abs(kernel_e.mean - mean0))))
        if prev_filt is not None:
            dv_filt = max(
                dv_filt, float(np.linalg.norm(filt.data - prev_filt)) / dt
            )
            dv_unfilt = max(
                dv_unfilt, float(np.linalg.norm(osc_e.data - prev_osc)) / dt
            )
        prev_filt, prev_osc = filt.data, osc_e.data

        if n == nsteps:
            break
        insf = step_insf(insf, dt)
        insf_states[n + 1] = insf
        insf_states.pop(n - 1, None)
        limit = ls.step(limit, dt)
        full = step_full(full, dt, prop=prop)

    cons1 = conserved(full)
    drift[0] = abs(cons1[0] - cons0[0]) / abs(cons0[0])
    # momentum baseline is near zero; normalize by a characteristic
    # momentum rho0 |T| u_rms instead of the (tiny) initial value
    u_l2 = float(
        np.sqrt(lat.volume * np.sum(np.abs(u_in.data[1 : 1 + lat.dim]) ** 2))
    )
    mom_scale = max(consts.rho0 * np.sqrt(lat.volume) * u_l2, 1e-30)
    drift[1] = float(np.max(np.abs(cons1[1] - cons0[1]))) / mom_scale
    drift[2] = abs(cons1[2] - cons0[2]) / abs(cons0[2])

    return {
        "eps": eps,
        "W": w_acc.value(),
        "Z": z_acc.value(),
        "mean_gap": mean_gap,
        "dv_filtered_max": dv_filt,
        "dv_unfiltered_max": dv_unfilt,
        "mass_drift": drift[0],
        "momentum_drift": drift[1],
        "energy_drift": drift[2],
        "nsteps": nsteps,
        "seed": config.seed,
    }


def _loglog_slope(eps, vals):
    eps = np.asarray(eps, dtype=float)
    vals = np.asarray(vals, dtype=float)
    good = vals > 0
    if np.sum(good) < 2:
        return None, None
    x, y = np.log(eps[good]), np.log(vals[good])
    if len(x) > 2:
        coef, cov = np.polyfit(x, y, 1, cov=True)
        err = float(np.sqrt(cov[0, 0]))
    else:
        coef = np.polyfit(x, y, 1)
        err = None
    return float(coef[0]), err


def run_converge(config: ExperimentConfig) -> ConvergenceTable:
    """eps-sweep: full system vs incompressible and limit references.

    Per eps the row reports the kernel gap W, the filtered oscillating gap
    Z, the mean-mode sup gap, the per-step time-derivative maxima of the
    filtered and unfiltered oscillating parts, and conservation drifts.
    """
    config.validate()
    lat = config.make_lattice()
    eos = config.make_eos()
    consts = config.make_constants(lat)
    u_in = initial_field(config, lat, consts)

    from .resonance import ThreeWaveTable, TwoWaveTable

    tables = (ThreeWaveTable(lat, consts), TwoWaveTable(lat, consts))

    eps_list = list(config.eps_list)
    nw = worker_count(len(eps_list))
    job = lambda e: _converge_one(config, e, lat, consts, eos, u_in, tables)
    if nw > 1:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            rows = list(pool.map(job, eps_list))
    else:
        rows = [job(e) for e in eps_list]
    rows.sort(key=lambda r: -r["eps"])

    slopes, flags = {}, {}
    if len(rows) < 2:
        flags["fit"] = "insufficient for fit"
    else:
        eps = [r["eps"] for r in rows]
        for key, name in (("W", "W"), ("mean_gap", "mean")):
            sl, err = _loglog_slope(eps, [r[key] for r in rows])
            slopes[name] = sl
            slopes[name + "_err"] = err
        flags["W_slope_ok"] = slopes["W"] is not None and slopes["W"] >= 0.4
        flags["mean_slope_ok"] = (
            slopes["mean"] is not None and slopes["mean"] >= 0.8
        )
        zs = [r["Z"] for r in rows]
        flags["Z_nonincreasing"] = all(b <= a + 1e-14 for a, b in zip(zs, zs[1:]))
        flags["Z_rate"] = "rate delta/(2+sigma) too slow to fit at this scale"
    return ConvergenceTable(rows, slopes, flags, config)


# ---------------------------------------------------------------------------
# divisor study
# ---------------------------------------------------------------------------

def _sampled_aspects(config):
    """Deterministic sample of rational-square aspect ratios (1, q)."""
    rng = np.random.default_rng(config.seed + 777)
    out = []
    seen = set()
    while len(out) < config.n_aspect_samples:
        num = int(rng.integers(2, 12))
        den = int(rng.integers(2, 12))
        q = Fraction(num, den)
        if q == 1 or q in seen:
            continue
        seen.add(q)
        out.append((Fraction(1),) + (q,) * (config.dim - 1))
    return out


def run_divisor(config: ExperimentConfig):
    """Small-divisor growth study over the configured M grid.

    Runs both orders on the configured aspect and the two-wave scan on a
    deterministic sample of rational-square aspect ratios; returns reports
    plus per-aspect and pooled exponent fits.
    """
    config.validate()
    m_grid = list(config.m_grid)

    def lattice_for(M, aspect_sq=None):
        amax = (
            max(float(np.sqrt(float(r))) for r in aspect_sq)
            if aspect_sq
            else max(config.aspect)
        )
        cutoff = int(np.ceil(M * amax)) + 1
        return FrequencyLattice(
            config.dim,
            cutoff,
            aspect=None if aspect_sq else config.aspect,
            aspect_sq_rational=aspect_sq,
        )

    base = {}
    for order in (2, 3):
        reps = [divisor_scan(M, lattice_for(M), order) for M in m_grid]
        base[order] = {"reports": reps, "fit": bound_fit(reps)}

    sampled = []
    for aspect_sq in _sampled_aspects(config):
        reps = [divisor_scan(M, lattice_for(M, aspect_sq), 2) for M in m_grid]
        fit = bound_fit(reps)
        sampled.append(
            {"aspect_sq": tuple(str(a) for a in aspect_sq), "fit": fit,
             "reports": reps}
        )
    pooled = bound_fit([r for s in sampled for r in s["reports"]])
    return {
        "two_wave": base[2],
        "three_wave": base[3],
        "sampled_aspects": sampled,
        "pooled_sampled_fit": pooled,
        "sigma_bound": 2 * config.dim + 2 * config.tau - 1 + 1.0,
    }


# ---------------------------------------------------------------------------
# identity suite
# ---------------------------------------------------------------------------

def _random_field(lattice, rng, real=True):
    shape = (lattice.dim + 2,) + lattice.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    raw *= (1.0 + lattice.k_sq) ** (-1.0)
    f = SpectralField(lattice, raw, real_valued=False)
    if real:
        flipped = f.data.copy()
        for ax in range(1, f.data.ndim):
            flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
        f = SpectralField(lattice, 0.5 * (f.data + np.conj(flipped)), True)
    return f


def run_identities(config: ExperimentConfig, cutoff=8, nsamples=20,
                   perturb_weight=0.0):
    """Structural invariant suite on randomized inputs.

    `perturb_weight` injects a fault into the entropy weight matrix used by
    the skew-adjointness check, to confirm the check can fail.
    """
    from .acoustic import apply_acoustic, eigenmode, eigenvalue, entropy_norm
    from .acoustic import entropy_inner, project_oscillating
    from .resonance import Q2r_avg, Q3r_avg

    rng = np.random.default_rng(config.seed)
    lat = config.make_lattice(cutoff=cutoff)
    consts = config.make_constants(lat)
    report = {}

    def record(name, residual, threshold):
        report[name] = {
            "residual": float(residual),
            "threshold": threshold,
            "pass": bool(residual < threshold),
        }

    # eigen residuals
    worst = 0.0
    for _ in range(nsamples):
        n = tuple(int(rng.integers(-cutoff, cutoff + 1)) for _ in range(lat.dim))
        if all(c == 0 for c in n):
            n = (1,) + (0,) * (lat.dim - 1)
        alpha = int(rng.choice([-1, 1]))
        h = eigenmode(alpha, n, lat, consts)
        lam = eigenvalue(alpha, n, lat, consts)
        res = SpectralField(lat, apply_acoustic(h, consts).data - lam * h.data)
        worst = max(worst, entropy_norm(res, consts))
    record("eigen_residual", worst, 1e-12)

    # skew-adjointness (optionally with an injected weight fault; the fault
    # must hit a single entry -- a uniform shift can keep the operator skew)
    W = np.array(consts.weight_diag)
    W[0] += perturb_weight
    vol = lat.volume

    def inner(a, b):
        return complex(
            vol * np.sum(a.data * W[(...,) + (None,) * lat.dim] * np.conj(b.data))
        )

    worst = 0.0
    for _ in range(nsamples):
        v1 = _random_field(lat, rng)
        v2 = _random_field(lat, rng)
        num = abs(
            inner(v1, apply_acoustic(v2, consts))
            + inner(apply_acoustic(v1, consts), v2)
        )
        den = np.sqrt(abs(inner(v1, v1)) * abs(inner(v2, v2)))
        worst = max(worst, num / den)
    record("skew_adjoint", worst, 1e-10)

    # projection algebra
    worst = 0.0
    for _ in range(nsamples):
        v = _random_field(lat, rng)
        kernel, osc = decompose(v, consts)
        pv = kernel.to_field(include_mean=False)
        ov = reconstruct_osc(osc)
        mean = kernel.to_field().data - pv.data
        recon = pv.data + ov.data + mean
        worst = max(worst, float(np.max(np.abs(recon - v.data))))
        worst = max(
            worst,
            abs(entropy_inner(pv, ov, consts))
            / max(entropy_norm(v, consts) ** 2, 1e-30),
        )
        k2, o2 = decompose(pv, consts)
        worst = max(worst, float(np.max(np.abs(o2.data))))
        worst = max(
            worst,
            float(
                np.max(np.abs(project_oscillating(v, consts).data - ov.data))
            ),
        )
    record("projection_algebra", worst, 1e-12)

    # filter isometry and group law
    worst = 0.0
    for _ in range(nsamples):
        v = _random_field(lat, rng)
        _, osc = decompose(v, consts)
        tau = float(rng.uniform(-5, 5))
        f = filter_phase(osc, tau)
        worst = max(worst, abs(f.norm() - osc.norm()))
        back = filter_phase(f, -tau)
        worst = max(worst, float(np.max(np.abs(back.data - osc.data))))
    record("filter_isometry", worst, 1e-12)

    # cancellation pairings
    worst = 0.0
    for _ in range(max(4, nsamples // 2)):
        v = _random_field(lat, rng)
        kernel, osc = decompose(v, consts)
        nrm = max(osc.norm(), 1e-30)
        q3 = Q3r_avg(osc, osc)
        worst = max(worst, abs(q3.sobolev_inner(osc, 0)) / nrm**3)
        q2 = Q2r_avg(kernel, osc)
        for s in (0, 1):
            worst = max(worst, abs(q2.sobolev_inner(osc, s)) / nrm**2)
    record("cancellation", worst, 1e-9)

    # prime-energy partition
    worst = 0.0
    for _ in range(nsamples):
        v = _random_field(lat, rng)
        _, osc = decompose(v, consts)
        dec = prime_decompose(osc)
        worst = max(worst, abs(dec.energy() - osc.norm() ** 2))
    record("prime_energy", worst, 1e-10)

    report["all_pass"] = all(
        r["pass"] for r in report.values() if isinstance(r, dict)
    )
    return report


# ---------------------------------------------------------------------------
# single simulation + emission
# ---------------------------------------------------------------------------

def run_simulate(config: ExperimentConfig, eps=None):
    """Single full-system run; returns the time series of conserved
    quantities and diagnostic norms, writing snapshots when configured."""
    config.validate()
    eps = eps if eps is not None else config.eps_list[0]
    lat = config.make_lattice()
    eos = config.make_eos()
    consts = config.make_constants(lat)
    state = FullState(initial_field(config, lat, consts), eps, 0.0, consts, eos)
    prop = linear_propagator(lat, consts, eps, config.dt)
    nsteps = int(round(config.horizon / config.dt))
    spec = NormSpec("H", s=config.dim / 2.0 - config.delta)
    outdir = Path(config.outdir)
    series = []
    for n in range(nsteps + 1):
        mass, mom, energy = conserved(state)
        row = [state.t, mass, *mom, energy, norm(state.field, spec)]
        series.append(row)
        if config.record_every and n % config.record_every == 0:
            outdir.mkdir(parents=True, exist_ok=True)
            save_snapshot(outdir / f"snapshot_{n:06d}.mfld", state.field)
        if n < nsteps:
            state = step_full(state, config.dt, prop=prop)
    cols = ["time", "mass"] + [f"momentum_{i}" for i in range(lat.dim)] + [
        "energy",
        "norm",
    ]
    return {"columns": cols, "rows": series, "final": state}


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def emit(artifacts, outdir, format="csv"):
    """Write run artifacts: CSV tables, a manifest, and long-format data.

    `artifacts` maps a table name to either a ConvergenceTable, a
    {'columns', 'rows'} mapping, or a plain JSON-serializable object;
    returns the list of written paths.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = {"schema": 1, "tables": {}}
    for name, art in sorted(artifacts.items()):
        if isinstance(art, ConvergenceTable):
            path = out / f"{name}.csv"
            write_csv(path, art.COLUMNS, art.csv_rows())
            long_path = out / f"{name}_long.csv"
            long_rows = [
                [row["eps"], key, row[key]]
                for row in art.rows
                for key in art.COLUMNS
                if key != "eps"
            ]
            write_csv(long_path, ["eps", "metric", "value"], long_rows)
            manifest["tables"][name] = {
                "file": path.name,
                "slopes": art.slopes,
                "flags": art.flags,
                "config_sha256": art.config.digest(),
                "config_text": art.config.to_text(),
                "seed": art.config.seed,
            }
            written += [path, long_path]
        elif isinstance(art, dict) and "columns" in art and "rows" in art:
            path = out / f"{name}.csv"
            write_csv(path, art["columns"], art["rows"])
            manifest["tables"][name] = {"file": path.name}
            written.append(path)
        else:
            path = out / f"{name}.json"
            path.write_text(json.dumps(art, indent=2, sort_keys=True,
                                       default=str) + "\n")
            manifest["tables"][name] = {"file": path.name}
            written.append(path)
    import scipy

    manifest["versions"] = {
        "machflow": "0.1.0",
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    written.append(mpath)
    return written


def divisor_artifacts(result):
    """Flatten a run_divisor result into a CSV-ready table."""
    columns = ["aspect", "order", "M", "C_value", "witness", "slope"]
    rows = []

    def add(tag, order, reports, fit):
        for rep in reports:
            rows.append(
                [tag, order, rep.M, rep.C_value, str(rep.witness),
                 fit.get("slope")]
            )

    add("base", 2, result["two_wave"]["reports"], result["two_wave"]["fit"])
    add("base", 3, result["three_wave"]["reports"], result["three_wave"]["fit"])
    for s in result["sampled_aspects"]:
        add("a2=" + ",".join(s["aspect_sq"]), 2, s["reports"], s["fit"])
    return {"columns": columns, "rows": rows}
