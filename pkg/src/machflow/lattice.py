"""Anisotropic torus geometry, truncated dual lattice, and spectral fields.

The torus T^N_a has side lengths 2*pi*a_i.  Wave vectors live on the dual
lattice k_i = n_i / a_i with integer indices n_i; fields are stored as
Fourier coefficient arrays over the centered truncation |n_i| <= K, kept in
FFT ordering along every axis.  All resonance-sensitive arithmetic happens
on the integer indices (with a_i^2 available as exact rationals); floating
point enters only through coefficient values and divisor magnitudes.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import struct

import numpy as np
from scipy.fft import fftn, ifftn, next_fast_len


def sg(n):
    """Generalized sign: +1 iff the first nonzero component of n is positive.

    Undefined (raises) at the zero vector; the zero mode is handled by the
    mean projection, never by the oscillating machinery.
    """
    for c in n:
        if c > 0:
            return 1
        if c < 0:
            return -1
    raise ValueError("sg is undefined at the zero frequency")


class FrequencyLattice:
    """Truncated dual lattice of T^N_a with integer index bookkeeping.

    Parameters
    ----------
    dim : int
        Spatial dimension N >= 2.
    cutoff : int
        Per-dimension truncation K; modes satisfy |n_i| <= K.
    aspect : sequence of float, optional
        The torus ratios a_i (default all ones).
    aspect_sq_rational : sequence of Fraction, optional
        Exact values of a_i^2.  Enables exact resonance predicates.  When
        `aspect` is omitted it is derived as sqrt of these.
    """

    def __init__(self, dim, cutoff, aspect=None, aspect_sq_rational=None):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        if cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        self.dim = int(dim)
        self.cutoff = int(cutoff)
        if aspect is None and aspect_sq_rational is None:
            aspect = np.ones(dim)
        if aspect_sq_rational is not None:
            self.aspect_sq_rational = [Fraction(r) for r in aspect_sq_rational]
            if len(self.aspect_sq_rational) != dim:
                raise ValueError("aspect_sq_rational length mismatch")
            derived = np.sqrt([float(r) for r in self.aspect_sq_rational])
            if aspect is None:
                aspect = derived
        else:
            # detect exact squares of the given floats when they are rational
            self.aspect_sq_rational = None
        self.aspect = np.asarray(aspect, dtype=float)
        if self.aspect.shape != (dim,) or np.any(self.aspect <= 0):
            raise ValueError("aspect must be a positive vector of length dim")
        if self.aspect_sq_rational is None and np.allclose(
            self.aspect, np.round(self.aspect)
        ):
            self.aspect_sq_rational = [
                Fraction(int(round(a)) ** 2) for a in self.aspect
            ]

        self.size = 2 * self.cutoff + 1
        self.shape = (self.size,) * self.dim
        self.volume = (2 * np.pi) ** self.dim * float(np.prod(self.aspect))

        # integer index grids in FFT ordering: 0, 1, .., K, -K, .., -1
        idx = np.fft.fftfreq(self.size, 1.0 / self.size).astype(np.int64)
        grids = np.meshgrid(*([idx] * self.dim), indexing="ij")
        self.n = np.stack(grids)                      # (N, size, ..., size)
        self.k = self.n / self.aspect.reshape((self.dim,) + (1,) * self.dim)
        self.k_sq = np.sum(self.k**2, axis=0)
        self.k_abs = np.sqrt(self.k_sq)
        # generalized sign per mode (0 at the zero mode by convention; the
        # zero mode is always masked out wherever sg matters)
        s = np.zeros(self.shape, dtype=np.int64)
        undecided = np.ones(self.shape, dtype=bool)
        for i in range(self.dim):
            comp = self.n[i]
            s = np.where(undecided & (comp > 0), 1, s)
            s = np.where(undecided & (comp < 0), -1, s)
            undecided &= comp == 0
        self.sg_grid = s
        self.nonzero = ~undecided        # True away from n = 0

    # -- indexing helpers -------------------------------------------------
    def mode_index(self, n):
        """Array index tuple of the integer frequency vector n."""
        n = tuple(int(c) for c in n)
        if any(abs(c) > self.cutoff for c in n):
            raise ValueError(f"mode {n} outside truncation")
        return tuple(c % self.size for c in n)

    def modes(self, radius=None):
        """List of nonzero integer index tuples, optionally with |k| <= radius."""
        out = []
        flat_n = self.n.reshape(self.dim, -1).T
        flat_r = self.k_abs.reshape(-1)
        for row, r in zip(flat_n, flat_r):
            t = tuple(int(c) for c in row)
            if all(c == 0 for c in t):
                continue
            if radius is None or r <= radius + 1e-12:
                out.append(t)
        return out

    def k_sq_exact(self, n):
        """|k|^2 = sum n_i^2 / a_i^2 as an exact Fraction."""
        if self.aspect_sq_rational is None:
            raise ValueError(
                "exact |k|^2 requires aspect_sq_rational (supply a_i^2 as "
                "rationals, or configure a resonance tolerance explicitly)"
            )
        return sum(
            Fraction(int(c) ** 2, 1) / r
            for c, r in zip(n, self.aspect_sq_rational)
        )

    def grid(self, pad=1.0):
        """Real-space sample points; returns (axes, shape) of the uniform grid."""
        shape = self.grid_shape(pad)
        axes = [
            2 * np.pi * self.aspect[i] * np.arange(shape[i]) / shape[i]
            for i in range(self.dim)
        ]
        return axes, shape

    def grid_shape(self, pad=1.0):
        m = int(np.ceil(self.size * pad))
        m = next_fast_len(max(m, self.size))
        return (m,) * self.dim


@dataclass
class SpectralField:
    """Fourier coefficients on a FrequencyLattice.

    `data` has shape (ncomp,) + lattice.shape, complex.  A full fluctuation
    state carries ncomp = N + 2 components ordered density, velocity block,
    temperature.  `real_valued` asserts conjugate symmetry of a real field.
    """

    lattice: FrequencyLattice
    data: np.ndarray
    real_valued: bool = True

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape[1:] != self.lattice.shape:
            raise ValueError("coefficient array incompatible with lattice")

    @property
    def ncomp(self):
        return self.data.shape[0]

    def copy(self):
        return SpectralField(self.lattice, self.data.copy(), self.real_valued)

    def conj_symmetry_defect(self):
        """Max |u_{-n} - conj(u_n)| over the truncation."""
        flipped = self.data.copy()
        for ax in range(1, self.data.ndim):
            flipped = np.flip(np.roll(flipped, -1, axis=ax), axis=ax)
        return float(np.max(np.abs(flipped - np.conj(self.data))))


def zero_field(lattice, ncomp):
    return SpectralField(
        lattice, np.zeros((ncomp,) + lattice.shape, dtype=complex)
    )


def single_mode(lattice, n, amplitudes):
    """Field with the given component amplitudes on the single mode e^{ik.x}."""
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=complex))
    f = zero_field(lattice, len(amplitudes))
    f.data[(slice(None),) + lattice.mode_index(n)] = amplitudes
    f.real_valued = False
    return f


@dataclass
class GridField:
    """Real-space samples on the uniform tensor grid of the torus."""

    lattice: FrequencyLattice
    data: np.ndarray          # (ncomp,) + grid shape
    pad: float = 1.0          # dealiasing pad factor used to build the grid

    @property
    def ncomp(self):
        return self.data.shape[0]


# -- transforms -----------------------------------------------------------

def _embed(coef, lattice, big_shape):
    """Place truncated coefficients into a larger FFT array (zero padding)."""
    out = np.zeros(coef.shape[:1] + big_shape, dtype=complex)
    sel = tuple(
        np.fft.fftfreq(lattice.size, 1.0 / lattice.size).astype(int) % m
        for m in big_shape
    )
    ix = np.ix_(range(coef.shape[0]), *sel)
    out[ix] = coef
    return out


def _extract(big, lattice):
    sel = tuple(
        np.fft.fftfreq(lattice.size, 1.0 / lattice.size).astype(int) % m
        for m in big.shape[1:]
    )
    ix = np.ix_(range(big.shape[0]), *sel)
    return big[ix]


def transform_inverse(f: SpectralField, pad=1.0) -> GridField:
    """Spectral -> grid.  Samples u(x) = sum_n u_n e^{ik.x} on the grid."""
    shape = f.lattice.grid_shape(pad)
    big = _embed(f.data, f.lattice, shape)
    g = ifftn(big * np.prod(shape), axes=tuple(range(1, f.data.ndim)))
    if f.real_valued:
        g = g.real
    return GridField(f.lattice, g, pad)


def transform_forward(g: GridField) -> SpectralField:
    """Grid -> spectral.  u_n = (1/|T|) integral u e^{-ik.x}; modes above the
    cutoff produced by nonlinearities on a padded grid are discarded."""
    axes = tuple(range(1, g.data.ndim))
    big = fftn(np.asarray(g.data, dtype=complex), axes=axes) / np.prod(
        g.data.shape[1:]
    )
    coef = _extract(big, g.lattice)
    return SpectralField(g.lattice, coef, real_valued=np.isrealobj(g.data))


def dealiased_product(f1: SpectralField, f2: SpectralField) -> SpectralField:
    """Pointwise product computed alias-free via 3/2-rule zero padding."""
    if f1.ncomp != f2.ncomp and 1 not in (f1.ncomp, f2.ncomp):
        raise ValueError("component mismatch")
    g1 = transform_inverse(f1, pad=1.5)
    g2 = transform_inverse(f2, pad=1.5)
    prod = GridField(f1.lattice, g1.data * g2.data, 1.5)
    out = transform_forward(prod)
    out.real_valued = f1.real_valued and f2.real_valued
    return out


# -- differential multipliers --------------------------------------------

def gradient(f: SpectralField) -> SpectralField:
    """Gradient of each scalar component; output stacks i*k_i*u per component."""
    lat = f.lattice
    out = np.empty((f.ncomp * lat.dim,) + lat.shape, dtype=complex)
    for c in range(f.ncomp):
        for i in range(lat.dim):
            out[c * lat.dim + i] = 1j * lat.k[i] * f.data[c]
    return SpectralField(lat, out, f.real_valued)


def divergence(f: SpectralField) -> SpectralField:
    """Divergence of an N-component vector field."""
    lat = f.lattice
    if f.ncomp != lat.dim:
        raise ValueError("divergence expects an N-component velocity block")
    out = np.zeros((1,) + lat.shape, dtype=complex)
    for i in range(lat.dim):
        out[0] += 1j * lat.k[i] * f.data[i]
    return SpectralField(lat, out, f.real_valued)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.lattice, -f.lattice.k_sq * f.data, f.real_valued)


def derivative_multiplier(f: SpectralField, kind: str) -> SpectralField:
    if kind == "gradient":
        return gradient(f)
    if kind == "divergence":
        return divergence(f)
    if kind == "laplacian":
        return laplacian(f)
    raise ValueError(f"unknown derivative kind {kind!r}")


def leray_project(u: SpectralField) -> SpectralField:
    """Projection onto divergence-free fields: Pi = I - grad inv(Lap) div.

    Acts as the identity on the zero mode (constants are divergence-free).
    """
    lat = u.lattice
    if u.ncomp != lat.dim:
        raise ValueError("Leray projection expects the velocity block")
    ksq = np.where(lat.k_sq > 0, lat.k_sq, 1.0)
    kdotu = np.zeros(lat.shape, dtype=complex)
    for i in range(lat.dim):
        kdotu += lat.k[i] * u.data[i]
    out = np.empty_like(u.data)
    for i in range(lat.dim):
        out[i] = u.data[i] - lat.k[i] * kdotu / ksq
    zero = lat.mode_index((0,) * lat.dim)
    for i in range(lat.dim):
        out[(i,) + zero] = u.data[(i,) + zero]
    return SpectralField(lat, out, u.real_valued)


# -- snapshot format ------------------------------------------------------

_MAGIC = b"MFLD1"


def save_snapshot(path, f: SpectralField):
    """Write a field in the MFLD1 snapshot format.

    Layout (little endian): magic "MFLD1"; uint32 dim; uint32 sizes per
    dimension; f64 aspect per dimension; uint32 component count; then the
    coefficients row-major as interleaved f64 (re, im).
    """
    lat = f.lattice
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", lat.dim))
        fh.write(struct.pack(f"<{lat.dim}I", *([lat.size] * lat.dim)))
        fh.write(struct.pack(f"<{lat.dim}d", *lat.aspect))
        fh.write(struct.pack("<I", f.ncomp))
        inter = np.empty(f.data.shape + (2,), dtype="<f8")
        inter[..., 0] = f.data.real
        inter[..., 1] = f.data.imag
        fh.write(inter.tobytes())


def load_snapshot(path, lattice=None):
    with open(path, "rb") as fh:
        if fh.read(5) != _MAGIC:
            raise ValueError("not an MFLD1 snapshot")
        (dim,) = struct.unpack("<I", fh.read(4))
        sizes = struct.unpack(f"<{dim}I", fh.read(4 * dim))
        aspect = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        (ncomp,) = struct.unpack("<I", fh.read(4))
        if len(set(sizes)) != 1 or sizes[0] % 2 != 1:
            raise ValueError("snapshot grid incompatible with centered lattice")
        if lattice is None:
            lattice = FrequencyLattice(dim, (sizes[0] - 1) // 2, aspect)
        raw = np.frombuffer(fh.read(), dtype="<f8")
        raw = raw.reshape((ncomp,) + tuple(sizes) + (2,))
        data = raw[..., 0] + 1j * raw[..., 1]
    return SpectralField(lattice, data)
