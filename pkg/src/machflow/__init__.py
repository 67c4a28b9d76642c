"""machflow: a pseudo-spectral laboratory for the low-Mach-number limit of
compressible Navier-Stokes-Fourier flow on an anisotropic torus.

Submodules
----------
lattice    anisotropic frequency lattice, FFT transforms, snapshots
thermo     equations of state, reference-state constants, entropy weight
acoustic   acoustic eigenbasis, kernel/oscillating decomposition, filtering
besov      Littlewood-Paley blocks, (hybrid) Besov and diagnostic norms
resonance  resonance predicates, small-divisor scans, averaged operators
solvers    full / incompressible / limit-system time integrators
harness    experiment orchestration, convergence sweeps, CSV emission
"""

from . import acoustic, besov, harness, lattice, resonance, solvers, thermo
from .acoustic import (
    KernelPart,
    OscCoeffs,
    apply_acoustic,
    decompose,
    eigenmode,
    eigenvalue,
    entropy_inner,
    entropy_norm,
    filter_phase,
    reconstruct_osc,
)
from .besov import DyadicPartition, NormSpec, dyadic_block, g_norm, norm, truncate
from .harness import ExperimentConfig, emit, run_converge, run_divisor, run_identities
from .lattice import (
    FrequencyLattice,
    SpectralField,
    leray_project,
    load_snapshot,
    save_snapshot,
    sg,
    transform_forward,
    transform_inverse,
)
from .resonance import (
    Dbar,
    Q2r_avg,
    Q3r_avg,
    bound_fit,
    d_min,
    divisor_scan,
    is_resonant_2wave,
    is_resonant_3wave,
    pair_coeff,
    prime_decompose,
    prime_recompose,
    triad_coeff,
)
from .solvers import (
    FullState,
    InsfState,
    LimitState,
    conserved,
    make_initial,
    step_full,
    step_insf,
    step_limit,
)
from .thermo import derive_constants, entropy_weight_matrix, ideal_gas, validate_eos

__version__ = "0.1.0"
