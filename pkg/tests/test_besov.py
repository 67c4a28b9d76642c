import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from machflow.besov import (
    DyadicPartition,
    GNormAccumulator,
    NormSpec,
    bump,
    dyadic_block,
    g_norm,
    norm,
    norm_with_flags,
    trajectory_norm,
    truncate,
)
from machflow.lattice import FrequencyLattice, SpectralField, single_mode

from conftest import random_real_field


def test_bump_support():
    r = np.linspace(0.01, 4.0, 2000)
    phi = bump(r)
    assert np.all(phi[r <= 5.0 / 6.0] == 0.0)
    assert np.all(phi[r >= 12.0 / 5.0] == 0.0)
    assert np.all(phi[(r >= 6.0 / 5.0) & (r <= 5.0 / 3.0)] == pytest.approx(1.0))


def test_partition_of_unity(lat2):
    part = DyadicPartition(lat2)
    total = np.zeros(lat2.shape)
    for q in part.qs:
        total += part.weight(q)
    np.testing.assert_allclose(total[lat2.nonzero], 1.0, atol=1e-12)
    assert total[lat2.mode_index((0, 0))] == 0.0


def test_unit_frequency_blocks(lat2):
    # a frequency of modulus 1 meets only the blocks q in {-1, 0}
    part = DyadicPartition(lat2)
    f = single_mode(lat2, (1, 0), [1.0])
    hit = [q for q in part.qs if np.max(np.abs(dyadic_block(f, q, part).data)) > 0]
    assert hit == [-1, 0]


def test_block_reconstruction(lat2):
    rng = np.random.default_rng(0)
    v = random_real_field(lat2, rng)
    part = DyadicPartition(lat2)
    total = sum(dyadic_block(v, q, part).data for q in part.qs)
    zero = lat2.mode_index((0, 0))
    expect = v.data.copy()
    for c in range(v.ncomp):
        expect[(c,) + zero] = 0.0
    np.testing.assert_allclose(total, expect, atol=1e-12)


def test_quasi_orthogonality(lat2):
    # blocks two or more apart have disjoint frequency support
    rng = np.random.default_rng(1)
    v = random_real_field(lat2, rng)
    part = DyadicPartition(lat2)
    for i, q in enumerate(part.qs):
        for p in part.qs[i + 2 :]:
            a = dyadic_block(v, q, part)
            b = dyadic_block(v, p, part)
            overlap = np.sum(np.abs(a.data) * np.abs(b.data))
            assert overlap == 0.0


def test_norm_equivalence_with_sobolev(lat2):
    # documented equivalence constants for the H family: within [1/4, 4]
    # of the multiplier Sobolev norm, uniformly over random fields
    rng = np.random.default_rng(2)
    for s in (0.0, 1.0, 2.0):
        for _ in range(20):
            v = random_real_field(lat2, rng)
            direct = np.sqrt(
                lat2.volume
                * np.sum((1.0 + lat2.k_sq) ** s * np.abs(v.data) ** 2)
            )
            val = norm(v, NormSpec("H", s=s))
            assert 0.25 * direct <= val <= 4.0 * direct


def test_homogeneous_drops_mean(lat2):
    rng = np.random.default_rng(3)
    v = random_real_field(lat2, rng)
    val, flags = norm_with_flags(v, NormSpec("Hdot", s=0.5))
    assert "mean_dropped" in flags
    shifted = SpectralField(lat2, v.data.copy(), True)
    zero = lat2.mode_index((0, 0))
    for c in range(v.ncomp):
        shifted.data[(c,) + zero] += 3.0
    assert norm(shifted, NormSpec("Hdot", s=0.5)) == pytest.approx(val)
    assert norm(shifted, NormSpec("H", s=0.5)) > val


def test_besov_vs_sobolev_order(lat2):
    # l1 aggregation dominates l2 on the same weighted blocks
    rng = np.random.default_rng(4)
    v = random_real_field(lat2, rng)
    assert norm(v, NormSpec("B", s=1.0)) >= norm(v, NormSpec("H", s=1.0))


def test_hybrid_matches_plain_at_eta_limits(lat2):
    rng = np.random.default_rng(5)
    v = random_real_field(lat2, rng)
    # with the anchor above every populated block the hybrid-H norm is the
    # plain H^s norm
    lo = norm(v, NormSpec("hybrid-H", s=1.0, t=2.0, eta=1e-4))
    assert lo == pytest.approx(norm(v, NormSpec("H", s=1.0)))


def test_truncate_shell_double_counts(lat2):
    rng = np.random.default_rng(6)
    v = random_real_field(lat2, rng)
    low = truncate(v, 4.0, side="low")
    high = truncate(v, 4.0, side="high")
    both = low.data + high.data
    shell = np.abs(lat2.k_abs - 4.0) < 1e-12
    np.testing.assert_allclose(both[:, ~shell], v.data[:, ~shell], atol=0)
    np.testing.assert_allclose(both[:, shell], 2 * v.data[:, shell], atol=0)


def test_truncation_inequality(lat2):
    # || u - u_M ||_{H^s} <= C M^{s-t} || u ||_{H^t} for t > s, C = 4
    rng = np.random.default_rng(7)
    for _ in range(10):
        v = random_real_field(lat2, rng)
        tail = SpectralField(lat2, v.data - truncate(v, 4.0).data, True)
        lhs = norm(tail, NormSpec("H", s=0.5))
        rhs = 4.0 * 4.0 ** (0.5 - 1.5) * norm(v, NormSpec("H", s=1.5))
        assert lhs <= rhs


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.1, 100.0), seed=st.integers(0, 10))
def test_norm_homogeneity(scale, seed):
    lat = FrequencyLattice(2, 4)
    rng = np.random.default_rng(seed)
    v = random_real_field(lat, rng)
    w = SpectralField(lat, scale * v.data, True)
    for spec in (NormSpec("H", 1.0), NormSpec("B", 0.5),
                 NormSpec("hybrid-B", 0.0, t=1.0, eta=0.1)):
        assert norm(w, spec) == pytest.approx(scale * norm(v, spec), rel=1e-10)


def test_trajectory_norms(lat2):
    rng = np.random.default_rng(8)
    fields = [random_real_field(lat2, rng) for _ in range(5)]
    times = np.linspace(0.0, 1.0, 5)
    spec_inf = NormSpec("H", 1.0, time_r="inf")
    vals = [norm(f, NormSpec("H", 1.0)) for f in fields]
    assert trajectory_norm(times, fields, spec_inf) == pytest.approx(max(vals))
    l2 = trajectory_norm(times, fields, NormSpec("H", 1.0, time_r=2))
    assert l2 == pytest.approx(
        np.sqrt(np.trapezoid(np.asarray(vals) ** 2, times))
    )
    # the localized sup norm dominates the plain sup norm
    loc = trajectory_norm(times, fields, NormSpec("H", 1.0, time_r="loc-inf"))
    assert loc >= max(vals) - 1e-12
    with pytest.raises(ValueError):
        trajectory_norm([], [], spec_inf)
    with pytest.raises(ValueError):
        trajectory_norm([0.0, 0.0], fields[:2], spec_inf)


def test_gnorm_accumulator_matches_batch(lat2):
    rng = np.random.default_rng(9)
    fields = [random_real_field(lat2, rng) for _ in range(6)]
    times = np.linspace(0.0, 0.5, 6)
    batch = g_norm(times, fields, s=1.0)
    acc = GNormAccumulator(lat2, s=1.0)
    for t, f in zip(times, fields):
        acc.update(t, f)
    assert acc.value() == pytest.approx(batch, rel=1e-12)
