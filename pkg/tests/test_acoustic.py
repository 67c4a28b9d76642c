import numpy as np
import pytest

from machflow.acoustic import (
    OscCoeffs,
    apply_acoustic,
    decompose,
    eigenmode,
    eigenvalue,
    entropy_inner,
    entropy_norm,
    filter_phase,
    project_oscillating,
    reconstruct_osc,
    zero_osc,
)
from machflow.lattice import SpectralField, divergence, gradient

from conftest import random_real_field


def test_eigenvalue_oracle(lat2, consts2):
    # lambda = i c0 alpha sg(k) |k|, with c0 = sqrt(2) here
    lam = eigenvalue(1, (2, 1), lat2, consts2)
    assert lam == pytest.approx(1j * np.sqrt(2.0) * np.sqrt(5.0))
    assert eigenvalue(-1, (2, 1), lat2, consts2) == pytest.approx(-lam)
    assert eigenvalue(1, (-2, -1), lat2, consts2) == pytest.approx(-lam)


def test_eigenmode_residual_and_normalization(lat2, consts2):
    for alpha in (1, -1):
        for n in ((1, 0), (2, 1), (-3, 5), (0, -4)):
            h = eigenmode(alpha, n, lat2, consts2)
            lam = eigenvalue(alpha, n, lat2, consts2)
            resid = SpectralField(
                lat2, apply_acoustic(h, consts2).data - lam * h.data
            )
            assert entropy_norm(resid, consts2) < 1e-12
            assert entropy_norm(h, consts2) == pytest.approx(1.0, abs=1e-12)


def test_eigenmode_orthogonality(lat2, consts2):
    hp = eigenmode(1, (2, 1), lat2, consts2)
    hm = eigenmode(-1, (2, 1), lat2, consts2)
    ho = eigenmode(1, (1, 1), lat2, consts2)
    assert abs(entropy_inner(hp, hm, consts2)) < 1e-13
    assert abs(entropy_inner(hp, ho, consts2)) < 1e-13


def test_skew_adjointness(lat2, consts2):
    rng = np.random.default_rng(0)
    for _ in range(5):
        v1 = random_real_field(lat2, rng)
        v2 = random_real_field(lat2, rng)
        s = entropy_inner(v1, apply_acoustic(v2, consts2), consts2)
        s += entropy_inner(apply_acoustic(v1, consts2), v2, consts2)
        scale = entropy_norm(v1, consts2) * entropy_norm(v2, consts2)
        assert abs(s) < 1e-10 * scale


def test_decompose_reconstruct(lat2, consts2):
    rng = np.random.default_rng(1)
    v = random_real_field(lat2, rng)
    kernel, osc = decompose(v, consts2)
    recon = kernel.to_field().data + reconstruct_osc(osc).data
    np.testing.assert_allclose(recon, v.data, atol=1e-13)
    # parts are H-orthogonal
    pv = kernel.to_field(include_mean=False)
    ov = reconstruct_osc(osc)
    assert abs(entropy_inner(pv, ov, consts2)) < 1e-12
    # kernel velocity is divergence-free; density obeys the static relation
    div = divergence(SpectralField(lat2, kernel.omega, True))
    assert np.max(np.abs(div.data)) < 1e-13
    grad_p = (
        consts2.p_rho0 * pv.data[0] + consts2.p_theta0 * pv.data[3]
    ) * lat2.nonzero
    assert np.max(np.abs(grad_p)) < 1e-13


def test_coefficients_are_entropy_projections(lat2, consts2):
    rng = np.random.default_rng(2)
    v = random_real_field(lat2, rng)
    _, osc = decompose(v, consts2)
    for alpha, n in ((1, (2, 1)), (-1, (0, 3)), (1, (-4, 2))):
        h = eigenmode(alpha, n, lat2, consts2)
        assert osc.get(alpha, n) == pytest.approx(
            complex(entropy_inner(v, h, consts2)), abs=1e-12
        )


def test_projection_idempotence(lat2, consts2):
    rng = np.random.default_rng(3)
    v = random_real_field(lat2, rng)
    kernel, osc = decompose(v, consts2)
    k2, o2 = decompose(kernel.to_field(include_mean=False), consts2)
    assert np.max(np.abs(o2.data)) < 1e-12
    np.testing.assert_allclose(k2.omega, kernel.omega, atol=1e-13)
    _, o3 = decompose(reconstruct_osc(osc), consts2)
    np.testing.assert_allclose(o3.data, osc.data, atol=1e-12)
    np.testing.assert_allclose(
        project_oscillating(v, consts2).data,
        reconstruct_osc(osc).data,
        atol=1e-12,
    )


def test_filter_isometry_group(lat2, consts2):
    rng = np.random.default_rng(4)
    _, osc = decompose(random_real_field(lat2, rng), consts2)
    for tau in (0.3, -2.0, 17.5):
        f = filter_phase(osc, tau)
        assert abs(f.norm() - osc.norm()) < 1e-12
        back = filter_phase(f, -tau)
        np.testing.assert_allclose(back.data, osc.data, atol=1e-12)
    # group law
    a = filter_phase(filter_phase(osc, 0.7), 1.1)
    b = filter_phase(osc, 1.8)
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_filter_preserves_reality(lat2, consts2):
    rng = np.random.default_rng(5)
    _, osc = decompose(random_real_field(lat2, rng), consts2)
    assert osc.conj_symmetry_defect() < 1e-13
    assert filter_phase(osc, 2.3).conj_symmetry_defect() < 1e-13


def test_zero_mode_carries_no_oscillation(lat2, consts2):
    osc = zero_osc(lat2, consts2)
    osc.data += 1.0              # post-init hook must keep the zero mode 0
    osc = OscCoeffs(lat2, consts2, osc.data)
    assert osc.get(1, (0, 0)) == 0.0
