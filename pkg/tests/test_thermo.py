import numpy as np
import pytest

from machflow.thermo import (
    derive_constants,
    entropy_weight_matrix,
    from_expressions,
    ideal_gas,
    validate_eos,
)

VOL = (2 * np.pi) ** 2


def test_validate_ideal_gas():
    rep = validate_eos(ideal_gas(1.0), (1.0, 1.0))
    assert rep["ok"]
    assert rep["compat_residual"] < 1e-12


def test_validate_flags_incompatible_eos():
    eos = ideal_gas(1.0)
    eos.e_rho = lambda r, t: 1.0 + 0 * r      # breaks Maxwell compatibility
    rep = validate_eos(eos, (1.0, 1.0))
    assert not rep["ok"]
    assert not rep["checks"]["compatibility"]


def test_constants_ideal_gas_oracles():
    # frozen by hand for the ideal gas, c_v = rho0 = theta0 = 1 on the unit
    # 2-torus: c0 = sqrt(2), c_N = 1/(4 pi), weight = identity
    c = derive_constants(ideal_gas(1.0), 1.0, 1.0, VOL, 2)
    assert c.c0 == pytest.approx(np.sqrt(2.0))
    assert c.c_N == pytest.approx(1.0 / (4 * np.pi))
    np.testing.assert_allclose(c.weight_diag, np.ones(4))
    np.testing.assert_allclose(entropy_weight_matrix(c), np.eye(4))
    assert c.C[1] == pytest.approx(-1.0)
    assert c.C[3] == pytest.approx(1.0)
    assert c.C[4] == pytest.approx(0.0)
    # nu_c = ((2N-2)/N) mu = 0.1; mu_bar = 0.05 + kappa/(2 c0^2) = 0.075
    assert c.nu0 == pytest.approx(0.1)
    assert c.mu_bar == pytest.approx(0.075)
    assert c.mu_bar_printed == pytest.approx(
        (0.1 + 0.1 / 2.0) * (c.c_N * c.c0) ** 2
    )


def test_constants_nontrivial_state():
    # at (rho0, theta0) = (2, 3): p_rho = 3, p_theta = 2, e_theta = c_v
    c = derive_constants(ideal_gas(c_v=1.5), 2.0, 3.0, VOL, 2)
    assert c.c0 == pytest.approx(np.sqrt(3.0 + 3.0 * 4.0 / (4.0 * 1.5)))
    np.testing.assert_allclose(
        c.weight_diag, [3.0 / 6.0, 2.0 / 3.0, 2.0 / 3.0, 2.0 * 1.5 / 9.0]
    )


def test_expression_eos_matches_ideal():
    sym = from_expressions("rho*theta", "theta")
    ref = ideal_gas(1.0)
    a = derive_constants(sym, 1.2, 0.9, VOL, 2)
    b = derive_constants(ref, 1.2, 0.9, VOL, 2)
    for name in ("c0", "c_N", "mu_bar", "p_rho0", "p_theta0", "e_theta0"):
        assert getattr(a, name) == pytest.approx(getattr(b, name))
    assert a.C == pytest.approx(b.C)


def test_inadmissible_state_raises():
    eos = from_expressions("-rho*theta", "theta")    # p_rho < 0
    with pytest.raises(ValueError):
        derive_constants(eos, 1.0, 1.0, VOL, 2)
