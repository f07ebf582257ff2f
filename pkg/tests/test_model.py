"""Tests for model parameters, derived scales, and scattering."""

import json
import math

import numpy as np
import pytest

from tfcond.grids import make_grid
from tfcond.model import (
    InteractionSpec,
    ModelConfig,
    RegimeParams,
    TrapSpec,
    admissibility,
    check_assumption1,
    config_from_dict,
    derived_scales,
    load_config,
    scattering_length,
    sphere_area,
)


def test_sphere_areas():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_trap_spec():
    trap = TrapSpec(strength=2.0, s=4.0)
    assert trap.radial(2.0) == pytest.approx(32.0)
    g = make_grid(1, 8, 1.0)
    np.testing.assert_allclose(trap.on_grid(g), 2.0 * g.x_axis ** 4)
    with pytest.raises(ValueError):
        TrapSpec(strength=0.0)
    with pytest.raises(ValueError):
        TrapSpec(s=1.5)


def test_interaction_closed_form_moments():
    v = InteractionSpec("gaussian", beta=0.2)
    # integral of exp(-r^2) over R^d is pi^{d/2}
    for d in (1, 2, 3):
        assert v.integral(d) == pytest.approx(math.pi ** (d / 2.0), rel=1e-10)
    # integral |x| exp(-|x|^2) over R^3 = 4 pi * Gamma(2)/2 = 2 pi
    assert v.first_moment(3) == pytest.approx(2 * math.pi, rel=1e-10)
    # ||v||_2 = (pi/2)^{d/4}
    assert v.l2_norm(3) == pytest.approx((math.pi / 2.0) ** 0.75, rel=1e-10)
    assert v.v0() == 1.0


def test_hollow_profile_moments():
    v = InteractionSpec("hollow_gaussian", beta=0.2)
    # integral (1 - r^2) exp(-r^2) over R^3 = -pi^{3/2}/2
    assert v.integral(3) == pytest.approx(-0.5 * math.pi ** 1.5, rel=1e-10)


def test_kernel_on_grid_scaling():
    v = InteractionSpec("gaussian", beta=0.25)
    g = make_grid(1, 256, 8.0)
    N = 16
    ker = v.kernel_on_grid(g, N)
    # value at x=0 is N^{d beta}, mass is integral(v) independent of N
    assert ker.values[g.n // 2].real == pytest.approx(16 ** 0.25, rel=1e-12)
    assert g.h * np.sum(ker.values).real == pytest.approx(math.sqrt(math.pi), rel=1e-10)


def test_interaction_validation():
    with pytest.raises(ValueError):
        InteractionSpec("nonexistent")
    with pytest.raises(ValueError):
        InteractionSpec("gaussian", beta=0.4)


def test_derived_scales_values():
    trap = TrapSpec(strength=1.0, s=2.0)
    inter = InteractionSpec("gaussian", beta=0.2)
    intv = math.pi ** 1.5
    # choose g so that g * integral(v) = 1 => epsilon = 1 exactly
    reg = RegimeParams(N=10_000, beta=0.2, g_N=1.0 / intv)
    sc = derived_scales(trap, inter, reg)
    assert sc.epsilon == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(sc.gn_exponents, (2.0 / 7.0, 1.0 / 6.0), rtol=1e-12)
    assert sc.interaction_range == pytest.approx(10_000 ** -0.2, rel=1e-12)

    reg2 = RegimeParams(N=10_000, beta=0.2, g_N=100.0)
    sc2 = derived_scales(trap, inter, reg2)
    assert sc2.healing_length == pytest.approx(1e-2 * 100 ** -0.3, rel=1e-12)
    assert sc2.tf_radius == pytest.approx(100 ** 0.2, rel=1e-12)
    # epsilon shrinks with coupling: scaled gap floor ~ epsilon^2
    assert sc2.epsilon < sc.epsilon


def test_derived_scales_errors():
    trap, inter = TrapSpec(), InteractionSpec()
    with pytest.raises(ValueError):
        derived_scales(trap, inter, RegimeParams(N=10, beta=0.2, g_N=0.0))
    with pytest.raises(ValueError):
        derived_scales(trap, inter, RegimeParams(N=10, beta=0.5, g_N=1.0))
    with pytest.raises(ValueError):
        derived_scales(trap, InteractionSpec("zero"), RegimeParams(N=10, beta=0.2, g_N=1.0))


def test_gn_exponents_positive_in_valid_range():
    trap = TrapSpec(s=3.0)
    for beta in np.linspace(0.02, 0.33, 12):
        reg = RegimeParams(N=100, beta=float(beta), g_N=1.0)
        rep = admissibility(trap, reg)
        e1, e2 = (
            (1 - 3 * beta) * (trap.s + 3) / (trap.s + 5),
            (trap.s + 3) * beta / (2 * (trap.s + 1)),
        )
        if beta < 1 / 3:
            assert e1 > 0 and e2 > 0


def test_admissibility_report():
    trap = TrapSpec(s=2.0)
    rep = admissibility(trap, RegimeParams(N=10 ** 6, beta=0.2, g_N=5.0))
    # margins g / N^{2/7} and g / N^{1/6}
    assert rep.thm1_margins[1] == pytest.approx(5.0 / 10.0, rel=1e-12)
    assert rep.thm1_ok
    assert not rep.thm2_ok  # beta = 0.2 >= 1/6

    rep2 = admissibility(trap, RegimeParams(N=10 ** 6, beta=0.4, g_N=5.0))
    assert not rep2.thm1_ok

    rep3 = admissibility(
        trap, RegimeParams(N=1000, beta=0.1, g_N=1.0, lambda_weight=0.5)
    )
    assert rep3.lambda_interval == pytest.approx((0.3, 0.7))
    assert rep3.thm2_ok

    rep4 = admissibility(trap, RegimeParams(N=1000, beta=0.1, g_N=1.0))
    assert not rep4.thm2_ok  # no counting exponent supplied


def test_check_assumption1_gaussian_passes():
    grid = make_grid(3, 32, 8.0)
    rep = check_assumption1(InteractionSpec("gaussian"), grid)
    assert rep.nonzero and rep.positive_type and rep.symmetric and rep.tail_ok
    assert rep.ok
    assert rep.first_moment == pytest.approx(2 * math.pi, rel=1e-9)
    assert rep.min_fourier_coeff >= -1e-12


def test_check_assumption1_rejects_sign_changing_transform():
    grid = make_grid(3, 32, 8.0)
    rep = check_assumption1(InteractionSpec("hollow_gaussian"), grid)
    assert rep.nonzero and rep.symmetric
    assert not rep.positive_type
    assert rep.min_fourier_coeff < 0
    assert not rep.ok


def test_check_assumption1_rejects_zero_profile():
    grid = make_grid(1, 64, 8.0)
    rep = check_assumption1(InteractionSpec("zero"), grid)
    assert not rep.nonzero
    assert not rep.ok


def test_scattering_free_case_gives_zero():
    res = scattering_length(InteractionSpec("gaussian"), kappa=0.0)
    assert abs(res.a) < 1e-12
    assert res.a_born == 0.0


def test_scattering_born_regime():
    res = scattering_length(InteractionSpec("gaussian"), kappa=1e-3)
    assert res.a_born == pytest.approx(1e-3 * math.sqrt(math.pi) / 8.0, rel=1e-12)
    # frozen reference from tests/oracles/scattering_oracle.py (DOP853 route)
    assert res.a == pytest.approx(2.215175725365e-04, rel=1e-8)
    assert 0.99 <= res.a / res.a_born <= 1.01


def test_scattering_moderate_coupling():
    res = scattering_length(InteractionSpec("gaussian"), kappa=1.0)
    # frozen reference from tests/oracles/scattering_oracle.py
    assert res.a == pytest.approx(1.885034999349e-01, rel=1e-8)
    # repulsive potential: true a below Born approximation
    assert res.a < res.a_born
    # profile f = u/r approaches 1 - a/r
    assert res.f[-1] == pytest.approx(1.0 - res.a / res.r[-1], rel=1e-8)


def test_scattering_mesh_and_range_guards():
    with pytest.raises(ValueError):
        scattering_length(InteractionSpec("gaussian"), kappa=1.0, r_max=2.0)
    with pytest.raises(ValueError):
        scattering_length(InteractionSpec("gaussian"), kappa=1.0, mesh=32)


def test_effective_scattering_ratio_decreases_with_n():
    # ratio (a of g v_N) / N^{-beta} equals a(kappa_eff) with kappa_eff = g N^{beta-1}
    inter = InteractionSpec("gaussian", beta=0.2)
    ratios = []
    for N in (10, 100, 1000):
        kappa_eff = 1.0 * N ** (inter.beta - 1.0)
        ratios.append(scattering_length(inter, kappa_eff).a)
    assert ratios[0] > ratios[1] > ratios[2] > 0


def test_config_roundtrip(tmp_path):
    data = {
        "trap": {"strength": 1.0, "s": 2.0},
        "interaction": {"profile": "gaussian", "beta": 0.2},
        "regime": {"N": 1000, "g_N": 10.0, "lambda_weight": 0.5},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    cfg = load_config(path)
    assert cfg.trap.s == 2.0
    assert cfg.interaction.profile == "gaussian"
    assert cfg.regime.N == 1000 and cfg.regime.beta == 0.2
    assert cfg.to_dict()["regime"]["g_N"] == 10.0
    sc = cfg.scales()
    assert sc.tf_radius == pytest.approx(10.0 ** 0.2)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown top-level"):
        config_from_dict({"trap": {}, "extra": 1})
    with pytest.raises(ValueError, match="trap"):
        config_from_dict({"trap": {"strenght": 1.0}})
    with pytest.raises(ValueError, match="regime"):
        config_from_dict({"regime": {"N": 10, "g_N": 1.0, "mode": "x"}})
    with pytest.raises(ValueError, match="N and g_N"):
        config_from_dict({"regime": {"N": 10}})


def test_config_defaults_without_regime():
    cfg = config_from_dict({})
    assert isinstance(cfg, ModelConfig)
    with pytest.raises(ValueError):
        cfg.scales()
