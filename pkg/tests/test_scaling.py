import math

import pytest

from stepstone import (
    ScalingFamily,
    classify_regime,
    derived_ratios,
    deterministic_regime_family,
    sqrt_family,
)


def test_sqrt_family_ratios_are_all_one():
    fam = sqrt_family(32 * 32, theta=1.0)
    r = derived_ratios(fam)
    assert r.alpha_n == 1.0
    assert r.beta_n == 1.0
    assert r.gamma_n == 1.0


@pytest.mark.parametrize("n", [4, 25, 144, 1024])
def test_sqrt_family_every_perfect_square(n):
    r = derived_ratios(sqrt_family(n))
    assert r.alpha_n == r.beta_n == r.gamma_n == 1.0


def test_neutral_selection_proxy():
    fam = ScalingFamily(L=10, M=100, R=1e9, r=1.0)
    r = derived_ratios(fam)
    assert r.beta_n == pytest.approx(1e-7)
    assert r.beta_n < 1e-6


def test_ratios_are_exact_arithmetic():
    fam = ScalingFamily(L=7, M=13, R=3.5, r=2.25, theta=0.5)
    r = derived_ratios(fam)
    assert r.alpha_n == 2.25 * 13 / 49
    assert r.beta_n == 13 / 3.5
    assert r.gamma_n == 2.25 / 7
    # recomputing reproduces the stored ratios bit for bit
    assert derived_ratios(fam) == r


def test_classify_regime_thresholds():
    mk = lambda g: derived_ratios(ScalingFamily(L=1, M=1, R=1.0, r=g))
    assert classify_regime(mk(1.0), tol=1e-6) == "stochastic"
    assert classify_regime(mk(1e-12), tol=1e-6) == "deterministic"
    assert classify_regime(mk(1e-6 * 0.999), tol=1e-3) == "deterministic"
    assert classify_regime(mk(1e-6), tol=1e-7) == "stochastic"
    with pytest.raises(ValueError):
        classify_regime(mk(1.0), tol=0.0)


def test_deterministic_regime_family_gamma_shrinks():
    # ladder with alpha_n pinned near alpha and gamma_n ~ n^(1/a - 1/b) -> 0
    gammas = []
    for n in [256, 4096, 65536]:
        fam = deterministic_regime_family(n, a=1.5, b=1.0, alpha=1.0, beta=1.0)
        r = derived_ratios(fam)
        gammas.append(r.gamma_n)
        assert r.alpha_n == pytest.approx(1.0, rel=0.25)
        assert r.beta_n == pytest.approx(1.0, rel=1e-9)
    assert gammas[0] > gammas[1] > gammas[2]
    n = 4096
    assert gammas[1] == pytest.approx(n ** (1 / 1.5 - 1.0), rel=0.2)


def test_family_validation():
    with pytest.raises(ValueError):
        ScalingFamily(L=0, M=1, R=1.0, r=1.0)
    with pytest.raises(ValueError):
        ScalingFamily(L=1, M=1, R=1.0, r=1.0, theta=-0.1)
    with pytest.raises(ValueError):
        deterministic_regime_family(100, a=1.0, b=1.5)
