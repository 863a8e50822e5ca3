import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from oracles import varma11_psi
from weakarma.errors import DomainError, StabilityError
from weakarma.model import VarmaSpec
from weakarma.simulate import (BiArch1, Garch11, MultiPT, MultiPTSquared, MultiRT, ProductPT,
                               ProductPTSquared, RatioRT, RngStream, StrongGaussian, generate_noise,
                               noise_from_dict, noise_to_dict, simulate_varma)

ALL_KINDS = [StrongGaussian(), Garch11(1.0, 0.1, 0.85), ProductPT(), ProductPTSquared(), RatioRT(),
             StrongGaussian.identity(2), BiArch1(), MultiPT(), MultiPTSquared(), MultiRT()]
WEAK_KINDS = [Garch11(1.0, 0.1, 0.85), ProductPT(), ProductPTSquared(), RatioRT(), BiArch1(),
              MultiPT(), MultiPTSquared(), MultiRT()]


def _acf(x, h):
    x = x - x.mean()
    return float(np.sum(x[h:] * x[:-h]) / np.sum(x * x))


def test_garch_without_dynamics_is_standard_gaussian():
    eps = generate_noise(Garch11(1.0, 0.0, 0.0), 100_000, RngStream(1))
    assert abs(eps.var() - 1.0) < 0.02


def test_product_pt_uncorrelated():
    eps = generate_noise(ProductPT(), 100_000, RngStream(2))[:, 0]
    assert abs(_acf(eps, 1)) < 0.01


def test_ratio_rt_mean_zero():
    eps = generate_noise(RatioRT(), 100_000, RngStream(3))[:, 0]
    assert abs(eps.mean()) < 0.01


def test_product_definitions_use_presample_from_stream():
    gen = RngStream(4, 9).generator()
    eta = gen.standard_normal(6)
    assert_allclose(generate_noise(ProductPT(), 5, RngStream(4, 9))[:, 0], eta[1:] * eta[:-1])
    assert_allclose(generate_noise(ProductPTSquared(), 5, RngStream(4, 9))[:, 0], eta[1:] ** 2 * eta[:-1])
    assert_allclose(generate_noise(RatioRT(), 5, RngStream(4, 9))[:, 0], eta[1:] / (np.abs(eta[:-1]) + 1))


def test_multi_pt_definition():
    eta = RngStream(5).generator().standard_normal((7, 2))
    eps = generate_noise(MultiPT(), 5, RngStream(5))
    for t in range(5):
        s = t + 2
        assert eps[t, 0] == pytest.approx(eta[s, 0] * eta[s - 1, 1] * eta[s - 2, 0])
        assert eps[t, 1] == pytest.approx(eta[s, 1] * eta[s - 1, 0] * eta[s - 2, 1])
    eps2 = generate_noise(MultiPTSquared(), 5, RngStream(5))
    assert eps2[0, 0] == pytest.approx(eta[2, 0] ** 2 * eta[1, 1] * eta[0, 0])


def test_garch_recursion_matches_loop():
    omega, alpha, beta = 1.0, 0.1, 0.85
    eta = RngStream(6).generator().standard_normal(50)
    eps = generate_noise(Garch11(omega, alpha, beta), 50, RngStream(6))[:, 0]
    s2 = omega / (1 - alpha - beta)
    ref = [np.sqrt(s2) * eta[0]]
    for t in range(1, 50):
        s2 = omega + alpha * ref[-1] ** 2 + beta * s2
        ref.append(np.sqrt(s2) * eta[t])
    assert_allclose(eps, ref)


def test_biarch_recursion_matches_loop():
    kind = BiArch1()
    om, a = np.array(kind.omega), np.array(kind.a)
    eta = RngStream(7).generator().standard_normal((40, 2))
    eps = generate_noise(kind, 40, RngStream(7))
    h2 = np.linalg.solve(np.eye(2) - a, om)
    ref = [np.sqrt(h2) * eta[0]]
    for t in range(1, 40):
        h2 = om + a @ ref[-1] ** 2
        ref.append(np.sqrt(h2) * eta[t])
    assert_allclose(eps, np.array(ref))


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.tag)
def test_reproducible(kind):
    a = generate_noise(kind, 500, RngStream(11, 3))
    b = generate_noise(kind, 500, RngStream(11, 3))
    assert_array_equal(a, b)
    assert a.shape == (500, kind.d)


def test_stream_independence():
    a = generate_noise(StrongGaussian(), 10_000, RngStream(1, 0))[:, 0]
    b = generate_noise(StrongGaussian(), 10_000, RngStream(1, 1))[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


@pytest.mark.parametrize("kind", WEAK_KINDS, ids=lambda k: k.tag)
def test_weak_noises_are_uncorrelated(kind):
    n = 100_000
    eps = generate_noise(kind, n, RngStream(21))
    # Dependent noise inflates the iid 1/sqrt(n) standard error; use the
    # robust one, sqrt(E[x_t^2 x_{t-h}^2]) / E[x^2] / sqrt(n).
    for j in range(kind.d):
        x = eps[:, j] - eps[:, j].mean()
        for h in range(1, 6):
            se = np.sqrt(np.mean(x[h:] ** 2 * x[:-h] ** 2)) / np.mean(x**2) / np.sqrt(n)
            assert abs(_acf(eps[:, j], h)) < 3 * max(se, 1 / np.sqrt(n)), (j, h)


def test_pt_squared_shows_dependence():
    eps = generate_noise(ProductPTSquared(), 100_000, RngStream(22))[:, 0]
    assert np.corrcoef(eps[1:] ** 2, eps[:-1] ** 2)[0, 1] > 0.05


@pytest.mark.parametrize("kind", [Garch11(1.0, 0.6, 0.5), Garch11(-1.0, 0.1, 0.1),
                                  BiArch1(a=((0.9, 0.5), (0.5, 0.9))),
                                  StrongGaussian(((1.0, 2.0), (2.0, 1.0)))])
def test_invalid_parameters(kind):
    with pytest.raises(DomainError):
        generate_noise(kind, 10, RngStream(0))


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.tag)
def test_noise_json_round_trip(kind):
    assert noise_from_dict(noise_to_dict(kind)) == kind


def test_unknown_noise_kind():
    with pytest.raises(DomainError):
        noise_from_dict({"kind": "cauchy"})


def test_simulate_white_noise_equals_noise():
    x = simulate_varma(VarmaSpec.white_noise(1), [], ProductPT(), 100, RngStream(3), burnin=0)
    assert_array_equal(x, generate_noise(ProductPT(), 100, RngStream(3)))


def test_simulate_burnin_discards_prefix():
    spec = VarmaSpec.full(1, 1, 1)
    long = simulate_varma(spec, [0.5, 0.2], StrongGaussian(), 150, RngStream(3), burnin=0)
    short = simulate_varma(spec, [0.5, 0.2], StrongGaussian(), 100, RngStream(3), burnin=50)
    assert_array_equal(short, long[50:])


def test_simulate_ar1_variance():
    x = simulate_varma(VarmaSpec.full(1, 1, 0), [0.95], StrongGaussian(), 100_000, RngStream(8),
                       burnin=1000)
    assert x.var() == pytest.approx(1 / (1 - 0.95**2), rel=0.05)


def test_simulate_varma11_covariance_matches_vma_oracle():
    spec = VarmaSpec.full(2, 1, 1)
    theta = (1.2, 0.6, -0.5, 0.3, -0.6, 0.3, 0.3, 0.6)
    x = simulate_varma(spec, theta, StrongGaussian.identity(2), 200_000, RngStream(9))
    a = np.array([[1.2, -0.5], [0.6, 0.3]])
    b = np.array([[-0.6, 0.3], [0.3, 0.6]])
    gamma0 = sum(p @ p.T for p in varma11_psi(a, b, 200))
    assert_allclose(x.T @ x / x.shape[0], gamma0, rtol=0.05, atol=0.05 * np.abs(gamma0).max())


def test_simulate_rejects_unstable():
    with pytest.raises(StabilityError):
        simulate_varma(VarmaSpec.full(1, 1, 0), [1.01], StrongGaussian(), 10, RngStream(0))


def test_simulate_dimension_mismatch():
    with pytest.raises(DomainError):
        simulate_varma(VarmaSpec.full(1, 1, 0), [0.5], MultiPT(), 10, RngStream(0))


def test_substreams_are_distinct_and_reproducible():
    base = RngStream(1, 4).normals(5)
    sub = RngStream(1, 4, sub=300).normals(5)
    assert not np.allclose(base, sub)
    assert_array_equal(sub, RngStream(1, 4, sub=300).normals(5))
    assert not np.allclose(sub, RngStream(1, 4, sub=600).normals(5))
