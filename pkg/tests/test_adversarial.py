import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from src.adversarial import (
    GeneratorLossParts,
    LossWeights,
    VariantSelector,
    cycle_loss,
    d_loss,
    dis_weights,
    energy_loss,
    g_adv_loss,
    gen_weights,
    soft_labels,
    total_generator_loss,
    weight_entropy,
)
from src.autodiff import backward, constant, parameter
from src.errors import ConfigError

VANILLA = VariantSelector("vanilla")

scores_strategy = st.lists(st.floats(-50.0, 50.0, allow_nan=False), min_size=1, max_size=16).map(np.array)
eta_strategy = st.floats(0.0, 5.0)


# --- weights and labels ---


def test_gen_weights_worked_example():
    np.testing.assert_allclose(gen_weights(np.array([-1.0, 0.5]), 0.1), [0.475021, 0.524979], atol=1e-6)


def test_gen_weights_degenerate_cases():
    np.testing.assert_array_equal(gen_weights(np.array([-3.0, 0.2, 1.0, -0.5]), 0.0), np.full(4, 0.25))
    assert gen_weights(np.array([-7.0]), 2.0).tolist() == [1.0]


def test_dis_weights_examples():
    np.testing.assert_array_equal(dis_weights(np.array([-1.0, 3.0]), 0.0), [0.5, 0.5])
    np.testing.assert_array_equal(dis_weights(np.array([0.0, 0.4, 2.0]), 0.9), np.full(3, 1 / 3))
    np.testing.assert_array_equal(dis_weights(np.array([-2.0, -2.0]), 0.9), [0.5, 0.5])


def test_soft_label_examples():
    np.testing.assert_array_equal(soft_labels(np.array([-1.0, 0.3, 2.0]), 1.0), [0.0, 0.0, 0.0])
    assert soft_labels(np.array([0.8]), 0.0)[0] == 0.8
    assert abs(soft_labels(np.array([0.8]), 0.9)[0] - 0.08) <= 1e-12


def test_out_of_range_hyper_parameters_are_rejected():
    with pytest.raises(ConfigError):
        gen_weights(np.array([0.0]), -0.1)
    with pytest.raises(ConfigError):
        soft_labels(np.array([0.0]), 1.5)
    with pytest.raises(ConfigError):
        VariantSelector("wgan")


@given(scores=scores_strategy, eta=eta_strategy)
def test_weights_sum_to_one(scores, eta):
    assert abs(gen_weights(scores, eta).sum() - 1.0) <= 1e-12
    assert abs(dis_weights(scores, eta).sum() - 1.0) <= 1e-12


@given(scores=scores_strategy, eta=eta_strategy)
def test_weights_are_monotone_in_score(scores, eta):
    weights = gen_weights(scores, eta)
    order = np.argsort(scores, kind="stable")
    assert np.all(np.diff(weights[order]) >= 0.0)


@given(scores=st.lists(st.floats(-5.0, 5.0), min_size=1, max_size=16).map(np.array))
def test_small_eta_approaches_uniform(scores):
    weights = gen_weights(scores, 1e-7)
    assert np.max(np.abs(weights - 1.0 / scores.size)) <= 1e-6


@given(scores=scores_strategy, rho=st.floats(0.0, 1.0))
def test_soft_labels_stay_in_unit_interval(scores, rho):
    labels = soft_labels(scores, rho)
    assert np.all((labels >= 0.0) & (labels <= 1.0))


def test_weight_entropy_bounds():
    assert weight_entropy(np.array([1.0])) == 0.0
    assert weight_entropy(np.full(4, 0.25)) == pytest.approx(np.log(4))


# --- losses ---


def test_d_loss_examples():
    assert d_loss(constant([1.0]), constant([0.0]), VANILLA).item() == 0.0
    assert d_loss(constant([0.5]), constant([0.5]), VANILLA).item() == pytest.approx(0.5)


def test_g_adv_loss_examples():
    assert g_adv_loss(constant([1.0]), VANILLA).item() == 0.0
    wegan = VariantSelector("wegan", eta_gen=0.1)
    assert g_adv_loss(constant([-0.4]), wegan).item() == g_adv_loss(constant([-0.4]), VANILLA).item()
    assert g_adv_loss(constant([-1.0, 0.5]), wegan).item() == pytest.approx(2.031329, abs=1e-6)


def test_gimgan_rho_one_matches_vanilla_bitwise():
    real, fake = constant([0.9, -0.2, 0.4]), constant([0.3, 0.7, -1.1])
    gim = VariantSelector("gimgan", rho_gen=1.0)
    assert d_loss(real, fake, gim).item() == d_loss(real, fake, VANILLA).item()


def test_gewegimgan_collapses_to_its_parents_bitwise():
    real, fake = constant([0.9, -0.2, 0.4, 1.3]), constant([0.3, 0.7, -1.1, -0.4])
    no_eta = VariantSelector("gewegimgan", eta_gen=0.0, eta_dis=0.0, rho_gen=0.9)
    gim = VariantSelector("gimgan", rho_gen=0.9)
    assert d_loss(real, fake, no_eta).item() == d_loss(real, fake, gim).item()
    assert g_adv_loss(fake, no_eta).item() == g_adv_loss(fake, gim).item()

    hard = VariantSelector("gewegimgan", eta_gen=0.9, eta_dis=0.9, rho_gen=1.0)
    gewe = VariantSelector("gewegan", eta_gen=0.9, eta_dis=0.9)
    assert d_loss(real, fake, hard).item() == d_loss(real, fake, gewe).item()
    assert g_adv_loss(fake, hard).item() == g_adv_loss(fake, gewe).item()


def test_gewegan_weights_only_the_fake_term():
    real, fake = constant([-3.0, 2.0]), constant([-1.0, 0.5])
    gewe = VariantSelector("gewegan", eta_gen=0.9, eta_dis=0.9)
    w = dis_weights(fake.data, 0.9)
    expected = np.mean((real.data - 1.0) ** 2) + np.sum(w * fake.data**2)
    assert d_loss(real, fake, gewe).item() == pytest.approx(expected, rel=1e-12)


def test_fake_score_gradient_uses_detached_targets():
    fake = parameter([0.6, -0.5])
    variant = VariantSelector("gewegimgan", eta_gen=0.9, eta_dis=0.9, rho_gen=0.9)
    grads = backward(d_loss(constant([1.0, 1.0]), fake, variant))
    w = dis_weights(fake.data, 0.9)
    labels = soft_labels(fake.data, 0.9)
    np.testing.assert_allclose(grads[fake], 2.0 * w * (fake.data - labels), rtol=1e-12)


def test_cycle_loss_examples(rng):
    x = constant(rng.standard_normal((1, 1, 32, 16)))
    y = constant(rng.standard_normal((1, 1, 32, 16)))
    assert cycle_loss(x, x, y, y).item() == 0.0
    assert cycle_loss(x, constant(x.data + 1.0), y, y).item() == pytest.approx(1.0)


def test_energy_loss_examples(rng):
    x = rng.standard_normal((2, 1, 32, 16))
    y = rng.standard_normal((2, 1, 32, 16))
    assert energy_loss(constant(x), constant(x), constant(y), constant(y), 1.0).item() == 0.0
    shifted = energy_loss(constant(x), constant(x + 0.7), constant(y), constant(y), 1.0).item()
    assert shifted == pytest.approx(0.7, rel=1e-12)
    permuted = x[:, :, rng.permutation(32), :]
    assert energy_loss(constant(x), constant(permuted), constant(y), constant(y), 1.0).item() == pytest.approx(
        0.0, abs=1e-12
    )
    assert energy_loss(constant(x), constant(x + 0.7), constant(y), constant(y), 0.0).item() == 0.0


def test_total_generator_loss_example():
    parts = GeneratorLossParts(constant(0.5), constant(0.5), constant(2.0), constant(0.1))
    assert total_generator_loss(parts, LossWeights(lambda_c=0.3)).item() == pytest.approx(1.7)
    zero = GeneratorLossParts(constant(0.0), constant(0.0), constant(0.0), constant(0.0))
    assert total_generator_loss(zero, LossWeights()).item() == 0.0
