"""
Least-squares adversarial losses and the score-derived reweighting schemes.

    vanilla     D: mean (D(y)-1)^2 + mean D(G(x))^2          G: mean (D(G(x))-1)^2
    wegan       G term weighted by gen_weights(eta_gen)
    gewegan     G term weighted by gen_weights(eta_gen), D fake term by dis_weights(eta_dis)
    gimgan      D fake term uses soft labels (1-rho)*clamp(D(G(x)), 0, 1)
    gewegimgan  gewegan weights plus gimgan soft labels

Weights and labels are computed from detached scores and enter the graph as constants.
The real term of the discriminator loss is never reweighted.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.config import TrainConfig
from src.errors import ConfigError, DimensionError

REAL_TARGET = 1.0

ScoresLike = Union[Tensor, np.ndarray]


@dataclass(frozen=True)
class VariantSelector:
    variant: str = "vanilla"
    eta_gen: float = 0.0
    eta_dis: float = 0.0
    rho_gen: float = 1.0

    def __post_init__(self):
        if self.variant not in ("vanilla", "wegan", "gewegan", "gimgan", "gewegimgan"):
            raise ConfigError(f"unknown variant '{self.variant}'")
        if self.eta_gen < 0 or self.eta_dis < 0:
            raise ConfigError(f"eta must be nonnegative, got eta_gen={self.eta_gen} eta_dis={self.eta_dis}")
        if not 0.0 <= self.rho_gen <= 1.0:
            raise ConfigError(f"rho_gen must be in [0, 1], got {self.rho_gen}")

    @classmethod
    def from_config(cls, config: TrainConfig) -> "VariantSelector":
        return cls(config.variant, config.eta_gen, config.eta_dis, config.rho_gen)

    @property
    def weights_generator(self) -> bool:
        return self.variant in ("wegan", "gewegan", "gewegimgan")

    @property
    def weights_discriminator(self) -> bool:
        return self.variant in ("gewegan", "gewegimgan")

    @property
    def soft_labels(self) -> bool:
        return self.variant in ("gimgan", "gewegimgan")


@dataclass(frozen=True)
class LossWeights:
    lambda_c: float = 0.3
    lambda_e: float = 1.0

    def __post_init__(self):
        if self.lambda_c < 0 or self.lambda_e < 0:
            raise ConfigError(f"loss weights must be nonnegative, got {self.lambda_c}, {self.lambda_e}")

    @classmethod
    def from_config(cls, config: TrainConfig) -> "LossWeights":
        return cls(config.lambda_c, config.lambda_e)


@dataclass
class GeneratorLossParts:
    adv_xy: Tensor
    adv_yx: Tensor
    cycle: Tensor
    energy: Tensor


def _scores(scores: ScoresLike) -> np.ndarray:
    values = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    values = values.reshape(-1)
    if values.size < 1:
        raise DimensionError("need at least one score")
    return values


def uniform_weights(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def _normalised_exp_weights(scores: ScoresLike, eta: float) -> np.ndarray:
    d = _scores(scores)
    w = np.exp(eta * np.minimum(0.0, d))
    return w / w.sum()


def gen_weights(scores: ScoresLike, eta_gen: float) -> np.ndarray:
    """w_j = exp(eta * min(0, D_j)), normalised to sum 1. Samples that fool D weigh more."""
    if eta_gen < 0:
        raise ConfigError(f"eta_gen must be nonnegative, got {eta_gen}")
    return _normalised_exp_weights(scores, eta_gen)


def dis_weights(scores_fake: ScoresLike, eta_dis: float) -> np.ndarray:
    """Same formula as gen_weights, applied to the discriminator's fake-sample terms."""
    if eta_dis < 0:
        raise ConfigError(f"eta_dis must be nonnegative, got {eta_dis}")
    return _normalised_exp_weights(scores_fake, eta_dis)


def soft_labels(scores_fake: ScoresLike, rho_gen: float) -> np.ndarray:
    """(1 - rho) * clamp(D(G(x)), 0, 1); rho = 1 gives the hard label 0."""
    if not 0.0 <= rho_gen <= 1.0:
        raise ConfigError(f"rho_gen must be in [0, 1], got {rho_gen}")
    return (1.0 - rho_gen) * np.clip(_scores(scores_fake), 0.0, 1.0)


def weight_entropy(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=np.float64)
    nz = w[w > 0]
    return float(-np.sum(nz * np.log(nz)))


def discriminator_fake_targets(fake_scores: ScoresLike, variant: VariantSelector) -> Tuple[np.ndarray, np.ndarray]:
    """(weights, labels) for the fake term of the discriminator loss."""
    d = _scores(fake_scores)
    weights = dis_weights(d, variant.eta_dis) if variant.weights_discriminator else uniform_weights(d.size)
    labels = soft_labels(d, variant.rho_gen) if variant.soft_labels else np.zeros(d.size)
    return weights, labels


def generator_weights(fake_scores: ScoresLike, variant: VariantSelector) -> np.ndarray:
    d = _scores(fake_scores)
    return gen_weights(d, variant.eta_gen) if variant.weights_generator else uniform_weights(d.size)


def d_loss(real_scores: Tensor, fake_scores: Tensor, variant: VariantSelector) -> Tensor:
    """Real term against 1 plus the variant's fake term; fake_scores must come from detached fakes."""
    if real_scores.shape != fake_scores.shape:
        raise DimensionError(f"real scores {real_scores.shape} vs fake scores {fake_scores.shape}")
    weights, labels = discriminator_fake_targets(fake_scores, variant)
    real_term = ops.square_error(real_scores, REAL_TARGET, uniform_weights(real_scores.size))
    fake_term = ops.square_error(fake_scores, labels, weights)
    return real_term + fake_term


def g_adv_loss(fake_scores: Tensor, variant: VariantSelector) -> Tensor:
    return ops.square_error(fake_scores, REAL_TARGET, generator_weights(fake_scores, variant))


def cycle_loss(x: Tensor, x_cyc: Tensor, y: Tensor, y_cyc: Tensor) -> Tensor:
    return ops.l1_distance(x_cyc, x) + ops.l1_distance(y_cyc, y)


def energy_loss(x: Tensor, gx: Tensor, y: Tensor, gy: Tensor, lambda_e: float) -> Tensor:
    """lambda_e times the L1 gap between per-frame bin means of each conversion and its source."""
    if x.shape != gx.shape or y.shape != gy.shape:
        raise DimensionError(f"energy_loss: {x.shape}/{gx.shape} and {y.shape}/{gy.shape}")
    gap_x = ops.l1_distance(ops.frame_mean(gx), ops.frame_mean(x))
    gap_y = ops.l1_distance(ops.frame_mean(gy), ops.frame_mean(y))
    return ops.scale(gap_x + gap_y, lambda_e)


def total_generator_loss(parts: GeneratorLossParts, weights: LossWeights) -> Tensor:
    return parts.adv_xy + parts.adv_yx + ops.scale(parts.cycle, weights.lambda_c) + parts.energy
