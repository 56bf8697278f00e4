"""
Acceptance suites behind `cli verify`: gradient checks, algebraic invariants and the toy
conversion evaluation. Every suite returns a SuiteResult that serialises to JSON.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from src.adversarial import dis_weights, gen_weights, soft_labels
from src.autodiff import ops
from src.autodiff.gradcheck import away_from_zero, grad_check
from src.autodiff.tensor import backward, constant
from src.checkpoint import TrainerState
from src.config import TOY_X, TOY_Y, TrainConfig, ToyDomainSpec
from src.data import energy_deviation, make_toy_corpora, peaks_match
from src.features import apply_norm, build_mel_filterbank, fit_norm, invert_norm, mel_envelope
from src.networks import (
    NetScale,
    build_discriminator,
    build_generator,
    discriminator_forward,
    discriminator_param_count,
    generator_forward,
    generator_param_count,
)
from src.trainer import convert, train

logger = logging.getLogger(__name__)

FULL_GENERATOR_PARAMS = 5_775_361
FULL_DISCRIMINATOR_PARAMS = 4_886_593
TOY_ACCURACY_THRESHOLD = 0.8
TOY_HELD_OUT = 50
TOY_EVAL_SEED_OFFSET = 10_000
COLLAPSE_STEPS = 200

# (check name, reference run, run that must reproduce it bit for bit)
COLLAPSE_IDENTITIES = [
    ("gimgan_rho1_equals_vanilla", {"variant": "vanilla", "batch_size": 1},
     {"variant": "gimgan", "rho_gen": 1.0, "batch_size": 1}),
    ("wegan_m1_equals_vanilla", {"variant": "vanilla", "batch_size": 1}, {"variant": "wegan", "batch_size": 1}),
    ("gewegan_eta0_equals_vanilla", {"variant": "vanilla", "batch_size": 4},
     {"variant": "gewegan", "eta_gen": 0.0, "eta_dis": 0.0, "batch_size": 4}),
    ("gewegimgan_eta0_equals_gimgan", {"variant": "gimgan", "batch_size": 4},
     {"variant": "gewegimgan", "eta_gen": 0.0, "eta_dis": 0.0, "batch_size": 4}),
    ("gewegimgan_rho1_equals_gewegan", {"variant": "gewegan"}, {"variant": "gewegimgan", "rho_gen": 1.0}),
]


@dataclass
class SuiteResult:
    suite: str
    checks: List[Dict[str, Any]] = field(default_factory=list)
    report: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check["passed"] for check in self.checks)

    def add(self, name: str, passed: bool, **detail: Any) -> None:
        self.checks.append({"name": name, "passed": bool(passed), **detail})

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"suite": self.suite, "passed": self.passed, "checks": self.checks}
        if self.report:
            out["report"] = self.report
        return out


# --- gradcheck ---


def _gradcheck_cases(rng: np.random.Generator) -> List[Tuple[str, Callable, List[np.ndarray], Optional[int]]]:
    # Instance norm over 2x2 maps is too curved for central differences at the default step;
    # both networks see at least 4x4 maps after their last downsample.
    gen_scale = NetScale(width_mult=1 / 64, patch_bins=16, patch_frames=16)
    dis_scale = NetScale(width_mult=1 / 64, patch_bins=64, patch_frames=64)
    g = build_generator(gen_scale, seed=1)
    d = build_discriminator(dis_scale, seed=2)
    g_names = [name for name, _ in g.named()]
    d_names = [name for name, _ in d.named()]

    def generator_fn(x, *params):
        for name, value in zip(g_names, params):
            g.tensors[name] = value
        return generator_forward(g, x)

    def discriminator_fn(x, *params):
        for name, value in zip(d_names, params):
            d.tensors[name] = value
        return ops.scale(ops.total(discriminator_forward(d, x)), 1.0 / x.shape[0])

    return [
        ("conv2d_k3s1", lambda x, w, b: ops.conv2d(x, w, b, stride=1, padding=1),
         [rng.standard_normal((1, 2, 4, 6)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)], None),
        ("conv2d_k2s2", lambda x, w, b: ops.conv2d(x, w, b, stride=2),
         [rng.standard_normal((2, 2, 4, 6)), rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(3)], None),
        ("conv_transpose2d", ops.conv_transpose2d,
         [rng.standard_normal((1, 3, 2, 3)), rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(2)], None),
        ("instance_norm2d", ops.instance_norm2d,
         [rng.standard_normal((1, 3, 4, 4)), rng.standard_normal(3), rng.standard_normal(3)], None),
        ("relu", ops.relu, [away_from_zero(rng, (3, 4))], None),
        ("leaky_relu", ops.leaky_relu, [away_from_zero(rng, (3, 4))], None),
        ("dense", ops.dense, [rng.standard_normal((2, 5)), rng.standard_normal((5, 3)), rng.standard_normal(3)], None),
        ("l1_distance", ops.l1_distance, [away_from_zero(rng, (2, 3)), np.zeros((2, 3))], None),
        ("square_error", lambda a: ops.square_error(a, 1.0), [rng.standard_normal(4)], None),
        ("frame_mean", ops.frame_mean, [rng.standard_normal((2, 1, 4, 5))], None),
        ("generator_forward", generator_fn,
         [rng.standard_normal((1, 1, 16, 16))] + [t.data.copy() for t in g.parameters()], 12),
        ("discriminator_forward", discriminator_fn,
         [rng.standard_normal((2, 1, 64, 64))] + [t.data.copy() for t in d.parameters()], 12),
    ]


def run_gradcheck(seed: int = 0) -> SuiteResult:
    result = SuiteResult("gradcheck")
    rng = np.random.default_rng(seed)
    for name, fn, inputs, max_entries in _gradcheck_cases(rng):
        report = grad_check(fn, inputs, name=name, max_entries=max_entries, seed=seed)
        logger.debug(f"[Verify] {name}: max rel err {report.max_error:.3e}")
        result.add(name, report.passed, max_rel_error=report.max_error, tolerance=report.tolerance)
    return result


# --- invariants ---


def _collapse_metrics(variant_config: Dict[str, Any], seed: int, steps: int) -> List[Any]:
    corpus_x, corpus_y = make_toy_corpora(seed, patches=6, frames=32)
    config = TrainConfig(
        seed=seed, iterations=steps, width_mult=1 / 32, patch_frames=32, **variant_config
    )
    return train(config, corpus_x, corpus_y).metrics


def _check_collapse(result: SuiteResult, seed: int, steps: int) -> None:
    for label, reference_config, variant_config in COLLAPSE_IDENTITIES:
        reference = _collapse_metrics(reference_config, seed, steps)
        collapsed = _collapse_metrics(variant_config, seed, steps)
        result.add(label, reference == collapsed, steps=steps)


def _relative_gap(a, b) -> float:
    flat_a = np.concatenate([g.reshape(-1) for g in a])
    flat_b = np.concatenate([g.reshape(-1) for g in b])
    return float(np.max(np.abs(flat_a - flat_b))) / max(float(np.max(np.abs(flat_b))), 1e-300)


def _check_gimgan_scaling(result: SuiteResult, rng: np.random.Generator, rho: float = 0.9) -> None:
    """
    Soft-label fake term against the hard-label one, scores pre-clamped into [0, 1].

    The loss value scales by rho^2. With detached labels (as trained) parameter gradients
    scale by rho; keeping the label in the graph gives (rho * D)^2 and rho^2 gradients.
    """
    scale = NetScale(width_mult=1 / 32, patch_bins=32, patch_frames=32)
    d = build_discriminator(scale, seed=int(rng.integers(1 << 31)))
    patches = constant(rng.standard_normal((4, 1, 32, 32)))
    scores = discriminator_forward(d, patches)
    # Affine map pre-clamping the scores into [0, 1] keeps the soft labels unclamped.
    lo, hi = scores.data.min(), scores.data.max()
    span = max(hi - lo, 1e-12)
    scaled = ops.add(ops.scale(scores, 0.8 / span), 0.1 - 0.8 * lo / span)

    gim = ops.square_error(scaled, soft_labels(scaled, rho))
    vanilla = ops.square_error(scaled, 0.0)
    in_graph = ops.square_error(scaled - ops.scale(scaled, 1.0 - rho), 0.0)
    params = d.parameters()
    grads_gim = backward(gim).for_params(params)
    grads_van = backward(vanilla).for_params(params)
    grads_in_graph = backward(in_graph).for_params(params)

    value_err = abs(gim.item() - rho**2 * vanilla.item()) / max(abs(vanilla.item()), 1e-300)
    detached_err = _relative_gap(grads_gim, [rho * g for g in grads_van])
    in_graph_err = _relative_gap(grads_in_graph, [rho**2 * g for g in grads_van])
    result.add("gimgan_value_rho_squared", value_err <= 1e-10, rel_error=value_err)
    result.add("gimgan_detached_grad_rho", detached_err <= 1e-10, rel_error=detached_err)
    result.add("gimgan_in_graph_grad_rho_squared", in_graph_err <= 1e-10, rel_error=in_graph_err)


def run_invariants(seed: int = 0, collapse_steps: int = COLLAPSE_STEPS) -> SuiteResult:
    result = SuiteResult("invariants")
    rng = np.random.default_rng(seed)

    x = rng.standard_normal((2, 3, 4, 6))
    w = rng.standard_normal((5, 3, 2, 2))
    y = rng.standard_normal((2, 5, 2, 3))
    lhs = float(np.sum(ops.conv2d(constant(x), constant(w), constant(np.zeros(5)), stride=2).data * y))
    rhs = float(np.sum(x * ops.conv_transpose2d(constant(y), constant(w), constant(np.zeros(3))).data))
    result.add("conv_adjoint", abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs)), difference=abs(lhs - rhs))

    spread = constant(rng.standard_normal((2, 4, 5, 5)) * 3 + 2)
    normed = ops.instance_norm2d(spread, constant(np.ones(4)), constant(np.zeros(4)))
    max_mean = float(np.max(np.abs(normed.data.mean(axis=(2, 3)))))
    result.add("instance_norm_zero_mean", max_mean <= 1e-10, max_abs_mean=max_mean)

    weights = gen_weights(np.array([-1.0, 0.5]), 0.1)
    result.add(
        "gen_weights_example", bool(np.allclose(weights, [0.475021, 0.524979], atol=1e-6)), weights=weights.tolist()
    )
    label = float(soft_labels(np.array([0.8]), 0.9)[0])
    result.add("soft_label_example", abs(label - 0.08) <= 1e-12, label=label)

    worst = 0.0
    for _ in range(1000):
        scores = rng.normal(0.0, rng.uniform(0.1, 10.0), size=int(rng.integers(1, 9)))
        eta = float(rng.uniform(0.0, 5.0))
        for vector in (gen_weights(scores, eta), dis_weights(scores, eta)):
            worst = max(worst, abs(float(vector.sum()) - 1.0))
    result.add("weights_sum_to_one", worst <= 1e-12, trials=1000, max_deviation=worst)

    fb = build_mel_filterbank()
    row_err = float(np.max(np.abs(fb.weights.sum(axis=1) - 1.0)))
    result.add("filterbank_rows_unit_sum", row_err <= 1e-9, max_deviation=row_err)
    const = mel_envelope(np.full(fb.n_bins, 1.7), fb)
    result.add("mel_envelope_constant", bool(np.allclose(const, 1.7, atol=1e-12)))

    corpus_x, _ = make_toy_corpora(seed, patches=4, frames=16)
    stats = fit_norm(corpus_x.grams)
    gram = corpus_x.grams[0]
    round_trip = invert_norm(apply_norm(gram, stats), stats).values
    result.add("norm_round_trip", float(np.max(np.abs(round_trip - gram.values))) <= 1e-12)

    result.add("full_scale_generator_params", generator_param_count() == FULL_GENERATOR_PARAMS,
               count=generator_param_count())
    result.add("full_scale_discriminator_params", discriminator_param_count() == FULL_DISCRIMINATOR_PARAMS,
               count=discriminator_param_count())

    _check_gimgan_scaling(result, rng)
    _check_collapse(result, seed, collapse_steps)
    return result


# --- toy evaluation ---


def run_toyeval(
    state: TrainerState,
    seed: int = 0,
    held_out: int = TOY_HELD_OUT,
    spec_x: ToyDomainSpec = TOY_X,
    spec_y: ToyDomainSpec = TOY_Y,
    threshold: float = TOY_ACCURACY_THRESHOLD,
) -> SuiteResult:
    """Convert fresh toy patches both ways and score them with the peak-location oracle."""
    result = SuiteResult("toyeval")
    frames = state.config.patch_frames
    held_x, held_y = make_toy_corpora(seed + TOY_EVAL_SEED_OFFSET, spec_x, spec_y, patches=held_out, frames=frames)

    hits = {"xy": 0, "yx": 0}
    deviations = []
    for direction, corpus, source_stats, target_spec in (
        ("xy", held_x, state.stats_x, spec_y),
        ("yx", held_y, state.stats_y, spec_x),
    ):
        for gram in corpus.grams:
            converted = convert(state, apply_norm(gram, source_stats), direction)
            hits[direction] += int(peaks_match(converted.values, target_spec))
            deviations.append(energy_deviation(gram.values, converted.values))

    acc_xy = hits["xy"] / held_out
    acc_yx = hits["yx"] / held_out
    accuracy = (hits["xy"] + hits["yx"]) / (2 * held_out)
    result.report = {
        "iteration": state.iteration,
        "variant": state.config.variant,
        "lambda_e": state.config.lambda_e,
        "accuracy_xy": acc_xy,
        "accuracy_yx": acc_yx,
        "energy_deviation": float(np.mean(deviations)),
    }
    result.add("peak_accuracy", accuracy >= threshold, accuracy=accuracy, threshold=threshold)
    return result
