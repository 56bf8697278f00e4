"""
CycleGAN training loop and inference-time conversion.

Each iteration:
    1. G_xy(x) and G_yx(y) on fresh random crops
    2. D_x and D_y step on real crops and the detached conversions
    3. the conversions are scored by the updated discriminators and both generators step
       on adversarial + cycle + energy loss
"""

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.adversarial import (
    GeneratorLossParts,
    LossWeights,
    VariantSelector,
    cycle_loss,
    d_loss,
    discriminator_fake_targets,
    energy_loss,
    g_adv_loss,
    generator_weights,
    total_generator_loss,
    weight_entropy,
)
from src.autodiff.ops import stop_gradient
from src.autodiff.optim import AdamState, adam_step
from src.autodiff.tensor import Gradients, Tensor, backward, constant
from src.checkpoint import TrainerState, save_checkpoint
from src.config import TrainConfig
from src.data import Corpus
from src.errors import ConfigError, CorpusError, NumericError, TrainingDivergedError
from src.features import EnvelopeGram, NormStats, apply_norm, fit_norm, invert_norm
from src.networks import (
    NetScale,
    build_discriminator,
    build_generator,
    discriminator_forward,
    generator_forward,
)

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.cgvc"

# Fields that may differ between a checkpoint and the config used to resume it.
RESUMABLE_FIELDS = ("iterations", "checkpoint_every", "log_every")

PathLike = Union[str, Path]


@dataclass
class StepMetrics:
    iter: int
    d_x: float
    d_y: float
    g_adv_xy: float
    g_adv_yx: float
    cycle: float
    energy: float
    mean_d_real_x: float
    mean_d_fake_x: float
    mean_d_real_y: float
    mean_d_fake_y: float
    w_entropy_g: float
    w_entropy_d: float

    @classmethod
    def header(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> List[str]:
        return [str(self.iter)] + [repr(float(v)) for k, v in asdict(self).items() if k != "iter"]

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for k, v in asdict(self).items() if k != "iter")


@dataclass
class TrainResult:
    state: TrainerState
    metrics: List[StepMetrics]


def init_state(
    config: TrainConfig,
    stats_x: Optional[NormStats] = None,
    stats_y: Optional[NormStats] = None,
) -> TrainerState:
    """Fresh networks and optimisers; every random stream is spawned from config.seed."""
    scale = NetScale.from_config(config)
    seq_gxy, seq_gyx, seq_dx, seq_dy, seq_sampler = np.random.SeedSequence(config.seed).spawn(5)
    nets = {
        "g_xy": build_generator(scale, seq_gxy),
        "g_yx": build_generator(scale, seq_gyx),
        "d_x": build_discriminator(scale, seq_dx),
        "d_y": build_discriminator(scale, seq_dy),
    }
    return TrainerState(
        config=config,
        adam={name: AdamState.for_params(net.parameters()) for name, net in nets.items()},
        iteration=0,
        rng=np.random.Generator(np.random.PCG64(seq_sampler)),
        stats_x=stats_x,
        stats_y=stats_y,
        **nets,
    )


def sample_batch(
    rng: np.random.Generator, grams: Sequence[np.ndarray], batch_size: int, frames: int
) -> np.ndarray:
    """Uniform utterances (with replacement), each cropped at a uniform valid offset: [m,1,bins,frames]."""
    picks = rng.integers(0, len(grams), size=batch_size)
    crops = []
    for index in picks:
        values = grams[int(index)]
        start = int(rng.integers(0, values.shape[1] - frames + 1))
        crops.append(values[:, start : start + frames])
    return np.stack(crops)[:, None, :, :]


def _score_stats(scores: Tensor) -> Dict[str, float]:
    d = scores.data
    return {"mean": float(d.mean()), "min": float(d.min()), "max": float(d.max())}


def _step_params(state: TrainerState, name: str, grads: Gradients, lr: float) -> None:
    net = state.net(name)
    state.adam[name] = adam_step(net.parameters(), grads.for_params(net.parameters()), state.adam[name], lr)


def discriminator_losses(
    state: TrainerState, x: Tensor, y: Tensor, fake_x: Tensor, fake_y: Tensor, variant: VariantSelector
) -> Tuple[Tensor, Tensor, Dict[str, Tensor]]:
    """D_x and D_y losses on real crops and detached conversions."""
    scores = {
        "real_x": discriminator_forward(state.d_x, x),
        "fake_x": discriminator_forward(state.d_x, stop_gradient(fake_x)),
        "real_y": discriminator_forward(state.d_y, y),
        "fake_y": discriminator_forward(state.d_y, stop_gradient(fake_y)),
    }
    loss_x = d_loss(scores["real_x"], scores["fake_x"], variant)
    loss_y = d_loss(scores["real_y"], scores["fake_y"], variant)
    return loss_x, loss_y, scores


def generator_objective(
    state: TrainerState,
    x: Tensor,
    y: Tensor,
    variant: VariantSelector,
    weights: LossWeights,
    fake_x: Optional[Tensor] = None,
    fake_y: Optional[Tensor] = None,
) -> Tuple[Tensor, GeneratorLossParts, Dict[str, Tensor]]:
    """Total generator loss under the current discriminators."""
    fake_y = fake_y if fake_y is not None else generator_forward(state.g_xy, x)
    fake_x = fake_x if fake_x is not None else generator_forward(state.g_yx, y)
    scores = {
        "fake_y": discriminator_forward(state.d_y, fake_y),
        "fake_x": discriminator_forward(state.d_x, fake_x),
    }
    parts = GeneratorLossParts(
        adv_xy=g_adv_loss(scores["fake_y"], variant),
        adv_yx=g_adv_loss(scores["fake_x"], variant),
        cycle=cycle_loss(x, generator_forward(state.g_yx, fake_y), y, generator_forward(state.g_xy, fake_x)),
        energy=energy_loss(x, fake_y, y, fake_x, weights.lambda_e),
    )
    return total_generator_loss(parts, weights), parts, scores


def generator_gradients(
    state: TrainerState, batch_x: np.ndarray, batch_y: np.ndarray, config: Optional[TrainConfig] = None
) -> Gradients:
    config = config or state.config
    total, _, _ = generator_objective(
        state, constant(batch_x), constant(batch_y), VariantSelector.from_config(config), LossWeights.from_config(config)
    )
    return backward(total)


def train_step(
    state: TrainerState,
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    config: Optional[TrainConfig] = None,
) -> Tuple[TrainerState, StepMetrics]:
    """One alternating D/G update, in place on `state`."""
    config = config or state.config
    variant = VariantSelector.from_config(config)
    weights = LossWeights.from_config(config)
    iteration = state.iteration + 1
    stage = "generator forward"
    losses: Dict[str, float] = {}
    score_stats: Dict[str, Dict[str, float]] = {}

    try:
        x, y = constant(batch_x), constant(batch_y)
        fake_y = generator_forward(state.g_xy, x)
        fake_x = generator_forward(state.g_yx, y)

        stage = "discriminator step"
        loss_dx, loss_dy, d_scores = discriminator_losses(state, x, y, fake_x, fake_y, variant)
        score_stats.update({k: _score_stats(v) for k, v in d_scores.items()})
        losses.update(d_x=loss_dx.item(), d_y=loss_dy.item())
        w_dx, _ = discriminator_fake_targets(d_scores["fake_x"], variant)
        w_dy, _ = discriminator_fake_targets(d_scores["fake_y"], variant)
        _step_params(state, "d_x", backward(loss_dx), config.lr_d)
        _step_params(state, "d_y", backward(loss_dy), config.lr_d)

        stage = "generator step"
        total, parts, g_scores = generator_objective(state, x, y, variant, weights, fake_x=fake_x, fake_y=fake_y)
        score_stats.update({f"g_{k}": _score_stats(v) for k, v in g_scores.items()})
        losses.update(
            g_adv_xy=parts.adv_xy.item(),
            g_adv_yx=parts.adv_yx.item(),
            cycle=parts.cycle.item(),
            energy=parts.energy.item(),
            total=total.item(),
        )
        w_gxy = generator_weights(g_scores["fake_y"], variant)
        w_gyx = generator_weights(g_scores["fake_x"], variant)
        grads = backward(total)
        _step_params(state, "g_xy", grads, config.lr_g)
        _step_params(state, "g_yx", grads, config.lr_g)
    except NumericError as e:
        diagnostics = {"iteration": iteration, "stage": stage, "losses": losses, "scores": score_stats}
        logger.error(f"[Trainer] Non-finite value at iteration {iteration} during {stage}: {e} | {diagnostics}")
        raise TrainingDivergedError(f"iteration {iteration}, {stage}: {e}", diagnostics=diagnostics) from e

    state.iteration = iteration
    metrics = StepMetrics(
        iter=iteration,
        d_x=losses["d_x"],
        d_y=losses["d_y"],
        g_adv_xy=losses["g_adv_xy"],
        g_adv_yx=losses["g_adv_yx"],
        cycle=losses["cycle"],
        energy=losses["energy"],
        mean_d_real_x=score_stats["real_x"]["mean"],
        mean_d_fake_x=score_stats["fake_x"]["mean"],
        mean_d_real_y=score_stats["real_y"]["mean"],
        mean_d_fake_y=score_stats["fake_y"]["mean"],
        w_entropy_g=0.5 * (weight_entropy(w_gxy) + weight_entropy(w_gyx)),
        w_entropy_d=0.5 * (weight_entropy(w_dx) + weight_entropy(w_dy)),
    )
    if not metrics.is_finite():
        diagnostics = {"iteration": iteration, "stage": "metrics", "losses": losses, "scores": score_stats}
        logger.error(f"[Trainer] Non-finite metrics at iteration {iteration} | {diagnostics}")
        raise TrainingDivergedError(f"iteration {iteration}: non-finite metrics", diagnostics=diagnostics)
    return state, metrics


def domain_stats(config: TrainConfig, corpus_x: Corpus, corpus_y: Corpus) -> Tuple[NormStats, NormStats]:
    """Statistics used to standardise each domain's network inputs."""
    if config.norm_scope == "domain":
        return corpus_x.stats, corpus_y.stats
    pooled = fit_norm(corpus_x.grams + corpus_y.grams)
    return pooled, pooled


def _check_corpus(corpus: Corpus, config: TrainConfig, label: str) -> None:
    if len(corpus) == 0:
        raise CorpusError(f"corpus {label} is empty")
    for gram in corpus.grams:
        if gram.bins != config.patch_bins:
            raise CorpusError(f"corpus {label}: gram has {gram.bins} bins, patches need {config.patch_bins}")
        if gram.frames < config.patch_frames:
            raise CorpusError(
                f"corpus {label}: gram with {gram.frames} frames is shorter than the patch width {config.patch_frames}"
            )


def _check_resume(config: TrainConfig, state: TrainerState) -> None:
    stored = state.config.model_dump()
    requested = config.model_dump()
    changed = sorted(k for k in stored if k not in RESUMABLE_FIELDS and stored[k] != requested[k])
    if changed:
        raise ConfigError(f"cannot resume with a different {', '.join(changed)}")


def _open_metrics(path: Path, resume_from: int):
    """Metrics CSV positioned after row `resume_from`; later rows from an interrupted run are dropped."""
    kept: List[str] = []
    if resume_from > 0 and path.is_file():
        lines = path.read_text(encoding="utf-8").splitlines()
        kept = [line for line in lines[1:] if line and int(line.split(",", 1)[0]) <= resume_from]
    handle = open(path, "w", encoding="utf-8", newline="")
    handle.write(",".join(StepMetrics.header()) + "\n")
    for line in kept:
        handle.write(line + "\n")
    return handle


def train(
    config: TrainConfig,
    corpus_x: Corpus,
    corpus_y: Corpus,
    run_dir: Optional[PathLike] = None,
    resume: Optional[TrainerState] = None,
) -> TrainResult:
    """
    Run training up to `config.iterations` total steps.

    With `run_dir`, every step is appended to metrics.csv and a checkpoint is written every
    `checkpoint_every` iterations plus a final one. A resumed run continues from
    `resume.iteration`, drawing the same crops the uninterrupted run would have drawn.
    """
    _check_corpus(corpus_x, config, "x")
    _check_corpus(corpus_y, config, "y")
    if resume is not None:
        _check_resume(config, resume)
        state = resume
        state.config = config
    else:
        stats_x, stats_y = domain_stats(config, corpus_x, corpus_y)
        state = init_state(config, stats_x, stats_y)
    grams_x = [apply_norm(g, state.stats_x).values for g in corpus_x.grams]
    grams_y = [apply_norm(g, state.stats_y).values for g in corpus_y.grams]

    run_path = Path(run_dir) if run_dir is not None else None
    writer = handle = None
    if run_path is not None:
        (run_path / CHECKPOINT_DIR).mkdir(parents=True, exist_ok=True)
        handle = _open_metrics(run_path / METRICS_FILE, state.iteration)
        writer = csv.writer(handle, lineterminator="\n")

    log: List[StepMetrics] = []
    started = time.perf_counter()
    logger.info(
        f"[Trainer] {config.variant}: iterations {state.iteration + 1}..{config.iterations}, "
        f"batch {config.batch_size}, scale {config.width_mult}"
    )
    try:
        while state.iteration < config.iterations:
            batch_x = sample_batch(state.rng, grams_x, config.batch_size, config.patch_frames)
            batch_y = sample_batch(state.rng, grams_y, config.batch_size, config.patch_frames)
            state, metrics = train_step(state, batch_x, batch_y, config)
            log.append(metrics)
            if writer is not None:
                writer.writerow(metrics.row())
                handle.flush()
            if state.iteration % config.log_every == 0:
                logger.info(
                    f"[Trainer] it {state.iteration}: d_x={metrics.d_x:.4f} d_y={metrics.d_y:.4f} "
                    f"g_xy={metrics.g_adv_xy:.4f} g_yx={metrics.g_adv_yx:.4f} cycle={metrics.cycle:.4f} "
                    f"energy={metrics.energy:.4f} ({time.perf_counter() - started:.1f}s)"
                )
            if run_path is not None and state.iteration % config.checkpoint_every == 0:
                save_checkpoint(state, run_path / CHECKPOINT_DIR / f"ckpt_{state.iteration:07d}.cgvc")
    finally:
        if handle is not None:
            handle.close()

    if run_path is not None:
        save_checkpoint(state, run_path / CHECKPOINT_DIR / FINAL_CHECKPOINT)
    return TrainResult(state=state, metrics=log)


def _direction(direction: str) -> str:
    normalized = direction.lower().replace("->", "").replace("→", "").replace("_", "")
    if normalized not in ("xy", "yx"):
        raise ConfigError(f"direction must be 'xy' or 'yx', got '{direction}'")
    return normalized


def source_stats(state: TrainerState, direction: str) -> NormStats:
    stats = state.stats_x if _direction(direction) == "xy" else state.stats_y
    if stats is None:
        raise CorpusError("trainer state carries no source-domain statistics")
    return stats


def convert(state: TrainerState, gram: EnvelopeGram, direction: str) -> EnvelopeGram:
    """
    Convert a whole utterance normalised with the source domain's stats.

    Frames are edge-padded to a multiple of 4, passed once through the generator, trimmed,
    and de-normalised with the target domain's stats.
    """
    direction = _direction(direction)
    generator = state.g_xy if direction == "xy" else state.g_yx
    target = state.stats_y if direction == "xy" else state.stats_x
    if target is None:
        raise CorpusError("trainer state carries no target-domain statistics")
    if gram.bins % 4:
        raise CorpusError(f"gram has {gram.bins} bins, need a multiple of 4")

    frames = gram.frames
    pad = (-frames) % 4
    values = np.pad(gram.values, ((0, 0), (0, pad)), mode="edge") if pad else gram.values
    out = generator_forward(generator, constant(values[None, None])).data[0, 0, :, :frames]
    converted = EnvelopeGram(out, hop_seconds=gram.hop_seconds, speaker=gram.speaker, normalized=True)
    return invert_norm(converted, target)
