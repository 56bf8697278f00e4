"""
Trainer state and its binary checkpoint format.

Layout (little-endian):
    "CGVC", u32 version
    config snapshot: length-prefixed UTF-8 key=value lines
    tensor table: u32 count; per tensor: name, u32 rank, u32 dims..., f64 data
        network parameters  g_xy/<p>, g_yx/<p>, d_x/<p>, d_y/<p>
        Adam moments        adam/<net>/m/<p>, adam/<net>/v/<p>
    Adam scalars: u32 count; per optimizer: name, u64 step, f64 beta1, beta2, eps
    u64 iteration
    sampler RNG: length-prefixed JSON of the PCG64 state
    NormStats for X then Y: bins x f64 means, bins x f64 stds each
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from src.autodiff.optim import AdamState
from src.autodiff.tensor import parameter
from src.config import TrainConfig, train_config_from_lines, train_config_lines
from src.errors import CheckpointShapeError, ConfigError, FormatError
from src.features import NormStats
from src.networks import (
    DiscriminatorParams,
    GeneratorParams,
    NetParams,
    NetScale,
    discriminator_layout,
    generator_layout,
)
from src.storage import BinaryReader, BinaryWriter, read_bytes, write_atomic

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"CGVC"
CHECKPOINT_VERSION = 1
NETWORKS = ("g_xy", "g_yx", "d_x", "d_y")

PathLike = Union[str, Path]


@dataclass
class TrainerState:
    config: TrainConfig
    g_xy: GeneratorParams
    g_yx: GeneratorParams
    d_x: DiscriminatorParams
    d_y: DiscriminatorParams
    adam: Dict[str, AdamState]
    iteration: int
    rng: np.random.Generator
    stats_x: Optional[NormStats] = None
    stats_y: Optional[NormStats] = None

    def net(self, name: str) -> NetParams:
        return getattr(self, name)

    @property
    def scale(self) -> NetScale:
        return self.g_xy.scale


def _rng_to_json(rng: np.random.Generator) -> str:
    return json.dumps(rng.bit_generator.state, sort_keys=True)


def _rng_from_json(text: str, source: str) -> np.random.Generator:
    try:
        state = json.loads(text)
        if state.get("bit_generator") != "PCG64":
            raise FormatError(f"{source}: unsupported RNG {state.get('bit_generator')!r}")
        bit_generator = np.random.PCG64()
        bit_generator.state = state
    except (ValueError, TypeError, KeyError) as e:
        raise FormatError(f"{source}: corrupt RNG state ({e})") from e
    return np.random.Generator(bit_generator)


def encode_checkpoint(state: TrainerState) -> bytes:
    if state.stats_x is None or state.stats_y is None:
        raise ConfigError("cannot checkpoint a state without normalisation statistics")
    writer = BinaryWriter().raw(CHECKPOINT_MAGIC).u32(CHECKPOINT_VERSION)
    writer.text("\n".join(train_config_lines(state.config)))

    entries = []
    for net_name in NETWORKS:
        net = state.net(net_name)
        entries += [(f"{net_name}/{p}", t.data) for p, t in net.named()]
    for net_name in NETWORKS:
        names = [p for p, _ in state.net(net_name).named()]
        adam = state.adam[net_name]
        entries += [(f"adam/{net_name}/m/{p}", m) for p, m in zip(names, adam.m)]
        entries += [(f"adam/{net_name}/v/{p}", v) for p, v in zip(names, adam.v)]
    writer.u32(len(entries))
    for name, values in entries:
        writer.tensor(name, values)

    writer.u32(len(NETWORKS))
    for net_name in NETWORKS:
        adam = state.adam[net_name]
        writer.text(net_name).u64(adam.step).f64(adam.beta1).f64(adam.beta2).f64(adam.eps)

    writer.u64(state.iteration)
    writer.text(_rng_to_json(state.rng))
    for stats in (state.stats_x, state.stats_y):
        writer.array(stats.mean).array(stats.std)
    return writer.getvalue()


def save_checkpoint(state: TrainerState, path: PathLike) -> Path:
    path = write_atomic(path, encode_checkpoint(state))
    logger.info(f"[Checkpoint] Saved iteration {state.iteration} to {path}")
    return path


def _expect_tensor(table: Dict[str, np.ndarray], name: str, shape, source: str) -> np.ndarray:
    if name not in table:
        raise CheckpointShapeError(f"{source}: missing tensor '{name}'")
    found = table.pop(name)
    if tuple(found.shape) != tuple(shape):
        raise CheckpointShapeError(
            f"{source}: tensor '{name}' has shape {tuple(found.shape)}, network expects {tuple(shape)}"
        )
    return found


def decode_checkpoint(data: bytes, source: str = "checkpoint", scale: Optional[NetScale] = None) -> TrainerState:
    reader = BinaryReader(data, source)
    reader.magic(CHECKPOINT_MAGIC)
    reader.version(CHECKPOINT_VERSION)
    try:
        config = train_config_from_lines(reader.text().splitlines())
    except ConfigError as e:
        raise FormatError(f"{source}: invalid config snapshot ({e})") from e
    stored_scale = NetScale.from_config(config)
    if scale is not None and scale != stored_scale:
        raise CheckpointShapeError(f"{source}: checkpoint was written at {stored_scale}, requested {scale}")

    table: Dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name, values = reader.tensor()
        table[name] = values

    adam_scalars = {}
    for _ in range(reader.u32()):
        name = reader.text()
        adam_scalars[name] = (reader.u64(), reader.f64(), reader.f64(), reader.f64())
    iteration = reader.u64()
    rng = _rng_from_json(reader.text(), source)
    bins = config.patch_bins
    stats = []
    for _ in range(2):
        mean = reader.array((bins,))
        std = reader.array((bins,))
        if np.any(std <= 0):
            raise FormatError(f"{source}: nonpositive standard deviation in stored stats")
        stats.append(NormStats(mean=mean, std=std))
    reader.finish()

    nets: Dict[str, NetParams] = {}
    adam: Dict[str, AdamState] = {}
    for net_name in NETWORKS:
        is_gen = net_name.startswith("g")
        layout = generator_layout(stored_scale) if is_gen else discriminator_layout(stored_scale)
        cls = GeneratorParams if is_gen else DiscriminatorParams
        tensors = {
            p: parameter(_expect_tensor(table, f"{net_name}/{p}", shape, source), name=p) for p, shape in layout
        }
        nets[net_name] = cls(kind="generator" if is_gen else "discriminator", scale=stored_scale, tensors=tensors)
        if net_name not in adam_scalars:
            raise FormatError(f"{source}: missing Adam state for {net_name}")
        step, beta1, beta2, eps = adam_scalars[net_name]
        adam[net_name] = AdamState(
            m=[_expect_tensor(table, f"adam/{net_name}/m/{p}", shape, source) for p, shape in layout],
            v=[_expect_tensor(table, f"adam/{net_name}/v/{p}", shape, source) for p, shape in layout],
            step=step,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )
    if table:
        raise CheckpointShapeError(f"{source}: unexpected tensors {sorted(table)[:5]}")

    return TrainerState(
        config=config,
        g_xy=nets["g_xy"],
        g_yx=nets["g_yx"],
        d_x=nets["d_x"],
        d_y=nets["d_y"],
        adam=adam,
        iteration=iteration,
        rng=rng,
        stats_x=stats[0],
        stats_y=stats[1],
    )


def load_checkpoint(path: PathLike, scale: Optional[NetScale] = None) -> TrainerState:
    state = decode_checkpoint(read_bytes(path, "checkpoint"), source=str(path), scale=scale)
    logger.info(f"[Checkpoint] Loaded iteration {state.iteration} from {path}")
    return state
