"""
Generator and discriminator topologies.

Generator (fully convolutional, shape preserving):
    conv k2 s2 (256) -> conv k2 s2 (512) -> conv k3 s1 p1 (512) x2 -> convT k2 s2 (256) -> convT k2 s2 (1)
    every layer but the last: instance norm + ReLU; the output layer is linear.

Discriminator:
    conv k2 s2 (64, 128, 256, 512), each with instance norm + LeakyReLU
    -> flatten -> dense 512 + LeakyReLU -> dense 1 (raw score, no squashing)

Widths are multiplied by NetScale.width_mult and rounded up.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor, parameter
from src.config import TrainConfig, scaled_width
from src.errors import ConfigError, DimensionError

GENERATOR_WIDTHS = (256, 512, 512, 512, 256, 1)
DISCRIMINATOR_WIDTHS = (64, 128, 256, 512)
DENSE_UNITS = 512
REFERENCE_BLOCKS = 12
INIT_STD = 0.02

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class NetScale:
    width_mult: float = 1.0
    patch_bins: int = 32
    patch_frames: int = 128

    def __post_init__(self):
        if not 0.0 < self.width_mult <= 1.0:
            raise ConfigError(f"width multiplier must be in (0, 1], got {self.width_mult}")
        if self.patch_bins % 16 or self.patch_frames % 16:
            raise ConfigError(
                f"patch {self.patch_bins}x{self.patch_frames} must be divisible by 16 (four stride-2 stages)"
            )

    @classmethod
    def from_config(cls, config: TrainConfig) -> "NetScale":
        return cls(width_mult=config.width_mult, patch_bins=config.patch_bins, patch_frames=config.patch_frames)

    def width(self, base: int) -> int:
        return scaled_width(base, self.width_mult)


FULL_SCALE = NetScale()


@dataclass
class NetParams:
    """Named parameter tensors of one network, in a fixed order."""

    kind: str
    scale: NetScale
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.tensors.values())

    def parameters(self) -> List[Tensor]:
        return list(self.tensors.values())

    def named(self) -> List[Tuple[str, Tensor]]:
        return list(self.tensors.items())

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "NetParams":
        return type(self)(
            kind=self.kind,
            scale=self.scale,
            tensors={k: parameter(t.data.copy(), name=k) for k, t in self.tensors.items()},
        )


class GeneratorParams(NetParams):
    pass


class DiscriminatorParams(NetParams):
    pass


def _conv_layer(name: str, cin: int, cout: int, k: int, norm: bool) -> List[Tuple[str, Tuple[int, ...]]]:
    # With norm=True the bias is cancelled by instance norm and never gets a gradient; it stays
    # in the layout so full-scale counts remain 5,775,361 and 4,886,593.
    shapes = [(f"{name}.w", (cout, cin, k, k)), (f"{name}.b", (cout,))]
    if norm:
        shapes += [(f"{name}.gain", (cout,)), (f"{name}.offset", (cout,))]
    return shapes


def _deconv_layer(name: str, cin: int, cout: int, norm: bool) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = [(f"{name}.w", (cin, cout, 2, 2)), (f"{name}.b", (cout,))]
    if norm:
        shapes += [(f"{name}.gain", (cout,)), (f"{name}.offset", (cout,))]
    return shapes


def generator_layout(scale: NetScale) -> List[Tuple[str, Tuple[int, ...]]]:
    enc1, enc2, res1, res2, dec1 = (scale.width(w) for w in GENERATOR_WIDTHS[:5])
    out = GENERATOR_WIDTHS[5]
    return (
        _conv_layer("enc1", 1, enc1, 2, norm=True)
        + _conv_layer("enc2", enc1, enc2, 2, norm=True)
        + _conv_layer("res1", enc2, res1, 3, norm=True)
        + _conv_layer("res2", res1, res2, 3, norm=True)
        + _deconv_layer("dec1", res2, dec1, norm=True)
        + _deconv_layer("dec2", dec1, out, norm=False)
    )


def discriminator_layout(scale: NetScale) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes: List[Tuple[str, Tuple[int, ...]]] = []
    cin = 1
    for i, base in enumerate(DISCRIMINATOR_WIDTHS, start=1):
        cout = scale.width(base)
        shapes += _conv_layer(f"conv{i}", cin, cout, 2, norm=True)
        cin = cout
    flat = cin * (scale.patch_bins // 16) * (scale.patch_frames // 16)
    units = scale.width(DENSE_UNITS)
    shapes += [("fc1.w", (flat, units)), ("fc1.b", (units,)), ("fc2.w", (units, 1)), ("fc2.b", (1,))]
    return shapes


def _initial_value(name: str, shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if name.endswith(".w"):
        return rng.normal(0.0, INIT_STD, size=shape)
    if name.endswith(".gain"):
        return np.ones(shape)
    return np.zeros(shape)


def _build(cls, kind: str, layout, scale: NetScale, seed: SeedLike) -> NetParams:
    rng = np.random.default_rng(seed)
    tensors = {name: parameter(_initial_value(name, shape, rng), name=name) for name, shape in layout}
    return cls(kind=kind, scale=scale, tensors=tensors)


def build_generator(scale: NetScale, seed: SeedLike = 0) -> GeneratorParams:
    return _build(GeneratorParams, "generator", generator_layout(scale), scale, seed)


def build_discriminator(scale: NetScale, seed: SeedLike = 0) -> DiscriminatorParams:
    return _build(DiscriminatorParams, "discriminator", discriminator_layout(scale), scale, seed)


def _count(layout) -> int:
    return sum(math.prod(shape) for _, shape in layout)


def generator_param_count(scale: NetScale = FULL_SCALE) -> int:
    return _count(generator_layout(scale))


def discriminator_param_count(scale: NetScale = FULL_SCALE) -> int:
    return _count(discriminator_layout(scale))


def reference_generator_param_count(scale: NetScale = FULL_SCALE, blocks: int = REFERENCE_BLOCKS) -> int:
    """
    Parameters of a cycleGAN-VC-style reference: the same encoder and decoder around a bottleneck
    of `blocks` gated 3x3 convolutions (a linear and a gate branch, each with instance norm).
    """
    layout = generator_layout(scale)
    kept = [(n, s) for n, s in layout if not n.startswith("res")]
    width = scale.width(GENERATOR_WIDTHS[2])
    per_branch = width * width * 9 + width + 2 * width
    return _count(kept) + blocks * 2 * per_branch


def _check_patch(x: Tensor, what: str) -> None:
    if len(x.shape) != 4 or x.shape[1] != 1:
        raise DimensionError(f"{what}: expected [N,1,bins,frames], got {x.shape}")


def _norm_act(h: Tensor, params: NetParams, name: str, leaky: bool) -> Tensor:
    h = ops.instance_norm2d(h, params[f"{name}.gain"], params[f"{name}.offset"])
    return ops.leaky_relu(h) if leaky else ops.relu(h)


def generator_forward(g: GeneratorParams, x: Tensor) -> Tensor:
    """Map a [N,1,bins,frames] patch to one of the same shape. Frames may be any multiple of 4."""
    _check_patch(x, "generator")
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise DimensionError(f"generator: bins and frames must be divisible by 4, got {x.shape[2:]}")
    h = x
    for name in ("enc1", "enc2"):
        h = _norm_act(ops.conv2d(h, g[f"{name}.w"], g[f"{name}.b"], stride=2), g, name, leaky=False)
    for name in ("res1", "res2"):
        h = _norm_act(ops.conv2d(h, g[f"{name}.w"], g[f"{name}.b"], stride=1, padding=1), g, name, leaky=False)
    h = _norm_act(ops.conv_transpose2d(h, g["dec1.w"], g["dec1.b"]), g, "dec1", leaky=False)
    return ops.conv_transpose2d(h, g["dec2.w"], g["dec2.b"])


def discriminator_forward(d: DiscriminatorParams, x: Tensor) -> Tensor:
    """One raw score per sample: [N,1,bins,frames] -> [N]."""
    _check_patch(x, "discriminator")
    expected = (d.scale.patch_bins, d.scale.patch_frames)
    if tuple(x.shape[2:]) != expected:
        raise DimensionError(f"discriminator: patch size {tuple(x.shape[2:])} != configured {expected}")
    h = x
    for i in range(1, len(DISCRIMINATOR_WIDTHS) + 1):
        name = f"conv{i}"
        h = _norm_act(ops.conv2d(h, d[f"{name}.w"], d[f"{name}.b"], stride=2), d, name, leaky=True)
    n = x.shape[0]
    h = ops.reshape(h, (n, -1))
    h = ops.leaky_relu(ops.dense(h, d["fc1.w"], d["fc1.b"]))
    h = ops.dense(h, d["fc2.w"], d["fc2.b"])
    return ops.reshape(h, (n,))


def parameter_report(scale: Optional[NetScale] = None) -> Dict[str, float]:
    scale = scale or FULL_SCALE
    gen = generator_param_count(scale)
    ref = reference_generator_param_count(scale)
    return {
        "generator": gen,
        "discriminator": discriminator_param_count(scale),
        "reference_generator": ref,
        "reference_ratio": ref / gen,
    }
