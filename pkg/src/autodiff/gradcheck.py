"""
Central finite-difference verification of analytic gradients.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor, backward, constant, parameter

GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_STEP = 1e-5
# Gradients this small count as zero: a parameter the loss cannot see (a bias ahead of
# instance norm) leaves only round-off in the central difference.
GRADCHECK_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    name: str
    tolerance: float
    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_rel_error": self.max_error,
            "tolerance": self.tolerance,
            "errors": dict(self.errors),
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = GRADCHECK_FLOOR) -> float:
    scale = max(float(np.max(np.abs(analytic), initial=0.0)), float(np.max(np.abs(numeric), initial=0.0)), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0)) / scale


def away_from_zero(rng: np.random.Generator, shape: Sequence[int], margin: float = 0.05) -> np.ndarray:
    """Standard normal samples, redrawn until none lies within `margin` of a ReLU kink."""
    values = rng.standard_normal(shape)
    bad = np.abs(values) < margin
    while np.any(bad):
        values[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(values) < margin
    return values


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    name: str = "op",
    tolerance: float = GRADCHECK_TOLERANCE,
    step: float = GRADCHECK_STEP,
    names: Optional[Sequence[str]] = None,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare backward() against central differences for every input of `fn`.

    `fn` maps Tensors to a Tensor. Non-scalar outputs are reduced with a fixed random
    projection so one backward pass covers every output element. With `max_entries`,
    only that many randomly chosen elements of each input are perturbed.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    labels = list(names) if names is not None else [f"input{i}" for i in range(len(arrays))]

    probe = fn(*(constant(a) for a in arrays))
    projection = np.ones(()) if probe.shape == () else rng.standard_normal(probe.shape)

    def objective(values: List[np.ndarray]) -> float:
        out = fn(*(constant(v) for v in values))
        return float(np.sum(out.data * projection))

    leaves = [parameter(a) for a in arrays]
    out = fn(*leaves)
    loss = out if out.shape == () else ops.total(ops.scale(out, projection))
    grads = backward(loss)

    report = GradCheckReport(name=name, tolerance=tolerance)
    for index, (leaf, label) in enumerate(zip(leaves, labels)):
        analytic = grads[leaf].reshape(-1)
        flat_count = arrays[index].size
        if max_entries is not None and flat_count > max_entries:
            entries = rng.choice(flat_count, size=max_entries, replace=False)
        else:
            entries = np.arange(flat_count)

        numeric = np.empty(len(entries))
        for k, flat in enumerate(entries):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[index].reshape(-1)[flat] += step
            minus[index].reshape(-1)[flat] -= step
            numeric[k] = (objective(plus) - objective(minus)) / (2.0 * step)
        report.errors[label] = relative_error(analytic[entries], numeric)
    return report
