"""
Spectral-envelope voice conversion with adversarially weighted cycleGANs.

Subpackages and modules:
- autodiff: reverse-mode differentiation core (tensors, ops, Adam, gradient checks)
- features: audio -> 32-bin log Mel envelope grams and naive resynthesis
- networks / adversarial / trainer: the cycleGAN, its losses and the training loop
- data: corpus ingestion and the synthetic two-domain toy task
- pipeline + nodes: LangGraph graph for wav -> wav conversion
- cli: command line entry point (python -m src.cli)
"""

import os

# Reductions must run in a fixed order for bit-identical training runs.
for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "1.0.0"
