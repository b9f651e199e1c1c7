"""Random small IGCN instances for finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import build_modality
from .model import ModelParams, MultiModalDataset, SplitMask, forward, init_params
from .train import finite_difference_check, perturb_off_kinks


@dataclass
class GradcheckCase:
    seed: int
    dataset: MultiModalDataset
    params: ModelParams
    mask: np.ndarray

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "m": self.dataset.num_nodes,
            "p": self.dataset.num_modalities,
            "c": self.dataset.num_classes,
            "h": self.params.hidden,
            "dims": "/".join(map(str, self.dataset.feature_dims)),
            "variant": self.params.variant,
        }


def random_case(seed: int, variant: str = "full") -> GradcheckCase:
    """m <= 15, p in {1,2,3}, c in {2,3}, h in {4,8}, distinct feature dims.

    The attention bias is set to a nonzero value (init leaves it at zero) and
    all params are jittered off ReLU/LeakyReLU kinks.
    """
    rng = np.random.default_rng(seed)
    m = int(rng.integers(6, 16))
    p = int(rng.integers(1, 4))
    c = int(rng.integers(2, 4))
    h = int(rng.choice([4, 8]))
    dims = [int(d) for d in rng.choice(np.arange(2, 9), size=p, replace=False)]
    labels = rng.permutation(np.arange(m) % c)
    mods = [build_modality(f"m{i}", rng.normal(size=(m, d)), min(2.0, m - 1)) for i, d in enumerate(dims)]
    dataset = MultiModalDataset(mods, labels, c, SplitMask(np.arange(m), [], []))
    params = init_params(dims, h, c, seed, variant)
    # Centre the bias on the raw attention scores so they straddle the
    # LeakyReLU kink; if every score sat on one side the bias gradient would be
    # exactly zero (softmax shift invariance) and only roundoff would remain.
    cache = forward(dataset, params, "eval")
    scores = np.hstack([e @ params.attn_weight for e in cache.embeddings])
    bias = np.array([[-np.median(scores) + rng.normal(scale=0.05)]])
    params = params.with_tensors([bias if name == "attn.bias" else t for name, t in zip(params.names(), params.tensors())])
    params = perturb_off_kinks(dataset, params, rng)
    mask = np.sort(rng.choice(m, size=int(rng.integers(max(2, m // 2), m + 1)), replace=False))
    return GradcheckCase(seed, dataset, params, mask)


def run_suite(num_cases: int = 20, base_seed: int = 0, step: float = 1e-5, variant: str = "full"):
    """Yield ``(case, max_relative_error)`` for ``num_cases`` seeded instances."""
    for i in range(num_cases):
        case = random_case(base_seed + i, variant)
        yield case, finite_difference_check(case.dataset, case.params, case.mask, step)
