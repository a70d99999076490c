"""Session fixtures shared across test modules."""

import numpy as np
import pytest

import vsrkit as vk
from vsrkit.models import toy_config
from vsrkit.train import TrainConfig, train_sr


@pytest.fixture(scope="session")
def trained_toy_setup():
    """A briefly trained toy model plus its held-out validation pairs.

    Training takes ~25 s once per session; the model is good enough to beat
    bicubic but far from converged, which is exactly the regime the
    self-ensemble and baseline-comparison checks care about.
    """
    hr_seqs = vk.generate_toy_dataset(6, frames_per_seq=10, hr_size=64, seed=21)
    labeled = vk.assign_splits(hr_seqs, vk.SplitConfig(train=3, select=1, test=2,
                                                       seed=21))
    pairs = {r: [] for r in ("train", "select", "test")}
    for s in labeled:
        pairs[s.role].append((vk.degrade(s), s))
    cfg = TrainConfig(model=toy_config("rdn", temporal_radius=2, width=16,
                                       num_blocks=3, growth=8,
                                       bicubic_residual=True),
                      learning_rate=3e-4, steps=800, batch_size=4, lr_patch=16,
                      eval_interval=200, eval_frames=4, seed=3)
    result = train_sr(cfg, pairs["train"], pairs["select"])
    return result.model, pairs
