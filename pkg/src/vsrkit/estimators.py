"""Scikit-learn style estimators wrapping the training and inference pipelines.

Both estimators follow the standard contract: hyperparameters are stored
verbatim in ``__init__`` (so ``get_params`` / ``set_params`` / ``clone``
work), fitted state lives in trailing-underscore attributes, and ``fit``
returns ``self``.

Data layout differs from tabular estimators: a sample is a whole video.

* ``VideoSuperResolver``: X is a list of low-resolution videos, each an array
  of shape (frames, 3, h, w) with values in [0, 1]; y is the list of aligned
  4x high-resolution videos. ``predict`` maps LR videos to HR videos.
* ``AdaptiveEnsembler``: X is a list of candidate stacks, each an array of
  shape (n_models, 3, H, W) holding aligned outputs of the models being
  fused; y is the list of ground-truth frames (3, H, W). ``transform`` fuses
  each stack into one frame.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data import VideoSequence
from .ensemble import CandidateSet, adaptive_fuse
from .errors import ConfigError
from .metrics import clamp_unit, psnr
from .models import SrConfig
from .temporal import build_super_image, temporal_window
from .tensor import Tensor, no_grad
from .train import (EnsembleSample, EnsembleTrainConfig, TrainConfig,
                    train_ensemble, train_sr)
from .augment import self_ensemble_infer
from .validation import (check_paired_videos, check_video, check_video_list,
                         frames_to_tensors)


def _check_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise NotFittedError(
            f"This {type(est).__name__} instance is not fitted yet; call fit first.")


class VideoSuperResolver(BaseEstimator):
    """Super-resolve videos 4x by early-fusing a temporal window of frames.

    Parameters
    ----------
    arch : {"rdn", "rcan", "edsr"}
        Backbone block family.
    temporal_radius : int
        Half-window T; the network input carries 3*(2T+1) channels. T=0
        degenerates to the single-image model.
    width, num_blocks, growth, layers_per_block, ca_reduction : int
        Backbone size knobs.
    bicubic_residual : bool
        Add a bicubic 4x upsample of the center frame to the output.
    loss : {"l1", "mse"}
    learning_rate : float
        Initial Adam rate; drops along (5e-5, 3e-5, 1e-5) on plateau.
    steps, batch_size, lr_patch, eval_interval : int
        Training loop sizes; patches are lr_patch (LR side), 4*lr_patch (HR).
    validation_fraction : float
        Fraction of the training videos held out for model selection.
    self_ensemble : bool
        Average predictions over the 16 geometric transforms at predict time.
    seed : int
        Controls initialization, sampling and augmentation.
    """

    def __init__(self, arch="rdn", temporal_radius=2, width=32, num_blocks=4,
                 growth=16, layers_per_block=2, ca_reduction=4,
                 bicubic_residual=False, loss="l1", learning_rate=1e-4,
                 steps=500, batch_size=8, lr_patch=16, eval_interval=100,
                 validation_fraction=0.25, self_ensemble=False, seed=0):
        self.arch = arch
        self.temporal_radius = temporal_radius
        self.width = width
        self.num_blocks = num_blocks
        self.growth = growth
        self.layers_per_block = layers_per_block
        self.ca_reduction = ca_reduction
        self.bicubic_residual = bicubic_residual
        self.loss = loss
        self.learning_rate = learning_rate
        self.steps = steps
        self.batch_size = batch_size
        self.lr_patch = lr_patch
        self.eval_interval = eval_interval
        self.validation_fraction = validation_fraction
        self.self_ensemble = self_ensemble
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        model = SrConfig(arch=self.arch, temporal_radius=self.temporal_radius,
                         width=self.width, num_blocks=self.num_blocks,
                         growth=self.growth, layers_per_block=self.layers_per_block,
                         ca_reduction=self.ca_reduction,
                         bicubic_residual=self.bicubic_residual)
        return TrainConfig(model=model, loss_kind=self.loss,
                           learning_rate=self.learning_rate, steps=self.steps,
                           batch_size=self.batch_size, lr_patch=self.lr_patch,
                           eval_interval=min(self.eval_interval, self.steps),
                           seed=self.seed)

    def fit(self, X, y):
        lr_videos, hr_videos = check_paired_videos(X, y)
        pairs = []
        for i, (lr, hr) in enumerate(zip(lr_videos, hr_videos)):
            pairs.append((VideoSequence(f"video_{i:03d}", frames_to_tensors(lr)),
                          VideoSequence(f"video_{i:03d}", frames_to_tensors(hr))))
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError([f"validation_fraction must be in [0, 1), "
                               f"got {self.validation_fraction}"])
        n_select = int(round(self.validation_fraction * len(pairs)))
        n_select = min(max(n_select, 1 if len(pairs) > 1 else 0), len(pairs) - 1)
        if n_select > 0:
            train_pairs, select_pairs = pairs[:-n_select], pairs[-n_select:]
        else:
            train_pairs = select_pairs = pairs  # single video: select on it too
        result = train_sr(self._train_config(), train_pairs, select_pairs)
        self.model_ = result.model
        self.log_ = result.log
        self.best_psnr_ = result.best_psnr
        self.n_parameters_ = result.model.num_parameters
        return self

    def predict(self, X):
        """Super-resolve each video; returns a list of (frames, 3, 4h, 4w) arrays."""
        _check_fitted(self, "model_")
        videos = check_video_list(X)
        outputs = []
        for vid in videos:
            frames = frames_to_tensors(vid)
            out_frames = []
            for t in range(len(frames)):
                window = temporal_window(len(frames), t, self.model_.temporal_radius)
                s = build_super_image(frames, window)
                if self.self_ensemble:
                    out = self_ensemble_infer(self.model_, s)
                else:
                    with no_grad():
                        out = self.model_(s)
                out_frames.append(clamp_unit(out).data[0])
            outputs.append(np.stack(out_frames))
        return outputs

    def score(self, X, y):
        """Mean PSNR (dB) of predictions against the reference videos."""
        _check_fitted(self, "model_")
        _, hr_videos = check_paired_videos(X, y)
        preds = self.predict(X)
        values = []
        for pred, hr in zip(preds, hr_videos):
            for t in range(pred.shape[0]):
                values.append(psnr(pred[t][None], hr[t:t + 1]))
        return float(np.mean(values))


class AdaptiveEnsembler(BaseEstimator, TransformerMixin):
    """Fuse aligned frames from several models with learned per-patch weights.

    Parameters
    ----------
    passes : int
        Training epochs over the fusion samples (SGD at ``learning_rate``,
        tenfold lower after epochs 50 and 100).
    learning_rate : float
    seed : int
    """

    def __init__(self, passes=60, learning_rate=0.1, seed=0):
        self.passes = passes
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X, y):
        stacks = self._check_stacks(X)
        if not isinstance(y, (list, tuple)) or len(y) != len(stacks):
            raise ConfigError([f"y must list one (3, H, W) frame per stack "
                               f"({len(stacks)} expected)"])
        truths = []
        for i, t in enumerate(y):
            arr = np.asarray(t, dtype=np.float32)
            if arr.ndim == 3:
                arr = arr[None]
            truths.append(check_video(arr, f"y[{i}]"))
        samples = []
        for stack, truth in zip(stacks, truths):
            cands = [Tensor(np.ascontiguousarray(stack[k:k + 1])) for k in range(stack.shape[0])]
            samples.append(EnsembleSample(candidates=cands, truth=Tensor(truth)))
        config = EnsembleTrainConfig(passes=self.passes,
                                     learning_rate=self.learning_rate, seed=self.seed)
        result = train_ensemble(config, samples)
        self.net_ = result.model
        self.log_ = result.log
        return self

    def transform(self, X):
        """Fuse each candidate stack into one frame; returns (3, H, W) arrays."""
        _check_fitted(self, "net_")
        stacks = self._check_stacks(X)
        fused = []
        for stack in stacks:
            frames = [Tensor(np.ascontiguousarray(stack[k:k + 1])) for k in range(stack.shape[0])]
            fused.append(clamp_unit(adaptive_fuse(self.net_, frames)).data[0])
        return fused

    @staticmethod
    def _check_stacks(X) -> "list[np.ndarray]":
        if not isinstance(X, (list, tuple)) or len(X) == 0:
            raise ValueError("X must be a non-empty list of (n_models, 3, H, W) stacks")
        stacks = [check_video(x, f"X[{i}]") for i, x in enumerate(X)]
        n = stacks[0].shape[0]
        if n < 2:
            raise ConfigError([f"ensembling needs >= 2 candidate models, got {n}"])
        for i, s in enumerate(stacks):
            if s.shape[0] != n:
                raise ConfigError([f"X[{i}] has {s.shape[0]} candidates, expected {n}"])
        return stacks
