"""vsrkit: desk-scale video super-resolution.

Two ideas make up the toolkit: single-image SR networks adapted to video by
early-fusing a temporal window of frames into a multi-channel super-image,
and a learned adaptive ensemble that fuses several models' outputs with
patch-granular softmax weights. Everything runs on a small self-contained
tensor engine with reverse-mode autodiff; no GPU or external framework.

The scikit-learn style entry points are :class:`VideoSuperResolver` and
:class:`AdaptiveEnsembler`; the same machinery is scriptable through the
``vsrkit`` command line.
"""

from .augment import (GeoTransform, apply, apply_spatial,
                      enumerate_self_ensemble, invert_output,
                      sample_train_augmentation, self_ensemble_infer)
from .checkpoints import (load_ensemble_checkpoint, load_sr_checkpoint,
                          save_ensemble_checkpoint, save_sr_checkpoint)
from .data import (MotionSpec, PatchPair, SplitConfig, VideoSequence,
                   assign_splits, degrade, generate_toy_dataset,
                   sample_patch_pair)
from .ensemble import (CandidateSet, EnsembleNet, FusionWeights, adaptive_fuse,
                       average_ensemble, average_fuse, build_ensemble_net,
                       fuse, fusion_weights, score_map, train_ensemble_step)
from .errors import (ConfigError, NonFiniteError, ParseError, ShapeError,
                     TrainingDiverged, VsrError)
from .estimators import AdaptiveEnsembler, VideoSuperResolver
from .metrics import EvalReport, EvalRow, evaluate, psnr
from .models import (SrConfig, SrModel, build_adapted_net,
                     channel_attention_block, residual_block,
                     residual_dense_block, sr_forward, toy_config)
from .optim import OptimizerState, optimizer_step
from .resize import bicubic_downsample, bicubic_resize, bicubic_upsample
from .temporal import (SuperImage, TemporalWindow, build_super_image,
                       center_frame, frame_block, temporal_window)
from .tensor import (Tensor, backward, batchnorm, concat_channels, conv2d,
                     loss, no_grad, pixel_shuffle, pixel_unshuffle,
                     softmax_over_models, upsample_nearest, using_dtype)
from .train import (EnsembleTrainConfig, TrainConfig, TrainResult,
                    precompute_candidates, train_ensemble, train_sr)

__version__ = "0.1.0"
