"""Seeded training loops for SR models and the ensemble net.

Randomness is derived per step from (seed, step), so a run resumed from a
checkpoint replays exactly the same sample draws and augmentations as an
uninterrupted run. Checkpoints therefore come in a small family of files:

    <path>        best-so-far model (parameter records + config header)
    <path>.last   parameters at the last completed step
    <path>.optim  optimizer moments and step counter
    <path>.state  text key=value training state (floats stored as hex)

SR training follows a plateau rule: when the selection PSNR fails to improve
by more than 0.01 dB for `plateau_patience` consecutive evaluations, the
learning rate advances to the next scheduled value (1e-4 down through 5e-5,
3e-5, 1e-5). Ensemble training uses stepped SGD instead: 0.1, tenfold lower
after epochs 50 and 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .augment import apply, apply_spatial, sample_train_augmentation
from .checkpoints import (load_ensemble_checkpoint, load_sr_checkpoint,
                          save_ensemble_checkpoint, save_sr_checkpoint)
from .data import VideoSequence, sample_patch_pair
from .ensemble import CandidateSet, EnsembleNet, build_ensemble_net, train_ensemble_step
from .errors import ConfigError, TrainingDiverged
from .metrics import clamp_unit, psnr
from .models import SrConfig, SrModel, build_adapted_net
from .optim import (OptimizerState, advance_schedule, clip_grad_norm,
                    optimizer_step, schedule_lr, sr_training_schedule,
                    ensemble_training_schedule)
from .serialize import read_tensor_container, write_tensor_container
from .temporal import SuperImage, build_super_image, temporal_window
from .tensor import Tensor, backward, loss as loss_op, no_grad

_SR_STREAM = 0x7AA1
_ENS_STREAM = 0x7AA2


def step_rng(seed: int, stream: int, step: int) -> np.random.Generator:
    """Stateless per-step RNG; resuming needs no generator state."""
    return np.random.default_rng(np.random.SeedSequence([stream, int(seed), int(step)]))


@dataclass(frozen=True)
class TrainConfig:
    model: SrConfig = SrConfig()
    loss_kind: str = "l1"
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    lr_steps: tuple = (5e-5, 3e-5, 1e-5)
    plateau_patience: int = 5
    plateau_min_improve_db: float = 0.01
    batch_size: int = 16
    steps: int = 2000
    eval_interval: int = 100
    eval_frames: int = 8
    lr_patch: int = 24
    grad_clip: float = 0.0  # 0 disables clipping
    seed: int = 0

    def validate(self) -> list:
        problems = list(self.model.validate())
        if self.loss_kind not in ("l1", "mse"):
            problems.append(f"loss_kind must be 'l1' or 'mse', got {self.loss_kind!r}")
        if self.optimizer not in ("adam", "sgd"):
            problems.append(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 1:
            problems.append(f"steps must be > 0, got {self.steps}")
        if not 1 <= self.eval_interval <= self.steps:
            problems.append(f"eval_interval must be in [1, steps], got {self.eval_interval}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_patch < 1:
            problems.append(f"lr_patch must be >= 1, got {self.lr_patch}")
        if self.eval_frames < 1:
            problems.append(f"eval_frames must be >= 1, got {self.eval_frames}")
        if self.plateau_patience < 1:
            problems.append(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        return problems


@dataclass
class LogRow:
    step: int
    lr: float
    loss: float
    select_psnr: float | None = None


@dataclass
class TrainResult:
    model: object
    log: "list[LogRow]" = field(default_factory=list)
    best_psnr: float = float("-inf")
    checkpoint_path: "Path | None" = None


def write_metric_log(path, rows: Sequence[LogRow]) -> None:
    lines = ["step,lr,loss,select_psnr"]
    for r in rows:
        tail = "" if r.select_psnr is None else f"{r.select_psnr:.6f}"
        lines.append(f"{r.step},{r.lr:.8g},{r.loss:.8g},{tail}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# SR training
# ---------------------------------------------------------------------------

def _select_eval_frames(pairs: Sequence[tuple], budget: int) -> "list[tuple]":
    """Deterministic (pair_index, frame) picks, evenly spaced per sequence."""
    picks = []
    per_seq = max(1, budget // max(1, len(pairs)))
    for i, (lr_seq, _) in enumerate(pairs):
        length = len(lr_seq)
        count = min(per_seq, length)
        for k in range(count):
            picks.append((i, (k * length) // count))
    return picks[:budget] if len(picks) > budget else picks


def _select_psnr(model: SrModel, pairs, picks) -> float:
    values = []
    with no_grad():
        for pair_idx, t in picks:
            lr_seq, hr_seq = pairs[pair_idx]
            window = temporal_window(len(lr_seq), t, model.temporal_radius)
            out = clamp_unit(model(build_super_image(lr_seq.frames, window)))
            values.append(psnr(out, hr_seq.frames[t]))
    return float(np.mean(values))


def _sample_batch(config: TrainConfig, train_pairs, rng) -> "tuple[Tensor, Tensor]":
    radius = config.model.temporal_radius
    lr_parts, hr_parts = [], []
    for _ in range(config.batch_size):
        lr_seq, hr_seq = train_pairs[int(rng.integers(len(train_pairs)))]
        pp = sample_patch_pair(lr_seq, hr_seq, radius, config.lr_patch, rng)
        gt = sample_train_augmentation(rng)
        s = SuperImage(tensor=pp.lr_patch, t=pp.source[1], radius=radius)
        lr_parts.append(apply(gt, s).tensor.data)
        hr_parts.append(apply_spatial(gt, pp.hr_patch).data)
    return (Tensor(np.concatenate(lr_parts, axis=0)),
            Tensor(np.concatenate(hr_parts, axis=0)))


def _float_to_state(v: float) -> str:
    return float(v).hex()


def _float_from_state(s: str) -> float:
    return float.fromhex(s)


def _save_sr_state(path: Path, model: SrModel, opt: OptimizerState, step: int,
                   best_params, best_psnr: float, since_improve: int, seed: int) -> None:
    save_sr_checkpoint(SrModel(model.config, best_params), path)
    save_sr_checkpoint(model, Path(str(path) + ".last"))
    moments = {"__step_count__": np.array([opt.step_count], dtype=np.float32)}
    for name, (m, v) in opt.moments.items():
        moments[f"m:{name}"] = m
        moments[f"v:{name}"] = v
    write_tensor_container(Path(str(path) + ".optim"), moments)
    state = [f"step = {step}",
             f"lr = {_float_to_state(opt.learning_rate)}",
             f"schedule_pos = {opt.schedule_pos}",
             f"best_psnr = {_float_to_state(best_psnr)}",
             f"since_improve = {since_improve}",
             f"seed = {seed}"]
    Path(str(path) + ".state").write_text("\n".join(state) + "\n", encoding="utf-8")


def _load_kv(path: Path) -> dict:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def train_sr(config: TrainConfig, train_pairs: Sequence[tuple],
             select_pairs: Sequence[tuple], checkpoint_path=None,
             resume_from=None) -> TrainResult:
    """Train an adapted SR model; pairs are (lr_sequence, hr_sequence) tuples."""
    problems = config.validate()
    if not train_pairs:
        problems.append("train_sr needs at least one training pair")
    if not select_pairs:
        problems.append("train_sr needs at least one selection pair")
    if problems:
        raise ConfigError(problems)

    best_psnr = float("-inf")
    since_improve = 0
    start_step = 0
    opt = OptimizerState(kind=config.optimizer, learning_rate=config.learning_rate,
                         schedule=tuple((i + 1, lr) for i, lr in enumerate(config.lr_steps)))
    if resume_from is not None:
        resume_from = Path(resume_from)
        model = load_sr_checkpoint(Path(str(resume_from) + ".last"))
        best_params = load_sr_checkpoint(resume_from).params
        moments = read_tensor_container(Path(str(resume_from) + ".optim"))
        opt.step_count = int(moments.pop("__step_count__").reshape(-1)[0])
        for key, arr in moments.items():
            tag, _, name = key.partition(":")
            m, v = opt.moments.get(name, (None, None))
            opt.moments[name] = (arr, v) if tag == "m" else (m, arr)
        state = _load_kv(Path(str(resume_from) + ".state"))
        start_step = int(state["step"])
        opt.learning_rate = _float_from_state(state["lr"])
        opt.schedule_pos = int(state["schedule_pos"])
        best_psnr = _float_from_state(state["best_psnr"])
        since_improve = int(state["since_improve"])
    else:
        model = build_adapted_net(config.model, config.seed)
        best_params = {k: Tensor(p.data.copy(), requires_grad=False)
                       for k, p in model.params.items()}

    picks = _select_eval_frames(select_pairs, config.eval_frames)
    log: list[LogRow] = []
    last_saved: Path | None = None

    for step in range(start_step + 1, config.steps + 1):
        rng = step_rng(config.seed, _SR_STREAM, step)
        batch_lr, batch_hr = _sample_batch(config, train_pairs, rng)
        for p in model.params.values():
            p.zero_grad()
        pred = model.forward_tensor(batch_lr)
        step_loss = loss_op(pred, batch_hr, config.loss_kind)
        value = step_loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(
                f"non-finite loss at step {step}"
                + (f"; last good checkpoint: {last_saved}" if last_saved else ""),
                last_checkpoint=last_saved)
        backward(step_loss, params=model.params.values())
        if config.grad_clip > 0:
            clip_grad_norm(model.params, config.grad_clip)
        optimizer_step(opt, model.params)

        row = LogRow(step=step, lr=opt.learning_rate, loss=value)
        if step % config.eval_interval == 0 or step == config.steps:
            current = _select_psnr(model, select_pairs, picks)
            row.select_psnr = current
            if current > best_psnr + config.plateau_min_improve_db:
                best_psnr = current
                best_params = {k: Tensor(p.data.copy(), requires_grad=False)
                               for k, p in model.params.items()}
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= config.plateau_patience:
                    if advance_schedule(opt):
                        since_improve = 0
            if checkpoint_path is not None:
                _save_sr_state(Path(checkpoint_path), model, opt, step,
                               best_params, best_psnr, since_improve, config.seed)
                last_saved = Path(checkpoint_path)
        log.append(row)

    best_model = SrModel(config.model, {k: Tensor(p.data.copy(), requires_grad=True)
                                        for k, p in best_params.items()})
    if checkpoint_path is not None:
        _save_sr_state(Path(checkpoint_path), model, opt, config.steps,
                       best_params, best_psnr, since_improve, config.seed)
    return TrainResult(model=best_model, log=log, best_psnr=best_psnr,
                       checkpoint_path=Path(checkpoint_path) if checkpoint_path else None)


# ---------------------------------------------------------------------------
# ensemble training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleTrainConfig:
    passes: int = 150
    learning_rate: float = 0.1
    lr_schedule: tuple = ensemble_training_schedule()
    loss_kind: str = "l1"
    seed: int = 0

    def validate(self) -> list:
        problems = []
        if self.passes < 1:
            problems.append(f"passes must be >= 1, got {self.passes}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.loss_kind != "l1":
            problems.append(f"ensemble training uses l1 loss, got {self.loss_kind!r}")
        return problems


@dataclass
class EnsembleSample:
    candidates: "list[Tensor]"
    truth: Tensor
    names: "list[str]" = field(default_factory=list)


def precompute_candidates(models: Mapping[str, SrModel], pairs: Sequence[tuple],
                          self_ensemble: bool = False) -> "list[EnsembleSample]":
    """Run every (frozen) model over every frame once; outputs become constants."""
    from .metrics import _infer_frame  # local import avoids a cycle at module load
    names = list(models)
    samples = []
    for lr_seq, hr_seq in pairs:
        for t in range(len(lr_seq)):
            cands = [_infer_frame(models[n], lr_seq.frames, t, self_ensemble)
                     for n in names]
            samples.append(EnsembleSample(candidates=cands, truth=hr_seq.frames[t],
                                          names=list(names)))
    return samples


def _save_ensemble_state(path: Path, net: EnsembleNet, opt: OptimizerState,
                         done_passes: int, seed: int) -> None:
    save_ensemble_checkpoint(net, path)
    state = [f"pass = {done_passes}",
             f"lr = {_float_to_state(opt.learning_rate)}",
             f"schedule_pos = {opt.schedule_pos}",
             f"step_count = {opt.step_count}",
             f"seed = {seed}"]
    Path(str(path) + ".state").write_text("\n".join(state) + "\n", encoding="utf-8")


def train_ensemble(config: EnsembleTrainConfig, samples: Sequence[EnsembleSample],
                   checkpoint_path=None, resume_from=None) -> TrainResult:
    """Train the fusion score net on precomputed candidate frames (SGD)."""
    problems = config.validate()
    if not samples:
        problems.append("train_ensemble needs at least one sample")
    else:
        n = len(samples[0].candidates)
        if n < 2:
            problems.append(f"ensemble needs >= 2 candidate models, got {n}")
        if any(len(s.candidates) != n for s in samples):
            problems.append("all samples must carry the same number of candidates")
    if problems:
        raise ConfigError(problems)

    start_pass = 0
    opt = OptimizerState(kind="sgd", learning_rate=config.learning_rate,
                         schedule=tuple(config.lr_schedule))
    if resume_from is not None:
        resume_from = Path(resume_from)
        net = load_ensemble_checkpoint(resume_from)
        state = _load_kv(Path(str(resume_from) + ".state"))
        start_pass = int(state["pass"])
        opt.learning_rate = _float_from_state(state["lr"])
        opt.schedule_pos = int(state["schedule_pos"])
        opt.step_count = int(state["step_count"])
    else:
        net = build_ensemble_net(config.seed)

    log: list[LogRow] = []
    for p in range(start_pass + 1, config.passes + 1):
        schedule_lr(opt, p)
        order = step_rng(config.seed, _ENS_STREAM, p).permutation(len(samples))
        losses = []
        for idx in order:
            s = samples[int(idx)]
            cands = CandidateSet(candidates=s.candidates,
                                 names=s.names or [f"model{i}" for i in range(len(s.candidates))])
            losses.append(train_ensemble_step(net, cands, s.truth, opt))
        mean_loss = float(np.mean(losses))
        if not math.isfinite(mean_loss):
            raise TrainingDiverged(f"non-finite ensemble loss in pass {p}",
                                   last_checkpoint=checkpoint_path)
        log.append(LogRow(step=p, lr=opt.learning_rate, loss=mean_loss))
        if checkpoint_path is not None:
            _save_ensemble_state(Path(checkpoint_path), net, opt, p, config.seed)
    return TrainResult(model=net, log=log,
                       checkpoint_path=Path(checkpoint_path) if checkpoint_path else None)
