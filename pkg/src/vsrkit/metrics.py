"""PSNR and the evaluation harness.

PSNR is computed over all RGB elements of the full frame with MAX = 1 and no
luma conversion or border cropping; that convention is stamped into every
report header so deviations from other conventions stay visible. Identical
inputs return the 100.0 dB sentinel to keep aggregates finite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .augment import self_ensemble_infer
from .ensemble import EnsembleNet, adaptive_fuse, average_fuse
from .errors import ConfigError, ShapeError
from .temporal import build_super_image, temporal_window
from .tensor import Tensor, no_grad

IDENTICAL_SENTINEL_DB = 100.0
PSNR_CONVENTION = "rgb [0,1] max=1 full-frame, no luma conversion, no border crop"
ADAPTIVE_NAME = "adaptive_ensemble"
AVERAGE_NAME = "avg_ensemble"


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB between two [0, 1] images."""
    da = a.data if isinstance(a, Tensor) else np.asarray(a)
    db = b.data if isinstance(b, Tensor) else np.asarray(b)
    if da.shape != db.shape:
        raise ShapeError("shape", da.shape, db.shape, "psnr operands")
    for name, d in (("first", da), ("second", db)):
        if d.min() < -1e-6 or d.max() > 1.0 + 1e-6:
            raise ValueError(f"psnr {name} input outside [0, 1]: "
                             f"range [{d.min():.6g}, {d.max():.6g}]")
    diff = da.astype(np.float64) - db.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return IDENTICAL_SENTINEL_DB
    return 10.0 * math.log10(1.0 / mse)


@dataclass(frozen=True)
class EvalRow:
    model: str
    sequence: str
    frame: int
    psnr_db: float


@dataclass
class EvalReport:
    rows: "list[EvalRow]" = field(default_factory=list)
    self_ensemble: bool = False
    convention: str = PSNR_CONVENTION

    def models(self) -> "list[str]":
        seen = dict.fromkeys(r.model for r in self.rows)
        return list(seen)

    def sequence_mean(self, model: str, sequence: str) -> float:
        vals = [r.psnr_db for r in self.rows if r.model == model and r.sequence == sequence]
        return float(np.mean(vals))

    def model_mean(self, model: str) -> float:
        vals = [r.psnr_db for r in self.rows if r.model == model]
        return float(np.mean(vals))

    def write_csv(self, path) -> None:
        lines = [f"# psnr convention: {self.convention}",
                 f"# self_ensemble: {'on' if self.self_ensemble else 'off'}",
                 "model,sequence,frame,psnr_db"]
        for r in self.rows:
            lines.append(f"{r.model},{r.sequence},{r.frame},{r.psnr_db:.6f}")
        for m in self.models():
            for s in dict.fromkeys(r.sequence for r in self.rows if r.model == m):
                lines.append(f"# sequence_mean,{m},{s},{self.sequence_mean(m, s):.6f}")
        for m in self.models():
            lines.append(f"# model_mean,{m},{self.model_mean(m):.6f}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def summary(self) -> str:
        lines = [f"psnr convention: {self.convention}",
                 f"self-ensemble: {'on' if self.self_ensemble else 'off'}"]
        for m in self.models():
            lines.append(f"  {m}: mean {self.model_mean(m):.4f} dB over "
                         f"{sum(1 for r in self.rows if r.model == m)} frames")
        return "\n".join(lines)


def clamp_unit(t: Tensor) -> Tensor:
    return Tensor(np.clip(t.data, 0.0, 1.0))


def _infer_frame(model, lr_frames, t: int, self_ensemble: bool) -> Tensor:
    window = temporal_window(len(lr_frames), t, model.temporal_radius)
    s = build_super_image(lr_frames, window)
    if self_ensemble:
        out = self_ensemble_infer(model, s)
    else:
        with no_grad():
            out = model(s)
    return clamp_unit(out)


def evaluate(models: Mapping[str, object], dataset: Sequence[tuple],
             self_ensemble: bool = False, ensemble_net: EnsembleNet | None = None,
             include_average: bool = False, threads: int = 1) -> EvalReport:
    """Score models (and optional ensembles) frame by frame against ground truth.

    ``models`` maps a name to anything callable on a super-image that exposes
    ``temporal_radius``; each model gets a window sized for its own radius.
    ``dataset`` is a list of (lr_sequence, hr_sequence) pairs. Ensembles need
    at least two models. Frame order in the report is fixed regardless of the
    worker count.
    """
    if not models:
        raise ConfigError(["evaluate needs at least one model"])
    wants_ensemble = ensemble_net is not None or include_average
    if wants_ensemble and len(models) < 2:
        raise ConfigError(["ensemble evaluation needs at least two models"])
    names = list(models)
    tasks = []
    for lr_seq, hr_seq in dataset:
        if len(lr_seq) != len(hr_seq):
            raise ConfigError([f"{lr_seq.id}: LR has {len(lr_seq)} frames, HR {len(hr_seq)}"])
        for t in range(len(lr_seq)):
            tasks.append((lr_seq, hr_seq, t))

    def run(task):
        lr_seq, hr_seq, t = task
        truth = hr_seq.frames[t]
        outs = {n: _infer_frame(models[n], lr_seq.frames, t, self_ensemble) for n in names}
        rows = [EvalRow(n, lr_seq.id, t, psnr(outs[n], truth)) for n in names]
        if ensemble_net is not None:
            fused = clamp_unit(adaptive_fuse(ensemble_net, [outs[n] for n in names], names))
            rows.append(EvalRow(ADAPTIVE_NAME, lr_seq.id, t, psnr(fused, truth)))
        if include_average:
            avg = clamp_unit(average_fuse([outs[n] for n in names]))
            rows.append(EvalRow(AVERAGE_NAME, lr_seq.id, t, psnr(avg, truth)))
        return rows

    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_task = list(pool.map(run, tasks))
    else:
        per_task = [run(t) for t in tasks]
    report = EvalReport(self_ensemble=self_ensemble)
    for rows in per_task:
        report.rows.extend(rows)
    return report
