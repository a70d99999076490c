"""Geometric training augmentations and the 16-way test-time self-ensemble.

A transform combines four independent bits: vertical flip, horizontal flip, a
90-degree rotation and temporal order reversal. The three spatial bits,
applied in the fixed order vflip -> hflip -> rot90, enumerate the 8 symmetries
of the square exactly once (vflip+hflip equals a 180-degree rotation); with
the temporal bit that gives 16 distinct transforms. All of them are pixel
permutations, so applying and inverting round-trips bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError
from .temporal import SuperImage
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class GeoTransform:
    vflip: bool = False
    hflip: bool = False
    rot90: bool = False
    tflip: bool = False

    @property
    def is_identity(self) -> bool:
        return not (self.vflip or self.hflip or self.rot90 or self.tflip)


def enumerate_self_ensemble() -> "list[GeoTransform]":
    """All 16 transforms, identity first."""
    return [GeoTransform(v, h, r, t)
            for t in (False, True)
            for r in (False, True)
            for h in (False, True)
            for v in (False, True)]


def _spatial_forward(gt: GeoTransform, data: np.ndarray, context: str) -> np.ndarray:
    if gt.rot90 and data.shape[2] != data.shape[3]:
        raise ShapeError("spatial", "square (h == w)", data.shape[2:], f"{context}: rot90")
    if gt.vflip:
        data = data[:, :, ::-1]
    if gt.hflip:
        data = data[:, :, :, ::-1]
    if gt.rot90:
        data = np.rot90(data, 1, axes=(2, 3))
    return np.ascontiguousarray(data)


def apply_spatial(gt: GeoTransform, img: Tensor) -> Tensor:
    """Apply the spatial part (vflip -> hflip -> rot90) to an image tensor."""
    return Tensor(_spatial_forward(gt, img.data, "apply_spatial"))


def apply(gt: GeoTransform, s: SuperImage) -> SuperImage:
    """Transform a super-image; tflip reverses the order of its frame blocks."""
    data = s.tensor.data
    if gt.tflip:
        n, c, h, w = data.shape
        frames = 2 * s.radius + 1
        data = np.ascontiguousarray(
            data.reshape(n, frames, 3, h, w)[:, ::-1].reshape(n, c, h, w))
    data = _spatial_forward(gt, data, "apply")
    return SuperImage(tensor=Tensor(data), t=s.t, radius=s.radius)


def invert_output(gt: GeoTransform, hr: Tensor) -> Tensor:
    """Undo the spatial part on a single output frame (tflip has no spatial effect)."""
    data = hr.data
    if gt.rot90:
        if data.shape[2] != data.shape[3]:
            raise ShapeError("spatial", "square (h == w)", data.shape[2:], "invert_output: rot90")
        data = np.rot90(data, -1, axes=(2, 3))
    if gt.hflip:
        data = data[:, :, :, ::-1]
    if gt.vflip:
        data = data[:, :, ::-1]
    return Tensor(np.ascontiguousarray(data))


def sample_train_augmentation(rng: np.random.Generator) -> GeoTransform:
    """Four independent fair coin flips, one per augmentation."""
    bits = rng.random(4) < 0.5
    return GeoTransform(vflip=bool(bits[0]), hflip=bool(bits[1]),
                        rot90=bool(bits[2]), tflip=bool(bits[3]))


def self_ensemble_infer(model: Callable[[SuperImage], Tensor], s: SuperImage,
                        transforms: "Sequence[GeoTransform] | None" = None,
                        return_info: bool = False):
    """Average the model over transformed inputs, inverting each output first.

    Non-square inputs cannot be rotated, so the rot90 half of the group is
    dropped (8x fallback); the info dict reports how many transforms ran.
    """
    if transforms is None:
        transforms = enumerate_self_ensemble()
    square = s.tensor.data.shape[2] == s.tensor.data.shape[3]
    fell_back = False
    if not square and any(t.rot90 for t in transforms):
        transforms = [t for t in transforms if not t.rot90]
        fell_back = True
    acc = None
    with no_grad():
        for gt in transforms:
            out = invert_output(gt, model(apply(gt, s)))
            acc = out.data.copy() if acc is None else acc + out.data
    mean = Tensor(acc / len(transforms))
    if return_info:
        return mean, {"transforms": len(transforms), "rot90_dropped": fell_back}
    return mean
