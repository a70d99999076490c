"""Model checkpoints: one container record per parameter plus a config header."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ensemble import EnsembleNet, build_ensemble_net
from .errors import ConfigError
from .models import SrModel, build_adapted_net, config_from_record, config_record
from .serialize import read_tensor_container, write_tensor_container
from .tensor import Tensor

CONFIG_KEY = "__config__"
_ENSEMBLE_KIND_CODE = 2.0


def save_sr_checkpoint(model: SrModel, path) -> None:
    records = {CONFIG_KEY: config_record(model.config)}
    for name, p in model.params.items():
        records[name] = p.data
    write_tensor_container(path, records)


def load_sr_checkpoint(path) -> SrModel:
    records = read_tensor_container(path)
    if CONFIG_KEY not in records:
        raise ConfigError([f"{Path(path)}: missing {CONFIG_KEY} record"])
    config = config_from_record(records[CONFIG_KEY])
    model = build_adapted_net(config, seed=0)
    _restore(model.params, records, path)
    return model


def save_ensemble_checkpoint(net: EnsembleNet, path) -> None:
    records = {CONFIG_KEY: np.array([_ENSEMBLE_KIND_CODE], dtype=np.float32)}
    for name, p in net.params.items():
        records[name] = p.data
    for i, st in enumerate(net.stats):
        records[f"bn{i}.running_mean"] = st.mean
        records[f"bn{i}.running_var"] = st.var
    write_tensor_container(path, records)


def load_ensemble_checkpoint(path) -> EnsembleNet:
    records = read_tensor_container(path)
    header = records.get(CONFIG_KEY)
    if header is None or header.reshape(-1)[0] != _ENSEMBLE_KIND_CODE:
        raise ConfigError([f"{Path(path)}: not an ensemble checkpoint"])
    net = build_ensemble_net(seed=0)
    _restore(net.params, records, path)
    for i, st in enumerate(net.stats):
        st.mean = records[f"bn{i}.running_mean"].astype(st.mean.dtype)
        st.var = records[f"bn{i}.running_var"].astype(st.var.dtype)
    return net


def _restore(params: "dict[str, Tensor]", records, path) -> None:
    missing = [n for n in params if n not in records]
    if missing:
        raise ConfigError([f"{Path(path)}: missing parameter records {missing}"])
    for name, p in params.items():
        arr = records[name]
        if arr.shape != p.data.shape:
            raise ConfigError(
                [f"{Path(path)}: record {name!r} has shape {arr.shape}, expected {p.data.shape}"])
        p.data = arr.astype(p.data.dtype)
