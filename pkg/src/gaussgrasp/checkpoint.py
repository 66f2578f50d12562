"""Checkpoint directories: ``config.yaml`` plus ``params.npz``.

``params.npz`` holds every entry of the network ``state_dict`` (weights,
biases and normalisation running statistics) under its module-path name.
Directories are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import os
import shutil
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import yaml

from .network import GraspNet, NetworkConfig, build_network

CONFIG_FILE = "config.yaml"
PARAMS_FILE = "params.npz"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(directory, net: GraspNet, extra: Optional[dict] = None) -> Path:
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        doc = {"network": net.cfg.to_dict()}
        doc.update(extra or {})
        (tmp / CONFIG_FILE).write_text(yaml.safe_dump(doc, sort_keys=False))
        arrays = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
        with open(tmp / PARAMS_FILE, "wb") as fh:
            np.savez(fh, **arrays)
        if directory.exists():
            old = directory.with_name(f".{directory.name}.old")
            os.replace(directory, old)
            os.replace(tmp, directory)
            shutil.rmtree(old)
        else:
            os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def read_checkpoint_config(directory) -> dict:
    path = Path(directory) / CONFIG_FILE
    if not path.is_file():
        raise CheckpointError(f"no checkpoint config at {path}")
    return yaml.safe_load(path.read_text()) or {}


def load_checkpoint(directory) -> tuple[GraspNet, dict]:
    """Rebuild the network from a checkpoint; returns ``(net, config_document)``."""
    directory = Path(directory)
    doc = read_checkpoint_config(directory)
    if "network" not in doc:
        raise CheckpointError(f"{directory / CONFIG_FILE} has no 'network' section")
    net = build_network(NetworkConfig.from_dict(doc["network"]))
    params = directory / PARAMS_FILE
    if not params.is_file():
        raise CheckpointError(f"no parameter archive at {params}")
    with np.load(params) as arrays:
        state = {k: torch.from_numpy(arrays[k].copy()) for k in arrays.files}
    missing = set(net.state_dict()) - set(state)
    unexpected = set(state) - set(net.state_dict())
    if missing or unexpected:
        raise CheckpointError(f"parameter names do not match the configured network "
                              f"(missing {sorted(missing)[:3]}, unexpected {sorted(unexpected)[:3]})")
    try:
        net.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(str(exc)) from exc
    net.eval()
    return net, doc
