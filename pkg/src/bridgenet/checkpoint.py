"""Single-file checkpoints.

Layout::

    8 bytes   magic  b"BRGNCKPT"
    4 bytes   format version, little-endian uint32
    4 bytes   header length N, little-endian uint32
    N bytes   UTF-8 JSON header: config, config_hash, epoch, epoch_step,
              step, metrics, payload_sha256
    rest      torch.save payload: model state and both optimizer states

Writes go to a temporary file that is renamed into place.
"""

import hashlib
import io
import json
import os
import struct
from pathlib import Path

import torch

from .errors import CheckpointError
from .training import TrainConfig, Trainer

MAGIC = b"BRGNCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def save_checkpoint(trainer, path, metrics=None):
    buf = io.BytesIO()
    torch.save(
        {
            "model": trainer.model.state_dict(),
            "opt_dsr": trainer.opt_dsr.state_dict() if trainer.opt_dsr else None,
            "opt_mde": trainer.opt_mde.state_dict() if trainer.opt_mde else None,
        },
        buf,
    )
    payload = buf.getvalue()
    header = json.dumps(
        {
            "config": trainer.cfg.to_dict(),
            "config_hash": trainer.cfg.config_hash(),
            "epoch": trainer.epoch,
            "epoch_step": trainer.epoch_step,
            "step": trainer.step,
            "metrics": metrics or {},
            "dtype": str(trainer.dtype).replace("torch.", ""),
            "payload_sha256": hashlib.sha256(payload).hexdigest(),
        },
        default=list,
    ).encode()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        f.write(header)
        f.write(payload)
    os.replace(tmp, path)
    return path


def read_checkpoint(path):
    """Return (header, payload_state) after verifying magic, version and digest."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    payload = blob[start + hlen:]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CheckpointError(f"{path}: payload digest mismatch (file corrupt)")
    state = torch.load(io.BytesIO(payload), map_location="cpu", weights_only=True)
    return header, state


def load_checkpoint(path, cfg=None):
    """Rebuild a Trainer (model + both optimizers + counters) from ``path``.

    If ``cfg`` is given its config hash must match the stored one.
    """
    header, state = read_checkpoint(path)
    stored = TrainConfig.from_dict(header["config"])
    if cfg is not None and cfg.config_hash() != header["config_hash"]:
        raise CheckpointError(
            f"{path}: config hash {header['config_hash']} does not match requested "
            f"{cfg.config_hash()}; architecture or optimizer settings differ"
        )
    use = cfg if cfg is not None else stored
    dtype = getattr(torch, header.get("dtype", "float32"))
    trainer = Trainer(use, dtype=dtype)
    trainer.model.load_state_dict(state["model"])
    for name in ("opt_dsr", "opt_mde"):
        opt = getattr(trainer, name)
        if (opt is None) != (state[name] is None):
            raise CheckpointError(f"{path}: optimizer layout differs for {name}")
        if opt is not None:
            opt.load_state_dict(state[name])
    trainer.epoch = header["epoch"]
    trainer.epoch_step = header["epoch_step"]
    trainer.step = header["step"]
    return trainer, header
