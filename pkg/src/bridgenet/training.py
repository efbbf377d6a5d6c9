"""Joint training with two Adam optimizers over disjoint parameter sets.

L_DSR updates DSRNet + HABdg only; L_MDE updates MDENet + CGBdg only, even
though both losses back-propagate across the bridges. ``shared_gradients``
instead hands each optimizer the gradient of L_DSR + L_MDE.
"""

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import ConfigError, DataError, NumericError
from .models import BridgeNet, ModelConfig, get_variant

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    scale: int = 8
    batch_size: int = 8
    lr0: float = 1e-4
    betas: tuple = (0.9, 0.99)
    eps: float = 1e-8
    decay_every: int = 100
    decay_factor: float = 0.1
    epochs: int = None
    max_steps: int = None
    seed: int = 0
    variant: str = "full"
    shared_gradients: bool = False
    mde_loss_weight: float = 1.0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        self.betas = tuple(self.betas)
        if self.scale not in (4, 8, 16):
            raise ConfigError(f"scale must be 4, 8 or 16, got {self.scale}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.lr0 > 0:
            raise ConfigError("lr0 must be positive")
        get_variant(self.variant)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self):
        """Hash of everything that fixes parameter shapes and optimizer semantics."""
        d = self.to_dict()
        for k in ("epochs", "max_steps", "seed"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class StepMetrics:
    loss_dsr: float  # None when the variant has no DSRNet
    loss_mde: float  # None when the variant has no MDENet
    lr: float
    step: int
    epoch: int


def lr_at_epoch(epoch, lr0=1e-4, decay_every=100, decay_factor=0.1):
    return lr0 * decay_factor ** (epoch // decay_every)


def l1_loss(pred, gt, mask=None):
    """Mean |pred - gt| over valid pixels."""
    if pred.shape != gt.shape:
        raise ConfigError(f"l1_loss shape mismatch {tuple(pred.shape)} vs {tuple(gt.shape)}")
    diff = (pred - gt).abs()
    if mask is None:
        return diff.mean()
    n = mask.sum()
    if n == 0:
        raise DataError("degenerate batch: every pixel is masked out")
    return (diff * mask).sum() / n


def collate(batch, device="cpu", dtype=torch.float32):
    """Stack PatchPairs into (lr_up, rgb, hr, mask) NCHW tensors."""
    if not batch:
        raise DataError("empty batch")

    def t(arrays):
        return torch.from_numpy(np.stack(arrays)).to(device=device, dtype=dtype)

    lr_up = t([p.lr_up[None] for p in batch])
    rgb = t([np.moveaxis(p.rgb, -1, 0) for p in batch])
    hr = t([p.hr_depth[None] for p in batch])
    mask = t([p.mask[None] for p in batch])
    return lr_up, rgb, hr, mask


def build_model(cfg):
    torch.manual_seed(cfg.seed)
    return BridgeNet(cfg.model, cfg.variant)


def epoch_order(n, seed, epoch):
    return np.random.default_rng([seed, epoch]).permutation(n)


class Trainer:
    def __init__(self, cfg, model=None, dtype=torch.float32, channels_last=True):
        self.cfg = cfg
        self.dtype = dtype
        self.memory_format = torch.channels_last if channels_last else torch.contiguous_format
        self.model = (model if model is not None else build_model(cfg)).to(dtype)
        self.model.to(memory_format=self.memory_format)
        kw = dict(lr=cfg.lr0, betas=cfg.betas, eps=cfg.eps)
        dsr, mde = self.model.dsr_parameters(), self.model.mde_parameters()
        self.opt_dsr = torch.optim.Adam(dsr, **kw) if dsr else None
        self.opt_mde = torch.optim.Adam(mde, **kw) if mde else None
        self.epoch = 0
        self.step = 0  # global step counter
        self.epoch_step = 0  # batches already consumed in the current epoch
        self.history = []

    @property
    def optimizers(self):
        return [o for o in (self.opt_dsr, self.opt_mde) if o is not None]

    def set_epoch(self, epoch):
        self.epoch = epoch
        lr = lr_at_epoch(epoch, self.cfg.lr0, self.cfg.decay_every, self.cfg.decay_factor)
        for opt in self.optimizers:
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    def losses(self, batch):
        lr_up, rgb, hr, mask = collate(batch, dtype=self.dtype)
        fmt = self.memory_format
        out = self.model(lr_up.contiguous(memory_format=fmt), rgb.contiguous(memory_format=fmt))
        loss_dsr = l1_loss(out.d_sr, hr, mask) if out.d_sr is not None else None
        loss_mde = l1_loss(out.d_de, hr, mask) if out.d_de is not None else None
        return loss_dsr, loss_mde

    def train_step(self, batch, which="both"):
        """One joint forward and the two partitioned Adam updates.

        ``which`` restricts the update to ``"dsr"`` or ``"mde"`` (isolation tests).
        """
        if which not in ("both", "dsr", "mde"):
            raise ConfigError(f"which must be both/dsr/mde, got {which!r}")
        self.model.train()
        loss_dsr, loss_mde = self.losses(batch)
        values = [v.item() for v in (loss_dsr, loss_mde) if v is not None]
        if not all(math.isfinite(v) for v in values):
            lr = self.optimizers[0].param_groups[0]["lr"]
            raise NumericError(
                f"non-finite loss at step {self.step} (epoch {self.epoch}, lr {lr:g}): "
                f"loss_dsr={loss_dsr}, loss_mde={loss_mde}"
            )

        w = self.cfg.mde_loss_weight
        if self.cfg.shared_gradients and loss_dsr is not None and loss_mde is not None:
            total = loss_dsr + w * loss_mde
            jobs = [(self.opt_dsr, total, self.model.dsr_parameters()),
                    (self.opt_mde, total, self.model.mde_parameters())]
        else:
            jobs = []
            if loss_dsr is not None:
                jobs.append((self.opt_dsr, loss_dsr, self.model.dsr_parameters()))
            if loss_mde is not None and w != 0:
                jobs.append((self.opt_mde, w * loss_mde, self.model.mde_parameters()))
        if which != "both":
            target = self.opt_dsr if which == "dsr" else self.opt_mde
            jobs = [j for j in jobs if j[0] is target]
        # Gradients for every job are taken before any parameter moves.
        grads = []
        for k, (opt, loss, params) in enumerate(jobs):
            params = [p for p in params if p.requires_grad]
            g = torch.autograd.grad(loss, params, retain_graph=k < len(jobs) - 1,
                                    allow_unused=True)
            grads.append((opt, params, g))
        for opt, params, g in grads:
            for p, gp in zip(params, g):
                p.grad = gp
            opt.step()
            opt.zero_grad(set_to_none=True)

        self.step += 1
        m = StepMetrics(
            loss_dsr=loss_dsr.item() if loss_dsr is not None else None,
            loss_mde=loss_mde.item() if loss_mde is not None else None,
            lr=self.optimizers[0].param_groups[0]["lr"],
            step=self.step,
            epoch=self.epoch,
        )
        self.history.append(m)
        return m

    def batches(self, patches, epoch):
        order = epoch_order(len(patches), self.cfg.seed, epoch)
        bs = self.cfg.batch_size
        for start in range(0, len(order), bs):
            yield [patches[i] for i in order[start:start + bs]]

    def fit(self, patches, epochs=None, max_steps=None, on_step=None, on_epoch=None):
        """Train from the current (epoch, epoch_step) position.

        Stops after ``epochs`` total epochs or ``max_steps`` total steps,
        whichever comes first; ``None`` leaves that limit open. Returns the metrics of the steps run here.
        """
        if not patches:
            raise DataError("no training patches")
        epochs = self.cfg.epochs if epochs is None else epochs
        max_steps = self.cfg.max_steps if max_steps is None else max_steps
        if epochs is None and max_steps is None:
            raise ConfigError("set epochs or max_steps")
        epochs = math.inf if epochs is None else epochs
        run = []
        epoch = self.epoch
        while epoch < epochs:
            self.set_epoch(epoch)
            for k, batch in enumerate(self.batches(patches, epoch)):
                if k < self.epoch_step:
                    continue
                if max_steps is not None and self.step >= max_steps:
                    return run
                m = self.train_step(batch)
                self.epoch_step = k + 1
                run.append(m)
                if on_step is not None:
                    on_step(m)
            if on_epoch is not None:
                on_epoch(epoch, run)
            epoch += 1
            self.epoch, self.epoch_step = epoch, 0
        return run
