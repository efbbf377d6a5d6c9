"""MAD/RMSE scoring, full-image inference, ablation runs and visual export."""

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .bicubic import imresize
from .checkpoint import load_checkpoint
from .data import center_crop
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .models import count_parameters, get_variant
from .training import TrainConfig, Trainer

log = logging.getLogger(__name__)


def _valid(pred, gt, mask):
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ConfigError(f"metric shape mismatch {pred.shape} vs {gt.shape}")
    if mask is None:
        return pred.ravel(), gt.ravel()
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("no valid pixels to score")
    return pred[mask], gt[mask]


def mad(pred, gt, mask=None, native_scale=1.0):
    """Mean absolute difference over valid pixels, in source units."""
    p, g = _valid(pred, gt, mask)
    return float(np.abs(p - g).mean() * native_scale)


def rmse(pred, gt, mask=None, native_scale=1.0):
    """Root mean squared error over valid pixels, in source units."""
    p, g = _valid(pred, gt, mask)
    return float(np.sqrt(np.mean((p - g) ** 2)) * native_scale)


@dataclass
class EvalResult:
    metric_name: str
    scale: int
    per_image: list = field(default_factory=list)  # [(sample_id, value)]

    @property
    def average(self):
        if not self.per_image:
            return float("nan")
        return float(np.mean([v for _, v in self.per_image]))

    def to_dict(self, variant=""):
        return {"variant": variant, "scale": self.scale, "metric": self.metric_name,
                "per_image": self.per_image, "average": self.average}


def degrade_full(depth, scale):
    """Bicubic down by ``scale`` then back up to the input size, clamped to [0, 1]."""
    h, w = depth.shape
    if h % scale or w % scale:
        raise ConfigError(f"image {h}x{w} not divisible by scale {scale}")
    lr = imresize(depth, (h // scale, w // scale))
    return imresize(lr, (h, w))


def bicubic_predictor(sample, scale):
    return degrade_full(sample.depth_hr, scale)


def model_predictor(model):
    """Wrap a BridgeNet as ``fn(sample, scale) -> (H, W)`` prediction in [0, 1]."""
    dtype = next(model.parameters()).dtype

    def predict(sample, scale):
        lr_up = degrade_full(sample.depth_hr, scale)
        x = torch.from_numpy(lr_up)[None, None].to(dtype)
        rgb = torch.from_numpy(np.moveaxis(sample.rgb, -1, 0))[None].to(dtype)
        model.eval()
        with torch.no_grad():
            pred = model(x, rgb).prediction
        return pred[0, 0].clamp(0.0, 1.0).double().numpy()

    return predict


def evaluate_samples(predict, samples, scale):
    """Score every sample with MAD and RMSE; returns ``{"MAD": ..., "RMSE": ...}``."""
    results = {"MAD": EvalResult("MAD", scale), "RMSE": EvalResult("RMSE", scale)}
    for sample in sorted(samples, key=lambda s: s.sample_id):
        sample = center_crop(sample)
        pred = predict(sample, scale)
        m = mad(pred, sample.depth_hr, sample.valid_mask, sample.native_scale)
        r = rmse(pred, sample.depth_hr, sample.valid_mask, sample.native_scale)
        if not (math.isfinite(m) and math.isfinite(r)):
            raise NumericError(f"non-finite metric on {sample.sample_id}")
        if m > r * (1 + 1e-12) + 1e-12:
            raise NumericError(f"MAD {m} > RMSE {r} on {sample.sample_id}")
        results["MAD"].per_image.append((sample.sample_id, m))
        results["RMSE"].per_image.append((sample.sample_id, r))
    return results


def evaluate_model(checkpoint, samples, scale):
    trainer, header = load_checkpoint(checkpoint)
    if trainer.cfg.scale != scale:
        raise CheckpointError(
            f"checkpoint was trained for x{trainer.cfg.scale}, evaluation asked for x{scale}"
        )
    return evaluate_samples(model_predictor(trainer.model), samples, scale)


# --- ablation -----------------------------------------------------------------


@dataclass
class AblationRow:
    variant: str
    parameters: int
    loss_dsr: float
    loss_mde: float
    mad: float
    rmse: float
    per_image: list


def run_ablation(variants, cfg, train_patches, test_samples, steps):
    """Train each variant from the same seed for ``steps`` steps and score it.

    Rows follow the order of ``variants``.
    """
    rows = []
    for name in variants:
        get_variant(name)
        vcfg = TrainConfig.from_dict({**cfg.to_dict(), "variant": name,
                                      "max_steps": steps, "epochs": None})
        trainer = Trainer(vcfg)
        run = trainer.fit(train_patches)
        last = run[-1] if run else None
        res = evaluate_samples(model_predictor(trainer.model), test_samples, cfg.scale)
        rows.append(AblationRow(
            variant=name,
            parameters=count_parameters(trainer.model),
            loss_dsr=last.loss_dsr if last else None,
            loss_mde=last.loss_mde if last else None,
            mad=res["MAD"].average,
            rmse=res["RMSE"].average,
            per_image=res["MAD"].per_image,
        ))
        log.info("ablation %s: MAD %.4f", name, rows[-1].mad)
    return rows


def _fmt(v, spec):
    return format(v, spec) if v is not None else format("-", f">{int(float(spec[:-1]))}")


def format_table(rows):
    head = f"{'variant':<26} {'params':>9} {'loss_dsr':>9} {'loss_mde':>9} {'MAD':>9} {'RMSE':>9}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.variant:<26} {r.parameters:>9d} {_fmt(r.loss_dsr, '9.5f')} "
            f"{_fmt(r.loss_mde, '9.5f')} {r.mad:9.4f} {r.rmse:9.4f}"
        )
    return "\n".join(lines)


def format_eval(results, title=""):
    lines = [title] if title else []
    mads, rmses = results["MAD"].per_image, results["RMSE"].per_image
    lines.append(f"{'sample':<24} {'MAD':>10} {'RMSE':>10}")
    for (sid, m), (_, r) in zip(mads, rmses):
        lines.append(f"{sid:<24} {m:10.4f} {r:10.4f}")
    lines.append(f"{'average':<24} {results['MAD'].average:10.4f} {results['RMSE'].average:10.4f}")
    return "\n".join(lines)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=lambda o: asdict(o)))


# --- visuals ------------------------------------------------------------------


def _heat(err):
    from matplotlib import colormaps

    peak = err.max() if err.max() > 0 else 1.0
    rgba = colormaps["inferno"](err / peak)
    return (rgba[..., :3] * 255).round().astype(np.uint8)


def _gray8(x):
    return np.repeat((np.clip(x, 0, 1) * 255).round().astype(np.uint8)[..., None], 3, axis=-1)


def export_visuals(predict, samples, scale, out_dir):
    """Write ``<out>/<scale>/<id>_{pred,err,montage}.png`` per sample.

    ``pred`` is a 16-bit grayscale PNG of the normalised prediction. Returns
    the list of written paths and the MAD logged for each sample.
    """
    samples = list(samples)
    if not samples:
        warnings.warn("export_visuals: empty split, nothing written")
        return [], {}
    out = Path(out_dir) / str(scale)
    out.mkdir(parents=True, exist_ok=True)
    written, logged = [], {}
    for sample in sorted(samples, key=lambda s: s.sample_id):
        sample = center_crop(sample)
        pred = predict(sample, scale)
        err = np.abs(pred - sample.depth_hr) * sample.valid_mask
        logged[sample.sample_id] = mad(pred, sample.depth_hr, sample.valid_mask,
                                       sample.native_scale)
        sid = sample.sample_id
        paths = [out / f"{sid}_pred.png", out / f"{sid}_err.png", out / f"{sid}_montage.png"]
        Image.fromarray(np.round(pred * 65535).astype(np.uint16)).save(paths[0])
        heat = _heat(err)
        Image.fromarray(heat, mode="RGB").save(paths[1])
        lr_up = degrade_full(sample.depth_hr, scale)
        montage = np.concatenate(
            [_gray8(lr_up), _gray8(pred), _gray8(sample.depth_hr), heat], axis=1
        )
        Image.fromarray(montage, mode="RGB").save(paths[2])
        written += paths
    return written, logged


def read_prediction(path):
    return np.asarray(Image.open(path), dtype=np.float64) / 65535.0
