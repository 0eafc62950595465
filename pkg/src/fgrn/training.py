"""Losses, optimizer, schedule, data sampling and the joint training step."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BadConfig, ImageTooSmall, NaNLoss, ShapeMismatch
from .flow import FlowModule
from .imageops import bicubic_downscale, quantize_ste
from .layers import Module
from .nets import Downscaler, Upscaler
from .tensor import Tensor, backward, l1_mean

logger = logging.getLogger(__name__)

GUIDANCE_MODES = ("none", "bic", "flow")


@dataclass
class TrainConfig:
    scale: int = 2
    batch_size: int = 4
    hr_patch: int = 96
    lr0: float = 3e-4
    halve_every: int = 200_000
    gamma: float = 1e-3
    guidance_mode: str = "flow"
    total_iters: int = 2000
    seed: int = 0
    width: int = 64
    n_blocks: int = 8
    flow_cells: int = 4
    flow_growth: int = 16
    flow_clamp: float = 1.0
    quantize_flow_output: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    @classmethod
    def paper(cls, scale: int = 2, **overrides) -> "TrainConfig":
        """Batch and patch sizes of the full-scale protocol."""
        return cls(scale=scale, batch_size=36, hr_patch=192, **overrides)

    def validate(self) -> None:
        if self.scale not in (2, 4):
            raise BadConfig(f"scale must be 2 or 4, got {self.scale}")
        if not self.gamma > 0:
            raise BadConfig("gamma must be positive")
        if self.batch_size < 1:
            raise BadConfig("batch_size must be >= 1")
        if self.hr_patch < self.scale or self.hr_patch % self.scale:
            raise BadConfig(f"hr_patch {self.hr_patch} not divisible by scale {self.scale}")
        if self.guidance_mode not in GUIDANCE_MODES:
            raise BadConfig(f"guidance_mode must be one of {GUIDANCE_MODES}")
        if self.halve_every < 1 or self.total_iters < 0 or self.lr0 <= 0:
            raise BadConfig("invalid schedule settings")
        if self.width < 1 or self.n_blocks < 0 or self.flow_cells < 0 or self.flow_growth < 1:
            raise BadConfig("invalid architecture settings")
        if self.flow_clamp <= 0:
            raise BadConfig("flow_clamp must be positive")
        if self.dtype not in ("float32", "float64"):
            raise BadConfig("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype).type

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise BadConfig(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise BadConfig(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(value, types[key], key)
        return cls(**values)


def _parse_value(value: str, typ, key: str):
    try:
        if typ in ("int", int):
            return int(float(value)) if "e" in value.lower() else int(value)
        if typ in ("float", float):
            return float(value)
        if typ in ("bool", bool):
            low = value.lower()
            if low in ("1", "true", "yes"):
                return True
            if low in ("0", "false", "no"):
                return False
            raise ValueError(value)
        return value
    except ValueError as exc:
        raise BadConfig(f"bad value for {key}: {value!r}") from exc


class RescaleModel(Module):
    """G_d, G_u and F for one scale factor. The three share no parameters."""

    def __init__(self, cfg: TrainConfig):
        self.config = cfg
        self.scale = cfg.scale
        rng = np.random.default_rng(cfg.seed)
        dtype = cfg.np_dtype
        self.down = Downscaler(cfg.scale, rng, cfg.width, cfg.n_blocks, dtype)
        self.up = Upscaler(cfg.scale, rng, cfg.width, cfg.n_blocks, dtype)
        self.flow = FlowModule(rng, cfg.flow_cells, cfg.flow_growth, cfg.flow_clamp, dtype)

    @property
    def dtype(self):
        return self.config.np_dtype

    def rescale_parameters(self) -> list[Tensor]:
        return self.down.parameters() + self.up.parameters()

    def summary(self) -> dict[str, int]:
        return {
            "down": self.down.num_parameters(),
            "up": self.up.num_parameters(),
            "flow": self.flow.num_parameters(),
            "total": self.num_parameters(),
        }


# -- losses -------------------------------------------------------------------
def _finite(name: str, loss: Tensor) -> Tensor:
    if not np.isfinite(loss.data).all():
        raise NaNLoss(f"{name} is not finite ({loss.item()})")
    return loss


def loss_rec(y: Tensor, model: RescaleModel, x: Tensor | None = None) -> Tensor:
    """mean |y - G_u(Q(G_d(y)))|; pass ``x`` to reuse an existing G_d output."""
    if x is None:
        x = model.down(y)
    return _finite("L_rec", l1_mean(model.up(quantize_ste(x)), y))


def loss_guide(x: Tensor, y_bic: Tensor, flow: FlowModule, gamma: float = 1e-3,
               quantize_output: bool = False) -> Tensor:
    """mean |F(x) - y_bic| - gamma * log|det J_F| / numel(x).

    ``x`` is detached first, so only F receives gradients. The log-det is
    divided by the element count so it sits on the same per-element footing
    as the mean L1 term.
    """
    xd = x.detach()
    out, logdet = flow.forward(xd)
    if quantize_output:
        out = quantize_ste(out)
    return _finite("L_guide", l1_mean(out, y_bic) - logdet * (gamma / xd.size))


def loss_bic_baseline(x: Tensor, y_bic: Tensor) -> Tensor:
    return _finite("L_bic", l1_mean(x, y_bic))


# -- optimizer ------------------------------------------------------------------
@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float, index: Sequence[int] | None = None) -> None:
    """Bias-corrected Adam update.

    ``index`` maps each param to its slot in ``state`` (defaults to position);
    a ``None`` gradient is treated as zero.
    """
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for j, (p, g) in enumerate(zip(params, grads)):
        i = j if index is None else index[j]
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * state.m[i] + (1.0 - b1) * g
        v = b2 * state.v[i] + (1.0 - b2) * (g * g)
        state.m[i], state.v[i] = m, v
        step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - step).astype(p.dtype)


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    return cfg.lr0 * 0.5 ** (iteration // cfg.halve_every)


# -- data -----------------------------------------------------------------------
def sample_batch(dataset: Sequence[np.ndarray], cfg: TrainConfig, rng: np.random.Generator) -> Tensor:
    """Random square crops with a uniform 0/90/180/270 rotation and a p=0.5 flip."""
    p = cfg.hr_patch
    for img in dataset:
        if img.shape[1] < p or img.shape[2] < p:
            raise ImageTooSmall(f"image {img.shape[1]}x{img.shape[2]} smaller than patch {p}")
    out = np.empty((cfg.batch_size, 3, p, p), dtype=cfg.np_dtype)
    for b in range(cfg.batch_size):
        img = dataset[rng.integers(len(dataset))]
        top = rng.integers(img.shape[1] - p + 1)
        left = rng.integers(img.shape[2] - p + 1)
        k = rng.integers(4)
        flip = rng.random() < 0.5
        crop = np.rot90(img[:, top:top + p, left:left + p], k, axes=(1, 2))
        if flip:
            crop = crop[:, :, ::-1]
        out[b] = crop
    return Tensor(out)


# -- training step ----------------------------------------------------------------
@dataclass
class Trainer:
    """Model plus optimizer state; the unit the training loop advances."""

    model: RescaleModel
    state: AdamState
    iteration: int = 0
    history: list[dict] = field(default_factory=list)

    @classmethod
    def create(cls, cfg: TrainConfig) -> "Trainer":
        model = RescaleModel(cfg)
        return cls(model, AdamState.for_params(model.parameters()))


def train_step(model: RescaleModel, batch: Tensor, state: AdamState, cfg: TrainConfig,
               iteration: int = 0) -> dict[str, float]:
    """One joint update.

    G_d and G_u follow L_rec (plus L_bic under mode ``bic``); F follows
    L_guide under mode ``flow`` and is left untouched otherwise.
    """
    params = model.parameters()
    for p in params:
        p.grad = None
    mode = cfg.guidance_mode
    x = model.down(batch)
    l_rec = loss_rec(batch, model, x)
    total = l_rec
    l_guide = None
    y_bic = None
    if mode in ("bic", "flow"):
        y_bic = Tensor(bicubic_downscale(batch.data, cfg.scale).astype(batch.dtype))
    if mode == "bic":
        l_guide = loss_bic_baseline(x, y_bic)
        total = total + l_guide
    elif mode == "flow":
        l_guide = loss_guide(quantize_ste(x), y_bic, model.flow, cfg.gamma, cfg.quantize_flow_output)
        total = total + l_guide
    backward(total)

    lr = lr_at(iteration, cfg)
    group = model.rescale_parameters()
    if mode == "flow":
        group = group + model.flow.parameters()
    slot = {id(p): i for i, p in enumerate(params)}
    adam_step(group, [p.grad for p in group], state, lr, [slot[id(p)] for p in group])
    return {
        "iter": iteration,
        "lr": lr,
        "l_rec": l_rec.item(),
        "l_guide": 0.0 if l_guide is None else l_guide.item(),
    }


def train(cfg: TrainConfig, dataset: Sequence[np.ndarray],
          on_step: Callable[[dict], None] | None = None) -> Trainer:
    """Run ``cfg.total_iters`` steps from a fresh model; batches come from a seed-derived stream."""
    trainer = Trainer.create(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    data = [np.asarray(img, dtype=cfg.np_dtype) for img in dataset]
    for it in range(cfg.total_iters):
        batch = sample_batch(data, cfg, rng)
        rec = train_step(trainer.model, batch, trainer.state, cfg, it)
        trainer.history.append(rec)
        trainer.iteration = it + 1
        if on_step is not None:
            on_step(rec)
        if it % 100 == 0:
            logger.info("iter %d lr %.2e l_rec %.5f l_guide %.5f", it, rec["lr"], rec["l_rec"], rec["l_guide"])
    return trainer
