"""Completion pre-training: Adam, stepped learning rate, alpha schedule.

The global step ``s`` fixes everything about an update: its epoch is
``s // steps_per_epoch``, its batch is a slice of that epoch's permutation,
and alpha comes from ``s`` while the learning rate comes from the epoch.
That is what makes a resumed run equal an uninterrupted one.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimsMismatch, EmptyCloud, InputError, NonFiniteLoss, NumericError, ShapeMismatch
from .losses import alpha_schedule, completion_loss
from .model import (KIND_TRAINING, CompletionSample, ModelDims, ModelParams, backward,
                    dump_checkpoint, forward, init_params, parse_checkpoint, read_checkpoint)

LOG_HEADER = ("step", "epoch", "lr", "alpha", "cd_coarse", "cd_fine", "loss", "ms")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr0: float = 1e-4
    lr_decay: float = 0.7
    lr_every: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise InputError("lr_decay must be in (0, 1]")
        if self.lr_every < 1:
            raise InputError("lr_every must be >= 1")
        if self.max_steps is not None and self.max_steps < 0:
            raise InputError("max_steps must be >= 0")

    def fingerprint(self) -> str:
        """Hash of the fields that shape the trajectory (not its length)."""
        d = asdict(self)
        d.pop("epochs")
        d.pop("max_steps")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def lr_schedule(epoch: int, config: TrainConfig = TrainConfig()) -> float:
    if epoch < 0:
        raise InputError("epoch must be >= 0")
    return config.lr0 * config.lr_decay ** (epoch // config.lr_every)


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place.  Returns ``(params, state)``."""
    if params.names() != grads.names() or any(
            params[n].shape != grads[n].shape or params[n].shape != state.m[n].shape
            for n in params.names()):
        raise ShapeMismatch("params, grads and Adam state disagree on tensor shapes")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, theta in params:
        g = grads[name]
        m = state.m.tensors[name]
        v = state.v.tensors[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class TrainRecord:
    step: int
    epoch: int
    lr: float
    alpha: float
    cd_coarse: float
    cd_fine: float
    loss: float
    ms: float = 0.0


@dataclass
class TrainLog:
    records: list[TrainRecord] = field(default_factory=list)

    def append(self, rec: TrainRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("log steps must be strictly increasing")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, timing: bool = False) -> str:
        """CSV text.  The ms column stays empty unless ``timing`` is set."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for r in self.records:
            w.writerow([r.step, r.epoch, repr(r.lr), repr(r.alpha), repr(r.cd_coarse),
                        repr(r.cd_fine), repr(r.loss), f"{r.ms:.3f}" if timing else ""])
        return buf.getvalue()

    def write(self, path, timing: bool = False) -> None:
        Path(path).write_text(self.to_csv(timing))


@dataclass
class TrainState:
    params: ModelParams
    adam: AdamState
    config: TrainConfig
    n_samples: int

    @property
    def step(self) -> int:
        return self.adam.step

    def to_bytes(self) -> bytes:
        meta = {"config_hash": self.config.fingerprint(), "config": asdict(self.config),
                "n_samples": self.n_samples}
        return dump_checkpoint(self.params, KIND_TRAINING,
                               adam=(self.adam.step, self.adam.m, self.adam.v), meta=meta)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())


def steps_per_epoch(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 1, int(epoch)])).permutation(n)


def _batch_gradient(batch: list[CompletionSample], params: ModelParams, step: int, alpha: float):
    total = params.zeros_like()
    cdc = cdf = loss = 0.0
    for s in batch:
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                _, _, cache = forward(s.partial, params)
        except NumericError as exc:
            raise NonFiniteLoss(f"{exc} at step {step}", step=step) from exc
        value, g, lv = backward(s, params, cache, step, alpha=alpha)
        for name, arr in g:
            total.tensors[name] += arr
        cdc += lv.cd_coarse
        cdf += lv.cd_fine
        loss += value
    k = len(batch)
    for arr in total.tensors.values():
        arr /= k
    return total, cdc / k, cdf / k, loss / k


def _check_dataset(dataset) -> list[CompletionSample]:
    dataset = list(dataset)
    if not dataset:
        raise EmptyCloud("cannot train on an empty dataset")
    return dataset


def run_steps(state: TrainState, dataset: list[CompletionSample], until: int,
              log: TrainLog | None = None) -> TrainLog:
    """Advance ``state`` in place to global step ``until``."""
    log = log if log is not None else TrainLog()
    cfg = state.config
    n = len(dataset)
    spe = steps_per_epoch(n, cfg.batch_size)
    perm_epoch, perm = -1, None
    while state.step < until:
        step = state.step
        epoch = step // spe
        if epoch != perm_epoch:
            perm_epoch, perm = epoch, epoch_permutation(cfg.seed, epoch, n)
        b = step % spe
        idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
        lr = lr_schedule(epoch, cfg)
        alpha = alpha_schedule(step)
        t0 = time.perf_counter()
        grads, cdc, cdf, loss = _batch_gradient([dataset[i] for i in idx], state.params, step, alpha)
        if not (math.isfinite(loss) and all(np.isfinite(g).all() for _, g in grads)):
            raise NonFiniteLoss(f"non-finite loss or gradient at step {step} "
                                f"(epoch {epoch}, lr {lr}, alpha {alpha}, loss {loss})", step=step)
        adam_step(state.params, grads, state.adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        if not all(np.isfinite(p).all() for _, p in state.params):
            raise NonFiniteLoss(f"parameters became non-finite at step {step}", step=step)
        log.append(TrainRecord(step, epoch, lr, alpha, cdc, cdf, loss,
                               1000.0 * (time.perf_counter() - t0)))
    return log


def total_steps(config: TrainConfig, n: int) -> int:
    full = config.epochs * steps_per_epoch(n, config.batch_size)
    return full if config.max_steps is None else min(full, config.max_steps)


def pretrain(dataset, dims: ModelDims, config: TrainConfig = TrainConfig(),
             init: ModelParams | None = None) -> tuple[ModelParams, TrainLog, TrainState]:
    """Train from scratch.  Returns final params, the per-step log and the full state."""
    dataset = _check_dataset(dataset)
    if init is None:
        init = init_params(dims, np.random.default_rng(np.random.SeedSequence([config.seed, 0])))
    elif init.dims != dims:
        raise DimsMismatch("initial params do not match dims")
    params = init.copy()
    state = TrainState(params, AdamState.zeros(params), config, len(dataset))
    log = run_steps(state, dataset, total_steps(config, len(dataset)))
    return state.params, log, state


def resume(checkpoint, dataset, config: TrainConfig) -> tuple[ModelParams, TrainLog, TrainState]:
    """Continue a run from a training checkpoint (path, bytes or parsed)."""
    if isinstance(checkpoint, (bytes, bytearray)):
        ck = parse_checkpoint(bytes(checkpoint))
    elif isinstance(checkpoint, (str, Path)):
        ck = read_checkpoint(checkpoint)
    else:
        ck = checkpoint
    if ck.kind != KIND_TRAINING:
        raise DimsMismatch("checkpoint carries no training state")
    if ck.meta.get("config_hash") != config.fingerprint():
        raise DimsMismatch("config hash mismatch: the run cannot be resumed with different settings")
    dataset = _check_dataset(dataset)
    if ck.meta.get("n_samples") != len(dataset):
        raise DimsMismatch("dataset size differs from the one the checkpoint was trained on")
    state = TrainState(ck.params, AdamState(ck.adam_m, ck.adam_v, ck.adam_step), config, len(dataset))
    log = run_steps(state, dataset, total_steps(config, len(dataset)))
    return state.params, log, state


def evaluate(dataset, params: ModelParams, step: int = 0) -> tuple[float, float, float]:
    """Mean coarse CD, fine CD and loss over ``dataset`` at the alpha of ``step``."""
    dataset = _check_dataset(dataset)
    cdc = cdf = loss = 0.0
    for s in dataset:
        coarse, fine, _ = forward(s.partial, params)
        lv = completion_loss(coarse, fine, s.coarse, s.fine, step)
        cdc += lv.cd_coarse
        cdf += lv.cd_fine
        loss += lv.value
    n = len(dataset)
    return cdc / n, cdf / n, loss / n
