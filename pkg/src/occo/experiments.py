"""Desk-scale experiment harnesses on the synthetic shape benchmark.

Used by the acceptance suite and handy from a notebook.  Everything is
derived from one integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import normalize_unit_sphere, sample_mesh
from .dataset import GenConfig, derive_rng, generate_dataset
from .model import ModelDims, ModelParams, init_params
from .occlusion import occlude, sample_views
from .probes import ProbeRow, embed, linear_probe, robustness_probe
from .synthetic import LabeledMesh, make_shapes
from .train import TrainConfig, TrainLog, evaluate, pretrain

# wide extent spread keeps per-axis size useless as a class cue for the probe
BENCH_SPREAD = 0.6
# clustering needs classes to dominate the embedding's variance, so shapes vary less
CLUSTER_SPREAD = 0.15


@dataclass(frozen=True)
class SmokeConfig:
    n_shapes: int = 20
    n_input: int = 256
    n_coarse: int = 64
    n_fine: int = 1024
    views: int = 1
    steps: int = 200
    batch_size: int = 8
    lr0: float = 1e-3
    seed: int = 0


@dataclass
class SmokeResult:
    initial: tuple[float, float, float]
    final: tuple[float, float, float]
    params: ModelParams
    log: TrainLog
    samples: list = field(repr=False, default_factory=list)

    @property
    def fine_ratio(self) -> float:
        return self.final[1] / self.initial[1]


def smoke_dims(cfg: SmokeConfig = SmokeConfig()) -> ModelDims:
    side = int(round(np.sqrt(cfg.n_fine / cfg.n_coarse)))
    return ModelDims(n_coarse=cfg.n_coarse, grid_side=side)


def smoke_training(cfg: SmokeConfig = SmokeConfig()) -> SmokeResult:
    """Train on a few synthetic shapes; compare dataset CD before and after."""
    rng = derive_rng(cfg.seed, 101)
    shapes = make_shapes(-(-cfg.n_shapes // 3), rng)[:cfg.n_shapes]
    samples, _ = generate_dataset(
        [s.mesh for s in shapes],
        GenConfig(views=cfg.views, n_input=cfg.n_input, n_coarse=cfg.n_coarse,
                  n_fine=cfg.n_fine, seed=cfg.seed))
    dims = smoke_dims(cfg)
    tcfg = TrainConfig(epochs=10 ** 6, batch_size=cfg.batch_size, lr0=cfg.lr0,
                       max_steps=cfg.steps, seed=cfg.seed)
    init = init_params(dims, derive_rng(cfg.seed, 0))
    before = evaluate(samples, init)
    params, log, _ = pretrain(samples, dims, tcfg, init=init)
    return SmokeResult(before, evaluate(samples, params), params, log, samples)


@dataclass(frozen=True)
class TransferConfig:
    train_per_class: int = 20
    test_per_class: int = 10
    views: int = 8
    steps: int = 400
    batch_size: int = 8
    lr0: float = 1e-3
    n_points: int = 256
    spread: float = BENCH_SPREAD


@dataclass
class TransferResult:
    seed: int
    acc_pretrained: float
    acc_random: float
    pretrained: ModelParams
    random_init: ModelParams
    test_clouds: list = field(repr=False, default_factory=list)
    test_labels: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def gain(self) -> float:
        return self.acc_pretrained - self.acc_random


def probe_clouds(shapes: list[LabeledMesh], n_points: int, seed: int, tag: int) -> list[np.ndarray]:
    """One occluded partial view per shape, as a downstream encoder would see it."""
    out = []
    for i, s in enumerate(shapes):
        rng = derive_rng(seed, tag, i)
        pts = normalize_unit_sphere(sample_mesh(s.mesh, n_points, rng)).points
        out.append(occlude(pts, sample_views(1, rng)[0]).cloud.points)
    return out


def transfer_run(seed: int, cfg: TransferConfig = TransferConfig()) -> TransferResult:
    """Linear-probe accuracy of a pretrained vs a random-init encoder (same init)."""
    rng = derive_rng(seed, 99)
    train_shapes = make_shapes(cfg.train_per_class, rng, cfg.spread)
    test_shapes = make_shapes(cfg.test_per_class, rng, cfg.spread)
    samples, _ = generate_dataset([s.mesh for s in train_shapes],
                                  GenConfig(views=cfg.views, n_input=cfg.n_points, seed=seed))
    dims = ModelDims()
    init = init_params(dims, derive_rng(seed, 0))
    tcfg = TrainConfig(epochs=10 ** 6, batch_size=cfg.batch_size, lr0=cfg.lr0,
                       max_steps=cfg.steps, seed=seed)
    params, _, _ = pretrain(samples, dims, tcfg, init=init)
    Xtr = probe_clouds(train_shapes, cfg.n_points, seed, 1)
    Xte = probe_clouds(test_shapes, cfg.n_points, seed, 2)
    ytr = np.array([s.label for s in train_shapes])
    yte = np.array([s.label for s in test_shapes])
    acc = {}
    for key, p in (("pre", params), ("rand", init)):
        acc[key] = linear_probe(embed(Xtr, p), ytr, embed(Xte, p), yte)
    return TransferResult(seed, acc["pre"], acc["rand"], params, init, Xte, yte)


def robustness_table(pretrained: ModelParams, random_init: ModelParams, clouds, labels,
                     seed: int = 0, n_seeds: int = 10) -> dict[str, list[ProbeRow]]:
    return {
        "occo": robustness_probe(pretrained, clouds, labels, seed, n_seeds),
        "random": robustness_probe(random_init, clouds, labels, seed, n_seeds),
    }


def clustering_benchmark(seed: int, n_per_class: int = 30, n_points: int = 256,
                         spread: float = CLUSTER_SPREAD):
    """Full normalized clouds and labels for the transformation-robustness table."""
    shapes = make_shapes(n_per_class, derive_rng(seed, 98), spread)
    clouds = [normalize_unit_sphere(sample_mesh(s.mesh, n_points, derive_rng(seed, 5, i))).points
              for i, s in enumerate(shapes)]
    return clouds, np.array([s.label for s in shapes])
