"""REINFORCE training with the locally-smoothed gradient.

Each step samples a batch of tours from the policy, improves them with the
combined local search, and moves the parameters so trajectories whose
improved length beats the baseline become more likely.  Instance sizes
follow a stochastic curriculum: a Gaussian bump over the size range whose
mean tracks the epoch index, softmaxed into a categorical distribution.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .canonical import PreprocessConfig
from .core import Instance, InvalidArgument, random_instance
from .local_search import LocalSearchConfig, combined_local_search
from .policy import (
    DecodeMode,
    PolicyParams,
    init_params,
    rollout,
    save_checkpoint,
)
from .rng import RngStream

GRAD_CLIP_NORM = 1.0


@dataclass
class TrainConfig:
    epochs: int = 200
    steps_per_epoch: int = 1000
    batch_size: int = 128
    lr: float = 1e-3
    lr_decay: float = 0.96
    sigma_n: float = 3.0
    size_min: int = 10
    size_max: int = 50
    h: int = 128
    n_gnn: int = 3
    mlp_hidden: tuple[int, int] = (128, 256)
    ls: LocalSearchConfig = field(default_factory=LocalSearchConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    use_equivariance: bool = True
    use_rollout_baseline: bool = True
    use_interleaved_ls: bool = True
    use_curriculum: bool = True
    use_rl: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise InvalidArgument("epochs, steps and batch size must be positive")
        if self.lr <= 0:
            raise InvalidArgument("lr must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise InvalidArgument("lr_decay must be in (0, 1]")
        if self.sigma_n <= 0:
            raise InvalidArgument("sigma_n must be positive")
        if self.size_min < 3 or self.size_max < self.size_min:
            raise InvalidArgument("need 3 <= size_min <= size_max")

    def effective_preprocess(self) -> PreprocessConfig:
        if not self.use_equivariance:
            return PreprocessConfig.disabled()
        return self.preprocess


def curriculum_dist(epoch: int, sigma_n: float, size_min: int, size_max: int) -> np.ndarray:
    """Categorical distribution over sizes [size_min..size_max] at an epoch.

    Gaussian density with mean `epoch` evaluated at each size, then softmax.
    """
    if epoch < 1:
        raise InvalidArgument("epoch index starts at 1")
    sizes = np.arange(size_min, size_max + 1, dtype=np.float64)
    g = np.exp(-0.5 * ((sizes - epoch) / sigma_n) ** 2) / (np.sqrt(2 * np.pi) * sigma_n)
    z = np.exp(g - g.max())
    p = z / z.sum()
    if np.count_nonzero(p == p.max()) > 1:
        # the densities underflowed (epoch far outside the size range) and
        # the softmax collapsed to exact uniform; restore the Gaussian
        # ordering with an epsilon ramp so the mode stays at the clamped mean
        d = np.abs(sizes - epoch)
        p = p + (d.max() - d) * (1e-15 / max(d.max(), 1.0))
        p = p / p.sum()
    return p


def sample_size(epoch: int, config: TrainConfig, rng: RngStream) -> int:
    if not config.use_curriculum:
        return config.size_max
    p = curriculum_dist(epoch, config.sigma_n, config.size_min, config.size_max)
    return int(config.size_min + rng.generator.choice(p.shape[0], p=p))


@dataclass
class StepStats:
    mean_raw_len: float
    mean_improved_len: float
    mean_advantage: float
    grad_norm: float
    clipped: bool
    updated: bool


def smoothed_policy_gradient_step(
    batch: list[Instance],
    params: PolicyParams,
    config: TrainConfig,
    rng: RngStream,
    lr: float,
) -> StepStats:
    """One REINFORCE update over a batch of same-size instances.

    Advantage of item b is improved-length minus baseline; the parameter
    step is lr * (-1/B) * sum_b advantage_b * grad log-prob_b, clipped at
    global norm 1.  A batch where local search improves nothing yields an
    exactly zero update.  Non-finite gradients abort the step and keep the
    previous parameters.
    """
    n0 = batch[0].n
    if any(inst.n != n0 for inst in batch):
        raise InvalidArgument("batch instances must share one size")
    B = len(batch)
    params.zero_grad()
    raw_lens = np.empty(B)
    imp_lens = np.empty(B)
    advs = np.empty(B)
    any_grad = False
    for b, inst in enumerate(batch):
        res = rollout(inst, params, mode=DecodeMode.SAMPLE, rng=rng.derive(b, 0), record=True)
        improved = combined_local_search(inst, res.tour, config.ls, rng=rng.derive(b, 1))
        raw_lens[b] = res.tour.length
        imp_lens[b] = improved.length
        target = improved.length if config.use_interleaved_ls else res.tour.length
        if config.use_rollout_baseline and config.use_interleaved_ls:
            baseline = res.tour.length
        else:
            # self-critic: greedy rollout length on the same instance
            baseline = rollout(inst, params, mode=DecodeMode.GREEDY).tour.length
        adv = target - baseline
        advs[b] = adv
        if adv != 0.0:
            ad.backward(res.tape, res.log_prob_tensor, seed=-adv / B)
            any_grad = True
    stats = StepStats(
        mean_raw_len=float(raw_lens.mean()),
        mean_improved_len=float(imp_lens.mean()),
        mean_advantage=float(advs.mean()),
        grad_norm=0.0,
        clipped=False,
        updated=False,
    )
    if not any_grad:
        return stats
    sq = 0.0
    finite = True
    for _, t in params.named():
        if t.grad is not None:
            if not np.all(np.isfinite(t.grad)):
                finite = False
                break
            sq += float((t.grad * t.grad).sum())
    if not finite:
        params.zero_grad()
        return stats
    norm = np.sqrt(sq)
    scale = 1.0
    if norm > GRAD_CLIP_NORM:
        scale = GRAD_CLIP_NORM / norm
        stats.clipped = True
    for _, t in params.named():
        if t.grad is not None:
            t.value += lr * scale * t.grad
    params.clamp_lambda()
    stats.grad_norm = float(norm)
    stats.updated = True
    return stats


def greedy_ls_mean(
    params: PolicyParams,
    instances: list[Instance],
    ls_config: LocalSearchConfig,
    rng: RngStream,
) -> float:
    """Mean tour length of greedy rollout followed by combined local search."""
    total = 0.0
    for i, inst in enumerate(instances):
        tour = rollout(inst, params, mode=DecodeMode.GREEDY).tour
        improved = combined_local_search(inst, tour, ls_config, rng=rng.derive(i))
        total += improved.length
    return total / len(instances)


def train(
    config: TrainConfig,
    rng: RngStream,
    out_dir: str | Path | None = None,
    params: PolicyParams | None = None,
    progress=None,
) -> tuple[PolicyParams, list[dict]]:
    """Full training loop: per epoch, draw a size from the curriculum, run
    steps_per_epoch batches, decay the learning rate, write a checkpoint.

    Returns the trained parameters and the per-step log records; the log is
    also written line-delimited to <out_dir>/train_log.jsonl.
    """
    if params is None:
        params = init_params(
            rng.derive(0),
            h=config.h,
            n_gnn=config.n_gnn,
            mlp_hidden=config.mlp_hidden,
            preprocess=config.effective_preprocess(),
        )
    out_path = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_file = open(out_path / "train_log.jsonl", "w")
    log: list[dict] = []
    lr = config.lr
    try:
        for epoch in range(1, config.epochs + 1):
            size = sample_size(epoch, config, rng.derive(1, epoch))
            for step in range(1, config.steps_per_epoch + 1):
                if not config.use_rl:
                    break
                t0 = time.perf_counter()
                batch = [
                    random_instance(size, rng.derive(2, epoch, step, b))
                    for b in range(config.batch_size)
                ]
                stats = smoothed_policy_gradient_step(
                    batch, params, config, rng.derive(3, epoch, step), lr
                )
                row = {
                    "epoch": epoch,
                    "step": step,
                    "n": size,
                    "mean_raw_len": round(stats.mean_raw_len, 6),
                    "mean_improved_len": round(stats.mean_improved_len, 6),
                    "mean_advantage": round(stats.mean_advantage, 6),
                    "lr": lr,
                    "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
                }
                log.append(row)
                if log_file is not None:
                    log_file.write(json.dumps(row) + "\n")
                    log_file.flush()
                if progress is not None:
                    progress(row)
            lr *= config.lr_decay
            if out_path is not None:
                save_checkpoint(params, out_path / f"checkpoint_epoch{epoch:04d}.ckpt")
    finally:
        if log_file is not None:
            log_file.close()
    return params, log
