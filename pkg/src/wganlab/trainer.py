"""Adversarial training loop with n_critic critic updates per generator update."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import data
from . import nets
from .emd import emd
from .penalty import PenaltyConfig, penalty_term, sample_penalty_points
from .runlog import TrainRecord
from .viz import DEFAULT_BBOX, DEFAULT_RESOLUTION, FigureOverlay, level_set_grid, render_figure, write_run_artifacts

log = logging.getLogger(__name__)

DEFAULT_SNAPSHOTS = (500, 2500, 5000, 10000)


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "swissroll"
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    batch_size: int = 256
    n_critic: int = 5
    iterations: int = 2000
    learning_rate: float = 5e-5
    seed: int = 0
    emd_every: int = 20
    emd_batch: int = 256
    snapshot_iters: tuple[int, ...] = DEFAULT_SNAPSHOTS
    hidden_width: int = 512
    activation: str = "relu"
    latent_dim: int = 2
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-10
    bbox: tuple[float, float, float, float] = DEFAULT_BBOX
    resolution: tuple[int, int] = DEFAULT_RESOLUTION
    record_wall_time: bool = False

    def __post_init__(self):
        if self.dataset not in data.DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; expected one of {data.DATASETS}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.emd_every < 0 or self.emd_batch < 1:
            raise ValueError("emd_every must be >= 0 and emd_batch >= 1")
        if any(s < 1 for s in self.snapshot_iters):
            raise ValueError("snapshot iterations must be >= 1")
        object.__setattr__(self, "snapshot_iters", tuple(sorted(set(int(s) for s in self.snapshot_iters))))

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


class TrainingDiverged(RuntimeError):
    """A loss, gradient or parameter became non-finite."""


@dataclass
class TrainState:
    config: TrainConfig
    critic: nets.MlpParams
    generator: nets.MlpParams
    critic_opt: nets.RmsPropState
    generator_opt: nets.RmsPropState
    rngs: dict[str, data.Rng]
    critic_updates: int = 0
    generator_updates: int = 0
    last_real: np.ndarray | None = None
    last_fake: np.ndarray | None = None
    last_penalty_points: np.ndarray | None = None


def init_state(config: TrainConfig) -> TrainState:
    rngs = {name: data.Rng(config.seed, name) for name in data.STREAMS}
    critic = nets.init_mlp(rngs["critic_init"], "critic", config.hidden_width, config.activation)
    generator = nets.init_mlp(
        rngs["generator_init"], "generator", config.hidden_width, config.activation, config.latent_dim
    )
    opt = dict(learning_rate=config.learning_rate, decay=config.rms_decay, epsilon=config.rms_epsilon)
    return TrainState(
        config=config,
        critic=critic,
        generator=generator,
        critic_opt=nets.RmsPropState.zeros_like(critic, **opt),
        generator_opt=nets.RmsPropState.zeros_like(generator, **opt),
        rngs=rngs,
    )


def surrogate_loss(critic: nets.MlpParams, real, fake, tape: ad.Tape, bound=None) -> ad.Node:
    """mean f(real) - mean f(fake), the empirical dual objective."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError(f"real {real.shape} and fake {fake.shape} batches differ in shape")
    f_real = nets.forward(critic, ad.constant(tape, real), tape, bound)
    f_fake = nets.forward(critic, ad.constant(tape, fake), tape, bound)
    return ad.sub(ad.mean(f_real), ad.mean(f_fake))


def _guarded(what: str, fn):
    try:
        return fn()
    except (ad.AutodiffError, FloatingPointError) as exc:
        raise TrainingDiverged(f"{what}: {exc}") from exc


def critic_step(state: TrainState, config: TrainConfig | None = None) -> dict:
    """One critic update; returns the surrogate and the penalty separately."""
    config = config or state.config
    pen = config.penalty
    real = data.sample(config.dataset, state.rngs["data"], config.batch_size)
    latent = data.sample_latent(state.rngs["latent"], config.batch_size, config.latent_dim)
    fake = _guarded("generator forward", lambda: nets.evaluate(state.generator, latent))

    def build():
        tape = ad.Tape()
        bound = nets.bind(state.critic, tape)
        surrogate = surrogate_loss(state.critic, real, fake, tape, bound)
        loss = ad.mul(ad.constant(tape, -1.0), surrogate)
        penalty_value, points = 0.0, None
        if pen.uses_points:
            points = sample_penalty_points(state.rngs["penalty"], pen, real, fake)
            term = penalty_term(pen, state.critic, points, tape, bound)
            penalty_value = float(term.value)
            loss = ad.add(loss, term)
        grads = ad.grad(tape, loss, bound)
        return float(surrogate.value), penalty_value, points, [g.value for g in grads]

    surrogate, penalty_value, points, grads = _guarded("critic loss", build)
    critic, opt = _guarded(
        "critic update", lambda: nets.rmsprop_step(state.critic_opt, state.critic, grads)
    )
    if pen.kind == "clip":
        critic = nets.clip_weights(critic, pen.clip_c)
    state.critic, state.critic_opt = critic, opt
    state.critic_updates += 1
    state.last_real, state.last_fake, state.last_penalty_points = real, fake, points
    return {"critic_surrogate": surrogate, "penalty_value": penalty_value}


def generator_step(state: TrainState, config: TrainConfig | None = None) -> dict:
    """One generator update minimizing -mean f(G(latent)); the critic is held fixed."""
    config = config or state.config
    latent = data.sample_latent(state.rngs["latent"], config.batch_size, config.latent_dim)

    def build():
        tape = ad.Tape()
        bound = nets.bind(state.generator, tape)
        fake = nets.forward(state.generator, ad.constant(tape, latent), tape, bound)
        score = nets.forward(state.critic, fake, tape)
        loss = ad.mul(ad.constant(tape, -1.0), ad.mean(score))
        grads = ad.grad(tape, loss, bound)
        return float(loss.value), [g.value for g in grads]

    loss, grads = _guarded("generator loss", build)
    generator, opt = _guarded(
        "generator update", lambda: nets.rmsprop_step(state.generator_opt, state.generator, grads)
    )
    state.generator, state.generator_opt = generator, opt
    state.generator_updates += 1
    return {"generator_loss": loss}


def evaluate_emd(state: TrainState, config: TrainConfig | None = None) -> float:
    config = config or state.config
    rng = state.rngs["eval"]
    real = data.sample(config.dataset, rng, config.emd_batch)
    latent = data.sample_latent(rng, config.emd_batch, config.latent_dim)
    fake = nets.evaluate(state.generator, latent)
    return emd(real, fake)


def snapshot_figure(state: TrainState, config: TrainConfig | None = None) -> bytes:
    config = config or state.config
    grid = level_set_grid(state.critic, config.bbox, config.resolution)
    overlay = FigureOverlay(
        training_points=state.last_real if state.last_real is not None else np.zeros((0, 2)),
        generated_points=state.last_fake if state.last_fake is not None else np.zeros((0, 2)),
        penalty_points=state.last_penalty_points if state.last_penalty_points is not None else np.zeros((0, 2)),
    )
    return render_figure(grid, overlay)


@dataclass
class RunResult:
    config: TrainConfig
    records: list[TrainRecord]
    figures: dict[int, bytes]
    checkpoints: dict[int, bytes]
    completed: bool
    error: str | None
    state: TrainState

    @property
    def critic_updates(self) -> int:
        return self.state.critic_updates

    @property
    def generator_updates(self) -> int:
        return self.state.generator_updates

    def write(self, out_dir) -> list[tuple[str, int]]:
        extra = {f"ckpt_{it}": blob for it, blob in self.checkpoints.items()}
        if self.error:
            extra["error.txt"] = (self.error + "\n").encode("utf-8")
        return write_run_artifacts(self.records, self.figures, out_dir, extra)


def train(
    config: TrainConfig,
    out_dir=None,
    on_critic_step: Callable[[TrainState], None] | None = None,
) -> RunResult:
    """Run ``config.iterations`` rounds of [n_critic critic steps, 1 generator step].

    A non-finite value stops the run; the records up to that point are kept
    and, when ``out_dir`` is given, written together with an ``error.txt``.
    """
    state = init_state(config)
    records: list[TrainRecord] = []
    figures: dict[int, bytes] = {}
    checkpoints: dict[int, bytes] = {}
    error = None
    start = time.perf_counter()
    snapshots = set(config.snapshot_iters)
    try:
        for it in range(1, config.iterations + 1):
            for _ in range(config.n_critic):
                frag = critic_step(state, config)
                if on_critic_step is not None:
                    on_critic_step(state)
            generator_step(state, config)
            emd_value = None
            if config.emd_every and it % config.emd_every == 0:
                emd_value = evaluate_emd(state, config)
            wall = int((time.perf_counter() - start) * 1000) if config.record_wall_time else None
            records.append(TrainRecord(it, frag["critic_surrogate"], frag["penalty_value"], emd_value, wall))
            if it in snapshots:
                checkpoints[it] = nets.save_checkpoint(None, state.generator, state.critic)
                figures[it] = snapshot_figure(state, config)
            if it % 100 == 0:
                log.debug("iteration %d surrogate %.6g penalty %.6g", it, frag["critic_surrogate"], frag["penalty_value"])
    except TrainingDiverged as exc:
        error = f"aborted at iteration {len(records) + 1}: {exc}"
        log.warning(error)
    result = RunResult(config, records, figures, checkpoints, error is None, error, state)
    if out_dir is not None:
        result.write(out_dir)
    return result
