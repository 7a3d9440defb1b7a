"""Penalty-point sampling and the two-sided / one-sided gradient-norm penalties."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .data import Rng
from .nets import MlpParams, forward

KINDS = ("none", "clip", "gp", "lp")
SAMPLINGS = ("interpolate", "perturb_real", "perturb_both")


@dataclass(frozen=True)
class PenaltyConfig:
    kind: str = "lp"
    lam: float = 5.0
    clip_c: float = 0.01
    sampling: str = "interpolate"
    dragan_c: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"unknown sampling {self.sampling!r}; expected one of {SAMPLINGS}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.clip_c > 0:
            raise ValueError(f"clip bound must be > 0, got {self.clip_c}")
        if not self.dragan_c > 0:
            raise ValueError(f"perturbation scale C must be > 0, got {self.dragan_c}")

    @property
    def uses_points(self) -> bool:
        return self.kind in ("gp", "lp")


def sample_interpolates(rng: Rng, real: np.ndarray, fake: np.ndarray, alpha=None) -> np.ndarray:
    """Row-wise ``alpha*real + (1-alpha)*fake`` with ``alpha ~ U[0, 1]`` per row."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError(f"real {real.shape} and fake {fake.shape} batches differ in shape")
    if alpha is None:
        alpha = rng.uniform((real.shape[0], 1))
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64).reshape(-1, 1), (real.shape[0], 1))
    return alpha * real + (1.0 - alpha) * fake


def sample_local_perturbation(rng: Rng, batch: np.ndarray, c: float = 0.5) -> np.ndarray:
    """``x + alpha * C * std(batch) * u`` with u ~ U[0,1]^2 per row, alpha ~ U[0,1] per row.

    ``std`` is a single scalar: the root of the coordinate variances averaged
    over both axes, so a batch of identical points is left unperturbed.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 2:
        raise ValueError(f"need a batch of at least 2 points, got shape {batch.shape}")
    if not c > 0:
        raise ValueError(f"C must be positive, got {c}")
    n = batch.shape[0]
    spread = float(np.sqrt(np.mean(np.var(batch, axis=0))))
    delta = c * spread * rng.uniform(batch.shape)
    alpha = rng.uniform((n, 1))
    return batch + alpha * delta


def sample_penalty_points(rng: Rng, config: PenaltyConfig, real: np.ndarray, fake: np.ndarray) -> np.ndarray:
    if config.sampling == "interpolate":
        return sample_interpolates(rng, real, fake)
    if config.sampling == "perturb_real":
        return sample_local_perturbation(rng, real, config.dragan_c)
    return np.concatenate(
        [
            sample_local_perturbation(rng, real, config.dragan_c),
            sample_local_perturbation(rng, fake, config.dragan_c),
        ]
    )


def gradient_norms(critic: MlpParams, z, tape: ad.Tape, bound=None) -> ad.Node:
    """Per-row ``||grad_z f(z)||`` as a node that stays differentiable in the parameters.

    One backward pass of the summed outputs suffices because row i of the
    output depends only on row i of the input.
    """
    z_node = z if isinstance(z, ad.Node) else ad.input(tape, z)
    out = forward(critic, z_node, tape, bound)
    (g,) = ad.grad(tape, ad.sum(out), [z_node], create_graph=True)
    return ad.l2norm_rows(g)


def penalty_gp(critic: MlpParams, z, lam: float, tape: ad.Tape, bound=None) -> ad.Node:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    norms = gradient_norms(critic, z, tape, bound)
    dev = ad.sub(norms, ad.constant(tape, 1.0))
    return ad.mul(ad.constant(tape, float(lam)), ad.mean(ad.square(dev)))


def penalty_lp(critic: MlpParams, z, lam: float, tape: ad.Tape, bound=None) -> ad.Node:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    norms = gradient_norms(critic, z, tape, bound)
    excess = ad.max_with_scalar(ad.sub(norms, ad.constant(tape, 1.0)), 0.0)
    return ad.mul(ad.constant(tape, float(lam)), ad.mean(ad.square(excess)))


def penalty_term(config: PenaltyConfig, critic: MlpParams, z, tape: ad.Tape, bound=None) -> ad.Node:
    if config.kind == "gp":
        return penalty_gp(critic, z, config.lam, tape, bound)
    if config.kind == "lp":
        return penalty_lp(critic, z, config.lam, tape, bound)
    raise ValueError(f"penalty kind {config.kind!r} has no gradient-norm term")
