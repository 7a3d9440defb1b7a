"""One preset per reproduced figure; multi-row figures hold several runs."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .penalty import PenaltyConfig
from .trainer import TrainConfig

LEVEL_SET_ITERS = 10000
LOSS_ITERS = 20000
EMD_ITERS = 2000


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    runs: tuple[tuple[str, TrainConfig], ...]  # (row name, config)

    @property
    def single(self) -> bool:
        return len(self.runs) == 1


def _cfg(dataset, kind, lam, iterations, emd_every=0, sampling="interpolate") -> TrainConfig:
    return TrainConfig(
        dataset=dataset,
        penalty=PenaltyConfig(kind=kind, lam=lam, sampling=sampling),
        iterations=iterations,
        emd_every=emd_every,
    )


def _level_sets(dataset):
    return (
        ("top", _cfg(dataset, "gp", 10.0, LEVEL_SET_ITERS)),
        ("middle", _cfg(dataset, "gp", 1.0, LEVEL_SET_ITERS)),
        ("bottom", _cfg(dataset, "lp", 10.0, LEVEL_SET_ITERS)),
    )


_PRESETS = (
    Preset(
        "fig1",
        "critic level sets on swiss roll at 500/2500/5000/10000 iterations; "
        "top GP lambda=10, middle GP lambda=1, bottom LP lambda=10",
        _level_sets("swissroll"),
    ),
    Preset(
        "fig2",
        "critic negative loss (no penalty term), swiss roll, lambda=5, GP vs LP, 20k iterations",
        (("gp", _cfg("swissroll", "gp", 5.0, LOSS_ITERS)), ("lp", _cfg("swissroll", "lp", 5.0, LOSS_ITERS))),
    ),
    Preset(
        "fig3",
        "EMD during training, swiss roll, lambda=5, GP vs LP, 2k iterations, EMD every 20",
        (
            ("gp", _cfg("swissroll", "gp", 5.0, EMD_ITERS, emd_every=20)),
            ("lp", _cfg("swissroll", "lp", 5.0, EMD_ITERS, emd_every=20)),
        ),
    ),
    Preset("fig4", "as fig1 on 8gaussians", _level_sets("8gaussians")),
    Preset("fig5", "as fig1 on 25gaussians", _level_sets("25gaussians")),
    Preset(
        "fig6",
        "critic negative loss of GP with lambda=1, swiss roll, 20k iterations",
        (("main", _cfg("swissroll", "gp", 1.0, LOSS_ITERS)),),
    ),
    Preset(
        "fig7",
        "EMD during training of GP with lambda=1, swiss roll, 2k iterations",
        (("main", _cfg("swissroll", "gp", 1.0, EMD_ITERS, emd_every=20)),),
    ),
    Preset(
        "fig8",
        "critic negative loss with local perturbation (lambda=5 assumed, as in fig9); "
        "top GP perturbing real samples, middle GP perturbing real and generated, bottom LP perturbing both",
        (
            ("top", _cfg("swissroll", "gp", 5.0, LOSS_ITERS, sampling="perturb_real")),
            ("middle", _cfg("swissroll", "gp", 5.0, LOSS_ITERS, sampling="perturb_both")),
            ("bottom", _cfg("swissroll", "lp", 5.0, LOSS_ITERS, sampling="perturb_both")),
        ),
    ),
    Preset(
        "fig9",
        "EMD with local perturbation of real and generated samples, lambda=5, GP vs LP, 2k iterations",
        (
            ("gp", _cfg("swissroll", "gp", 5.0, EMD_ITERS, emd_every=20, sampling="perturb_both")),
            ("lp", _cfg("swissroll", "lp", 5.0, EMD_ITERS, emd_every=20, sampling="perturb_both")),
        ),
    ),
)

FIGURE_PRESETS: dict[str, Preset] = {p.name: p for p in _PRESETS}


def _rows() -> dict[str, Preset]:
    out = {}
    for p in _PRESETS:
        if p.single:
            continue
        for row, cfg in p.runs:
            name = f"{p.name}-{row}"
            out[name] = Preset(name, f"{p.name} row '{row}'", ((row, cfg),))
    return out


ROW_PRESETS: dict[str, Preset] = _rows()


def get_preset(name: str) -> Preset:
    try:
        return FIGURE_PRESETS.get(name) or ROW_PRESETS[name]
    except KeyError:
        available = ", ".join(list(FIGURE_PRESETS) + list(ROW_PRESETS))
        raise KeyError(f"unknown preset {name!r}; available: {available}") from None


def describe_config(cfg: TrainConfig) -> str:
    p = cfg.penalty
    parts = [cfg.dataset, p.kind]
    if p.kind in ("gp", "lp"):
        parts += [f"lambda={p.lam:g}", f"sampling={p.sampling}"]
    elif p.kind == "clip":
        parts.append(f"c={p.clip_c:g}")
    parts.append(f"iterations={cfg.iterations}")
    if cfg.emd_every:
        parts.append(f"emd_every={cfg.emd_every}")
    snaps = [s for s in cfg.snapshot_iters if s <= cfg.iterations]
    if snaps:
        parts.append("snapshots=" + ",".join(map(str, snaps)))
    return " ".join(parts)


def with_overrides(cfg: TrainConfig, overrides: dict) -> TrainConfig:
    """Apply flat overrides; penalty fields go into the nested PenaltyConfig."""
    penalty_keys = {"kind", "lam", "clip_c", "sampling", "dragan_c"}
    pen = {k: v for k, v in overrides.items() if k in penalty_keys}
    rest = {k: v for k, v in overrides.items() if k not in penalty_keys}
    if pen:
        rest["penalty"] = replace(cfg.penalty, **pen)
    return replace(cfg, **rest)
