"""Run configuration: every hyperparameter, with paper and desk presets."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, replace

SEED_ENV_VAR = "QINTENT_SEED"


@dataclass(frozen=True)
class RunConfig:
    dim: int = 300              # word-vector length
    hidden: int = 256           # GRU hidden size per direction
    layers: int = 2             # stacked GRU depth per direction
    dropout: float = 0.25       # between stacked GRU layers and MLP inputs
    ctw_hidden: int = 10        # term-weighting MLP hidden nodes
    cqr_hidden: int = 0         # 0 = auto: min(2 * |V|, cqr_hidden_cap)
    cqr_hidden_cap: int = 1_000_000_000
    lr: float = 0.001
    batch_size: int = 512
    epochs: int = 20
    seed: int = 0
    vpcg_dim: int = 50
    vpcg_iters: int = 50
    vpcg_lr: float = 0.001
    vpcg_sgd_epochs: int = 30
    rank_depth: int = 100       # retrieval depth for MRR

    def validate(self):
        for name in ("dim", "hidden", "layers", "ctw_hidden", "lr", "batch_size",
                     "epochs", "vpcg_dim", "vpcg_iters", "vpcg_lr",
                     "vpcg_sgd_epochs", "rank_depth", "cqr_hidden_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.cqr_hidden < 0:
            raise ValueError("cqr_hidden must be >= 0 (0 = auto)")
        return self

    def resolve_cqr_hidden(self, vocab_size):
        if self.cqr_hidden:
            return self.cqr_hidden
        return min(2 * vocab_size, self.cqr_hidden_cap)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d).validate()


PRESETS = {
    "paper": RunConfig(),
    "desk": RunConfig(dim=32, hidden=24, layers=1, batch_size=64, epochs=15,
                      cqr_hidden_cap=512, vpcg_iters=20),
}


def preset(name, seed=None, **overrides):
    """Resolve a preset by name; QINTENT_SEED (env) overrides any seed."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[name]
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if overrides:
        cfg = replace(cfg, **overrides)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        cfg = replace(cfg, seed=int(env_seed))
    return cfg.validate()
