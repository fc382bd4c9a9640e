"""Training configuration: every hyperparameter, strategy flag, and schedule
setting, with validation and dict round-tripping for config files and
checkpoints."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .losses import GUIDANCE_FULL, GUIDANCE_MODES
from .perturbator import Strategy


@dataclass
class TrainConfig:
    dim: int = 3072
    batch_size: int = 32
    epochs: int = 100
    lam: float = 5.0
    nu: float = 1.0
    gamma: float = 1.0
    tau: float = 0.5
    strategy: str = Strategy.LINEAR_MAP.value
    guidance: str = GUIDANCE_FULL
    gaussian_sigma: float = 1.0
    seed: int = 0
    runs: int = 5
    hidden1: int = 1024
    hidden2: int = 512
    # AdamW
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    # cyclical LR; step_size_iters 0 means "2 epochs of batches", resolved at fit time
    base_lr: float = 1e-4
    max_lr: float = 1e-3
    step_size_iters: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        for name in ("lam", "nu", "gamma", "tau"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.tau == 0 and self.guidance != "none":
            raise ConfigError("tau must be > 0 when guidance is enabled")
        if self.base_lr > self.max_lr:
            raise ConfigError(
                f"base_lr {self.base_lr} must be <= max_lr {self.max_lr}"
            )
        try:
            Strategy(self.strategy)
        except ValueError:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; "
                f"expected one of {[s.value for s in Strategy]}"
            )
        if self.guidance not in GUIDANCE_MODES:
            raise ConfigError(
                f"unknown guidance {self.guidance!r}; expected one of {GUIDANCE_MODES}"
            )
        if self.strategy == Strategy.GAUSSIAN.value and self.gaussian_sigma <= 0:
            raise ConfigError("gaussian_sigma must be > 0")

    @property
    def strategy_enum(self):
        return Strategy(self.strategy)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, mapping):
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {name: _coerce(name, raw) for name, raw in mapping.items()}
        return cls(**kwargs)


_INT_KEYS = {
    "dim", "batch_size", "epochs", "seed", "runs",
    "hidden1", "hidden2", "step_size_iters",
}
_STR_KEYS = {"strategy", "guidance"}


def _coerce(name, raw):
    if name in _STR_KEYS:
        return str(raw)
    if name in _INT_KEYS:
        value = int(float(raw)) if isinstance(raw, str) else int(raw)
        return value
    return float(raw)
