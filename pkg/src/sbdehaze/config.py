"""Experiment configuration stored as versioned ``key = value`` text."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .regularizers import HfdConfig
from .trainer import LossWeights, TrainConfig

SCHEMA_VERSION = 1
KINDS = ("toy2d", "synth-haze", "image-dir")


@dataclass
class ExperimentConfig:
    kind: str = "synth-haze"
    seed: int = 0
    out_dir: str = "runs/experiment"
    precision: str = "float32"
    steps: int = 2000
    batch: int = 16
    eval_every: int = 500
    checkpoint_every: int = 1000
    eval_nfe: tuple = (1, 3, 5)
    # toy2d
    toy_source: str = "two-moons"
    toy_target: str = "ring"
    toy_points: int = 10000
    toy_eval_points: int = 1000
    # synth-haze
    n_images: int = 512
    image_size: int = 32
    A_range: tuple = (0.75, 1.0)
    t_range: tuple = (0.35, 0.7)
    test_fraction: float = 0.25
    # image-dir
    hazy_dir: str = ""
    clear_dir: str = ""
    test_hazy_dir: str = ""
    test_gt_dir: str = ""
    # haze-aware prompt
    prompt_steps: int = 500
    prompt_lr: float = 1e-2
    prompt_terms: str = "both"
    # bridge and networks
    n_intervals: int = 5
    tau: float = 0.01
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    critic_lr: float = 2e-4
    refiner_lr: float = 2e-5
    lambda_sb: float = 1.0
    lambda_p: float = 1.0
    lambda_nce: float = 1.0
    lambda_phy: float = 0.5
    lambda_hfd: float = 0.5
    gen_width: int = 16
    disc_width: int = 16
    disc_blocks: int = 3
    hidden: int = 128
    use_global_disc: bool = True
    nce_locations: int = 64
    nce_temperature: float = 0.07
    dcp_patch: int = 15
    dcp_omega: float = 0.95
    t_min: float = 0.1
    critic_hidden: int = 64
    critic_pool: int = 4

    def __post_init__(self):
        self.validate()

    @classmethod
    def for_kind(cls, kind, **overrides):
        """Defaults tuned per experiment kind, then ``overrides``."""
        base = {}
        if kind == "toy2d":
            base = dict(steps=1000, batch=256, lr=1e-3, critic_lr=1e-3, eval_every=250,
                        checkpoint_every=500)
        base.update(overrides)
        return cls(kind=kind, **base)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        for name in ("steps", "batch", "eval_every", "checkpoint_every", "n_intervals"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.seed >= 0:
            raise ConfigError("seed must be nonnegative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if not self.eval_nfe or min(self.eval_nfe) < 1:
            raise ConfigError("eval_nfe must list positive integers")
        if self.prompt_terms not in ("both", "dehazed"):
            raise ConfigError("prompt_terms must be 'both' or 'dehazed'")
        if self.kind == "image-dir" and not (self.hazy_dir and self.clear_dir):
            raise ConfigError("image-dir experiments need hazy_dir and clear_dir")
        if self.kind == "synth-haze" and self.n_images < 2 * self.batch:
            raise ConfigError(f"n_images must be >= 2 * batch ({2 * self.batch})")
        for name in ("A_range", "t_range"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {(lo, hi)}")
        for name in ("lambda_sb", "lambda_p", "lambda_nce", "lambda_phy", "lambda_hfd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    def train_config(self):
        return TrainConfig(
            mode="points" if self.kind == "toy2d" else "image",
            n_intervals=self.n_intervals, tau=self.tau, lr=self.lr, beta1=self.beta1,
            beta2=self.beta2, critic_lr=self.critic_lr,
            weights=LossWeights(self.lambda_sb, self.lambda_p, self.lambda_nce,
                                self.lambda_phy, self.lambda_hfd),
            gen_width=self.gen_width, disc_width=self.disc_width, disc_blocks=self.disc_blocks,
            hidden=self.hidden, use_global_disc=self.use_global_disc,
            nce_locations=self.nce_locations, nce_temperature=self.nce_temperature,
            prompt_terms=self.prompt_terms, dcp_patch=self.dcp_patch, dcp_omega=self.dcp_omega,
            t_min=self.t_min, hfd=HfdConfig(), critic_hidden=self.critic_hidden,
            critic_pool=self.critic_pool, refiner_lr=self.refiner_lr, seed=self.seed)

    def with_overrides(self, **changes):
        return replace(self, **changes)

    # -- text form -------------------------------------------------------------
    def dumps(self):
        lines = [f"schema_version = {SCHEMA_VERSION}"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key = key.strip()
            if key in raw:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            raw[key] = value.strip()
        version = raw.pop("schema_version", None)
        if version is None:
            raise ConfigError("missing schema_version")
        if version != str(SCHEMA_VERSION):
            raise ConfigError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        types = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(raw) - set(types))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kind = raw.get("kind", cls.kind)
        values = {k: _parse(k, v, types[k]) for k, v in raw.items() if k != "kind"}
        return cls.for_kind(kind, **values)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        return cls.loads(text)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _scalar(key, text, kind):
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None
    return text


def _parse(key, text, kind):
    if kind == "bool":
        if text.lower() not in ("true", "false"):
            raise ConfigError(f"{key}: expected true or false, got {text!r}")
        return text.lower() == "true"
    if kind == "tuple":
        parts = [p.strip() for p in text.split(",") if p.strip()]
        numeric = "int" if all(p.lstrip("-").isdigit() for p in parts) else "float"
        return tuple(_scalar(key, p, numeric) for p in parts)
    return _scalar(key, text, kind)
