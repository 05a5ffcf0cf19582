"""Run configuration: ``key = value`` text files layered over a profile.

Example::

    # desk-scale NSL-KDD run
    dataset_kind = NSL-KDD
    paths = data/KDDTrain+.txt
    models = bagging, gbm, lightgbm, xgb, catboost, lstm, gru
    seed = 1
    bagging.n_estimators = 50
    lstm.epochs = 10
    meta.hidden = 64

Keys of the form ``<model>.<param>`` set base-model parameters and
``meta.<param>`` the meta-model's.  Lines starting with ``#`` are comments;
later lines override earlier ones.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields

from .ingest import DATASET_KINDS
from .meta import DEFAULT_MODELS, MODEL_IDS, MetaConfig
from .recurrent import RecurrentConfig
from .trees import BoostConfig

PROFILES = ("desk", "paper")
BOOSTED = ("gbm", "lightgbm", "xgb", "catboost")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset_kind: str = "NSL-KDD"
    paths: list = field(default_factory=list)
    profile: str = "desk"
    subsample: int = 0                 # 0 keeps every record
    impute: str = "mean-mode"
    outlier_k: float = 3.0
    remove_outliers: bool = False
    split_ratio: float = 0.8
    stratified: bool = True
    seed: int = 0
    models: list = field(default_factory=lambda: list(DEFAULT_MODELS))
    model_params: dict = field(default_factory=dict)
    folds: int = 5
    in_sample: bool = False
    meta: dict = field(default_factory=dict)
    distill_depth: int | None = 6
    out: str = "run"

    def validate(self) -> "RunConfig":
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigError(f"dataset_kind must be one of {DATASET_KINDS}")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        if not self.paths:
            raise ConfigError("no input paths configured")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie in (0, 1)")
        if not self.outlier_k > 0:
            raise ConfigError("outlier_k must be positive")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not self.models:
            raise ConfigError("at least one base model must be enabled")
        bad = [m for m in self.models if m not in MODEL_IDS]
        if bad:
            raise ConfigError(f"unknown model id(s) {bad}; expected a subset of {MODEL_IDS}")
        if len(set(self.models)) != len(self.models):
            raise ConfigError("duplicate model ids")
        if self.subsample < 0:
            raise ConfigError("subsample must be >= 0")
        if self.impute != "mean-mode":
            raise ConfigError("impute must be 'mean-mode'")
        if self.distill_depth is not None and self.distill_depth < 1:
            raise ConfigError("distill_depth must be positive")
        for mid, params in self.model_params.items():
            allowed = model_param_names(mid)
            extra = sorted(set(params) - allowed)
            if extra:
                raise ConfigError(f"unknown {mid} parameter(s) {extra}; allowed: {sorted(allowed)}")
        try:
            self.meta_config().validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"meta: {exc}") from None
        return self

    def meta_config(self) -> MetaConfig:
        known = {f.name for f in fields(MetaConfig)}
        extra = set(self.meta) - known
        if extra:
            raise ConfigError(f"unknown meta parameter(s) {sorted(extra)}")
        return MetaConfig(**{**self.meta, "seed": self.seed})

    def params_for(self, model_id: str) -> dict:
        return dict(self.model_params.get(model_id, {}))

    def items(self) -> list[tuple[str, str]]:
        """Every effective setting as sorted (key, text) pairs."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("model_params", "meta"):
                continue
            out[f.name] = ", ".join(v) if isinstance(v, list) else _text(v)
        for mid, params in self.model_params.items():
            for k, v in params.items():
                out[f"{mid}.{k}"] = _text(v)
        for k, v in self.meta_config().__dict__.items():
            if k != "seed":
                out[f"meta.{k}"] = _text(v)
        return sorted(out.items())

    def to_text(self, exclude=("out",)) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items() if k not in exclude)


def model_param_names(model_id: str) -> set:
    if model_id == "cart":
        return {"max_depth", "min_samples_leaf"}
    if model_id == "bagging":
        return {"n_estimators", "max_depth", "min_samples_leaf"}
    if model_id in BOOSTED:
        return {f.name for f in fields(BoostConfig)} - {"seed"}
    return {f.name for f in fields(RecurrentConfig)} - {"kind", "seed"}


def _text(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def profile_defaults(profile: str) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {PROFILES}")
    cfg = RunConfig(profile=profile)
    if profile == "desk":
        cfg.subsample = 25000
        cfg.model_params = {"bagging": {"n_estimators": 50},
                            **{m: {"n_rounds": 50} for m in BOOSTED},
                            "lstm": {"epochs": 10}, "gru": {"epochs": 10}}
    else:
        cfg.model_params = {"bagging": {"n_estimators": 1000},
                            **{m: {"n_rounds": 100} for m in BOOSTED},
                            "lstm": {"epochs": 30}, "gru": {"epochs": 30}}
    return cfg


def _value(text: str):
    t = text.strip()
    if t.lower() in ("true", "yes", "on"):
        return True
    if t.lower() in ("false", "no", "off"):
        return False
    if t.lower() == "none":
        return None
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        return t


def parse_config_text(text: str, source: str = "<config>") -> list[tuple[str, str, int]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        pairs.append((key.strip(), value.strip(), lineno))
    return pairs


def apply_pairs(cfg: RunConfig, pairs, source: str = "<config>") -> RunConfig:
    scalar = {f.name: f for f in fields(RunConfig)}
    for key, value, lineno in pairs:
        where = f"{source}:{lineno}"
        if "." in key:
            owner, _, param = key.partition(".")
            if owner == "meta":
                cfg.meta[param] = _value(value)
            elif owner in MODEL_IDS:
                cfg.model_params.setdefault(owner, {})[param] = _value(value)
            else:
                raise ConfigError(f"{where}: unknown key {key!r}")
            continue
        if key not in scalar or key in ("model_params", "meta"):
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in ("paths", "models"):
            setattr(cfg, key, [v.strip() for v in value.split(",") if v.strip()])
            continue
        default = getattr(RunConfig(), key)
        v = _value(value)
        if key == "distill_depth" and v is None:
            cfg.distill_depth = None
            continue
        try:
            if isinstance(default, bool):
                if not isinstance(v, bool):
                    raise ValueError
            elif isinstance(default, int):
                if isinstance(v, bool) or not float(v).is_integer():
                    raise ValueError
                v = int(v)
            elif isinstance(default, float):
                v = float(v)
            else:
                v = str(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: bad value {value!r} for {key}") from None
        setattr(cfg, key, v)
    return cfg


def load_config(path=None, profile: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Profile defaults, then the config file, then ``overrides``."""
    pairs = []
    text_profile = None
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            raise FileNotFoundError(f"config file not found: {path}") from None
        pairs = parse_config_text(text, str(path))
        for key, value, _ in pairs:
            if key == "profile":
                text_profile = value
    cfg = profile_defaults(profile or text_profile or "desk")
    cfg = apply_pairs(cfg, [(k, v, n) for k, v, n in pairs if k != "profile"], str(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()
