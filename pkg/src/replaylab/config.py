"""Run configuration and its flat ``section.key = value`` text format.

Example::

    # novel-object assay, curious replay
    env.name = "novel_object"
    env.t0 = 20000
    priority.strategy = "curious"
    run.seed = 3

Values are JSON scalars or lists, plus ``none`` for null. Blank lines and
``#`` comments are ignored. Unknown or mistyped keys raise ``ConfigError``
naming the offending field.
"""
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .agent import AgentConfig, IntrinsicMode
from .envs import ENVIRONMENTS
from .replay import PriorityParams, Strategy


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ModelConfig:
    learning_rate: float = 0.5
    weight_decay: float = 0.0
    ensemble_size: int = 5
    init_scale: float = 0.05


@dataclass
class RunConfig:
    env_name: str = "novel_object"
    env_params: dict = field(default_factory=dict)
    priority: PriorityParams = field(default_factory=PriorityParams)
    agent: AgentConfig = field(default_factory=AgentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    capacity: int = 100_000
    total_steps: int = 60_000
    seed: int = 0
    metrics_interval: int = 200
    out: str = "runs"
    label: Optional[str] = None
    clear_buffer_at: list = field(default_factory=list)

    @property
    def name(self):
        return self.label or self.priority.strategy.value

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_overrides(self, flat):
        """Copy with ``section.key`` overrides applied."""
        merged = to_flat(self)
        for k, v in flat.items():
            merged[k] = v
        return from_flat(merged)


_RUN_FIELDS = ("capacity", "total_steps", "seed", "metrics_interval", "out", "label",
               "clear_buffer_at")


def _plain(value):
    if isinstance(value, (Strategy, IntrinsicMode)):
        return value.value
    return value


def to_flat(cfg):
    flat = {"env.name": cfg.env_name}
    for k in sorted(cfg.env_params):
        flat[f"env.{k}"] = cfg.env_params[k]
    for section, obj in (("priority", cfg.priority), ("agent", cfg.agent), ("model", cfg.model)):
        for f in dataclasses.fields(obj):
            flat[f"{section}.{f.name}"] = _plain(getattr(obj, f.name))
    for name in _RUN_FIELDS:
        value = getattr(cfg, name)
        flat[f"run.{name}"] = list(value) if isinstance(value, list) else value
    return flat


def _coerce(key, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    return value


_FIELD_KINDS = {
    "priority": {"strategy": str, "c": float, "beta": float, "alpha": float,
                 "epsilon": float, "p_max": float, "use_running_min": bool, "gamma": float},
    "agent": {"steps_per_train": int, "batch_size": int, "imagination_rollouts_per_train": int,
              "intrinsic_mode": str, "intrinsic_scale": float, "epsilon_greedy": float,
              "q_learning_rate": float},
    "model": {"learning_rate": float, "weight_decay": float, "ensemble_size": int,
              "init_scale": float},
}


def from_flat(flat):
    sections = {"priority": {}, "agent": {}, "model": {}}
    env_name = None
    env_params = {}
    run = {}
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if not name:
            raise ConfigError(key, "keys must look like section.name")
        if section == "env":
            if name == "name":
                env_name = _coerce(key, value, str)
            else:
                env_params[name] = value
        elif section in sections:
            kinds = _FIELD_KINDS[section]
            if name not in kinds:
                raise ConfigError(key, "unknown field")
            sections[section][name] = _coerce(key, value, kinds[name])
        elif section == "run":
            if name not in _RUN_FIELDS:
                raise ConfigError(key, "unknown field")
            run[name] = value
        else:
            raise ConfigError(key, f"unknown section {section!r}")

    cfg = RunConfig()
    if env_name is not None:
        if env_name not in ENVIRONMENTS:
            raise ConfigError("env.name", f"unknown environment {env_name!r}")
        cfg.env_name = env_name
    cfg.env_params = env_params
    for section, cls in (("priority", PriorityParams), ("agent", AgentConfig), ("model", ModelConfig)):
        try:
            obj = cls(**sections[section])
        except (TypeError, ValueError) as exc:
            raise ConfigError(section, str(exc)) from None
        setattr(cfg, section, obj)
    for name, value in run.items():
        key = f"run.{name}"
        if name in ("capacity", "total_steps", "seed", "metrics_interval"):
            value = _coerce(key, value, int)
        elif name == "out":
            value = _coerce(key, value, str)
        elif name == "label":
            value = None if value is None else _coerce(key, value, str)
        elif name == "clear_buffer_at":
            if value is None:
                value = []
            if not isinstance(value, list) or not all(
                    isinstance(v, int) and not isinstance(v, bool) for v in value):
                raise ConfigError(key, "expected a list of integers")
        setattr(cfg, name, value)
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.capacity < 1:
        raise ConfigError("run.capacity", "must be >= 1")
    if cfg.total_steps < 0:
        raise ConfigError("run.total_steps", "must be >= 0")
    if cfg.metrics_interval < 1:
        raise ConfigError("run.metrics_interval", "must be >= 1")
    L = cfg.agent.steps_per_train
    if cfg.total_steps % L:
        raise ConfigError("run.total_steps", f"must be a multiple of agent.steps_per_train ({L})")
    if cfg.metrics_interval % L:
        raise ConfigError("run.metrics_interval", f"must be a multiple of agent.steps_per_train ({L})")
    for step in cfg.clear_buffer_at:
        if step % L:
            raise ConfigError("run.clear_buffer_at", f"steps must be multiples of {L}")
    if cfg.model.ensemble_size < 1:
        raise ConfigError("model.ensemble_size", "must be >= 1")
    if not cfg.model.learning_rate > 0:
        raise ConfigError("model.learning_rate", "must be positive")
    if cfg.model.weight_decay < 0 or cfg.model.learning_rate * cfg.model.weight_decay >= 1:
        raise ConfigError("model.weight_decay", "must be >= 0 and below 1 / learning_rate")
    try:
        ENVIRONMENTS[cfg.env_name](**cfg.env_params)
    except TypeError as exc:
        raise ConfigError("env", str(exc)) from None
    except ValueError as exc:
        raise ConfigError("env", str(exc)) from None


# -- text format -----------------------------------------------------------

def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, float):
        text = repr(value)
        if text in ("inf", "-inf", "nan"):
            raise ValueError(f"non-finite value {value} cannot be serialized")
        return text
    if isinstance(value, list):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return json.dumps(value)


def parse_value(key, text):
    text = text.strip()
    if text == "none":
        return None
    if text.startswith("["):
        inner = text[1:-1].strip() if text.endswith("]") else None
        if inner is None:
            raise ConfigError(key, f"unterminated list {text!r}")
        if not inner:
            return []
        return [parse_value(key, part) for part in _split_list(inner)]
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise ConfigError(key, f"cannot parse value {text!r}") from None


def _split_list(inner):
    parts, depth, cur, quoted = [], 0, [], False
    for ch in inner:
        if ch == '"':
            quoted = not quoted
        if not quoted and ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        if not quoted and ch in "[":
            depth += 1
        if not quoted and ch in "]":
            depth -= 1
        cur.append(ch)
    parts.append("".join(cur))
    return parts


def dumps(cfg, comment=None):
    lines = []
    if comment:
        lines.extend(f"# {line}" for line in comment.splitlines())
    last = None
    for key, value in to_flat(cfg).items():
        section = key.split(".", 1)[0]
        if last is not None and section != last:
            lines.append("")
        last = section
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def _strip_comment(line):
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def parse_flat(text):
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        if key in flat:
            raise ConfigError(key, "duplicate key")
        flat[key] = parse_value(key, value)
    return flat


def loads(text):
    return from_flat(parse_flat(text))


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def save(cfg, path, comment=None):
    with open(path, "w") as fh:
        fh.write(dumps(cfg, comment))
