"""Run configuration: one flat namespace of ``key = value`` settings."""
from dataclasses import dataclass, fields, replace

from .errors import ConfigError
from .series import GridSpec, to_datetime64


def _parse_stack(text):
    items = []
    for tok in str(text).split(","):
        tok = tok.strip().lower()
        if tok == "pool":
            items.append("pool")
        else:
            items.append(int(tok))
    return tuple(items)


def _format_stack(stack):
    return ",".join(str(s) for s in stack)


@dataclass(frozen=True)
class Config:
    # synthetic data
    seed: int = 0
    days: int = 480
    start: str = "2014-01-01T00:00:00Z"
    dt_seconds: int = 10800
    n_rows: int = 16
    n_cols: int = 16
    lat0: float = 54.5
    lon0: float = 5.5
    dlat: float = 0.5
    dlon: float = 0.5
    n_plants: int = 2000
    concentration: float = 1.0
    fleet_corner: str = "se"
    # model and training
    conv_stack: tuple = (64, 64, "pool", 128, 128, "pool", 256, 256, "pool")
    fc_dim: int = 512
    lstm_units: int = 128
    dropout_conv: float = 0.20
    dropout_fc: float = 0.30
    lr: float = 0.0015
    warmup_steps: int = 300
    lr_decay: str = "cosine"
    batch_size: int = 32
    batch_run_length: int = 32
    epochs: int = 60
    train_fraction: float = 0.75
    # evaluation and occlusion
    daylight_rule: str = "measured"
    occlusion_samples: int = 64

    def __post_init__(self):
        validate(self)

    @property
    def grid(self):
        return GridSpec(self.lat0, self.lon0, self.dlat, self.dlon, self.n_rows, self.n_cols)

    @property
    def n_pools(self):
        return sum(1 for s in self.conv_stack if s == "pool")

    def replace(self, **changes):
        return replace(self, **changes)

    def to_text(self):
        """Canonical ``key = value`` lines, parseable by :func:`parse_config_text`."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "conv_stack":
                v = _format_stack(v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    try:
        if key == "conv_stack":
            return _parse_stack(raw)
        if kind in (int, "int"):
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if kind in (float, "float"):
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"cannot parse value {raw!r} for {key}", key=key) from None


def validate(cfg):
    def need(cond, key, what):
        if not cond:
            raise ConfigError(f"{key} = {getattr(cfg, key)!r}: {what}", key=key)

    need(cfg.days >= 3, "days", "must be >= 3")
    need(cfg.dt_seconds > 0 and 86400 % cfg.dt_seconds == 0, "dt_seconds", "must divide one day")
    need(cfg.n_rows >= 4 and cfg.n_rows % 2 == 0, "n_rows", "must be an even integer >= 4")
    need(cfg.n_cols >= 4 and cfg.n_cols % 2 == 0, "n_cols", "must be an even integer >= 4")
    need(cfg.dlat > 0, "dlat", "must be > 0")
    need(cfg.dlon > 0, "dlon", "must be > 0")
    need(-90 <= cfg.lat0 <= 90, "lat0", "must be a latitude")
    need(cfg.n_plants >= 1, "n_plants", "must be >= 1")
    need(cfg.concentration >= 0, "concentration", "must be >= 0")
    need(cfg.fleet_corner in ("nw", "ne", "sw", "se"), "fleet_corner", "must be one of nw, ne, sw, se")
    need(len(cfg.conv_stack) > 0 and cfg.conv_stack[0] != "pool"
         and all(s == "pool" or (isinstance(s, int) and s >= 1) for s in cfg.conv_stack),
         "conv_stack", "must list positive channel counts and 'pool' markers, starting with a conv")
    need(cfg.fc_dim >= 1, "fc_dim", "must be >= 1")
    need(cfg.lstm_units >= 1, "lstm_units", "must be >= 1")
    need(0 <= cfg.dropout_conv < 1, "dropout_conv", "must be in [0, 1)")
    need(0 <= cfg.dropout_fc < 1, "dropout_fc", "must be in [0, 1)")
    need(cfg.lr >= 0, "lr", "must be >= 0")
    need(cfg.warmup_steps >= 0, "warmup_steps", "must be >= 0")
    need(cfg.lr_decay in ("none", "cosine"), "lr_decay", "must be 'none' or 'cosine'")
    need(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    need(cfg.batch_run_length >= 1, "batch_run_length", "must be >= 1")
    need(cfg.epochs >= 1, "epochs", "must be >= 1")
    need(0 < cfg.train_fraction < 1, "train_fraction", "must be in (0, 1)")
    need(cfg.daylight_rule in ("measured", "both"), "daylight_rule", "must be 'measured' or 'both'")
    need(cfg.occlusion_samples >= 1, "occlusion_samples", "must be >= 1")
    p = 2 ** cfg.n_pools
    need(cfg.n_rows % p == 0 and cfg.n_cols % p == 0, "conv_stack",
         f"grid {cfg.n_rows}x{cfg.n_cols} is not divisible by 2^{cfg.n_pools}")
    try:
        to_datetime64(cfg.start)
    except ValueError:
        raise ConfigError(f"start = {cfg.start!r}: not an ISO-8601 instant", key="start") from None


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment.  Missing keys keep defaults."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}", key=key)
        values[key] = _coerce(key, raw)
    return Config(**values)
