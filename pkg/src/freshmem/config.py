"""Engine configuration and its flat ``key = value`` text form.

Keys mirror the dataclass fields, with the sub-memory prefix spelled out::

    window_len = 5
    mfm.K = 16
    mfm.gamma = 0.9
    stm.theta_event = 0.4

Blank lines and ``#`` comments are ignored; fractions such as ``1/16`` are
accepted for numeric values.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InvalidConfigError


@dataclass(frozen=True)
class MfmConfig:
    K: int = 16
    f_min: float = 0.01
    f_max: float = 0.5
    gamma: float = 0.9
    residual_ratio: float = 0.10
    residual_capacity: int = 15
    slots: int = 15


@dataclass(frozen=True)
class StmConfig:
    theta_event: float = 0.4
    theta_merge: float = 0.3
    rho_min: float = 1 / 16
    rho_max: float = 1 / 4
    capacity: int = 40
    fallback: str = "merge"
    context: str = "previous"


@dataclass(frozen=True)
class EngineConfig:
    window_len: int = 5
    mfm: MfmConfig = field(default_factory=MfmConfig)
    stm: StmConfig = field(default_factory=StmConfig)
    # frame shape, normally taken from the stream header
    S: int | None = None
    D: int | None = None

    def validate(self) -> EngineConfig:
        m, s = self.mfm, self.stm
        checks = [
            ("window_len", self.window_len >= 1, "must be >= 1"),
            ("mfm.K", m.K >= 1, "must be >= 1"),
            ("mfm.f_min", 0.0 < m.f_min, "must be > 0"),
            ("mfm.f_max", m.f_max <= 0.5, "must be <= 0.5 (Nyquist)"),
            ("mfm.f_max", m.f_min < m.f_max, "must exceed mfm.f_min"),
            ("mfm.gamma", 0.0 < m.gamma < 1.0, "decay must lie in the open interval (0, 1)"),
            ("mfm.residual_ratio", 0.0 < m.residual_ratio <= 1.0, "must lie in (0, 1]"),
            ("mfm.residual_capacity", m.residual_capacity >= 1, "must be >= 1"),
            ("mfm.slots", m.slots >= 1, "must be >= 1"),
            ("stm.theta_event", -1.0 <= s.theta_event <= 1.0, "must lie in [-1, 1]"),
            ("stm.theta_merge", -1.0 <= s.theta_merge <= 1.0, "must lie in [-1, 1]"),
            ("stm.rho_min", 0.0 < s.rho_min, "must be > 0"),
            ("stm.rho_max", s.rho_min <= s.rho_max <= 1.0, "must satisfy rho_min <= rho_max <= 1"),
            ("stm.capacity", s.capacity >= 1, "must be >= 1"),
            ("stm.fallback", s.fallback in ("merge", "fifo"), "must be 'merge' or 'fifo'"),
            ("stm.context", s.context in ("previous", "running_mean"), "must be 'previous' or 'running_mean'"),
            ("S", self.S is None or self.S >= 1, "must be >= 1"),
            ("D", self.D is None or self.D >= 1, "must be >= 1"),
        ]
        for name, ok, message in checks:
            if not ok:
                raise InvalidConfigError(name, message)
        return self

    def with_shape(self, S: int, D: int) -> EngineConfig:
        return dataclasses.replace(self, S=int(S), D=int(D))

    def to_flat(self, include_shape: bool = False) -> dict[str, object]:
        flat: dict[str, object] = {"window_len": self.window_len}
        for prefix, sub in (("mfm", self.mfm), ("stm", self.stm)):
            for f in dataclasses.fields(sub):
                flat[f"{prefix}.{f.name}"] = getattr(sub, f.name)
        if include_shape:
            flat["S"], flat["D"] = self.S, self.D
        return flat

    @classmethod
    def from_flat(cls, flat: dict[str, object], base: EngineConfig | None = None) -> EngineConfig:
        base = base or cls()
        top: dict[str, object] = {}
        subs: dict[str, dict[str, object]] = {"mfm": {}, "stm": {}}
        types = _field_types(base)
        for key, value in flat.items():
            if key not in types:
                raise InvalidConfigError(key, "unknown configuration key")
            value = _coerce(key, value, types[key])
            if "." in key:
                prefix, name = key.split(".", 1)
                subs[prefix][name] = value
            else:
                top[key] = value
        return dataclasses.replace(
            base,
            mfm=dataclasses.replace(base.mfm, **subs["mfm"]),
            stm=dataclasses.replace(base.stm, **subs["stm"]),
            **top,
        )

    def dumps(self) -> str:
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in self.to_flat().items())

    def fingerprint(self) -> str:
        """SHA-256 over the tunable fields (frame shape excluded)."""
        canonical = json.dumps(self.to_flat(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _field_types(cfg: EngineConfig) -> dict[str, type]:
    types: dict[str, type] = {"window_len": int, "S": int, "D": int}
    for prefix, sub in (("mfm", cfg.mfm), ("stm", cfg.stm)):
        for f in dataclasses.fields(sub):
            types[f"{prefix}.{f.name}"] = type(getattr(sub, f.name))
    return types


def _coerce(key, value, kind):
    try:
        if kind is str:
            return str(value).strip()
        if isinstance(value, str):
            value = Fraction(value.strip()) if "/" in value else value.strip()
        if kind is int:
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError("not an integer")
            return int(as_float)
        return float(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidConfigError(key, f"cannot parse {value!r}: {exc}") from None


def _format_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def parse_config_text(text: str) -> dict[str, str]:
    flat: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        flat[key] = value
    return flat


def load_config(path, base: EngineConfig | None = None) -> EngineConfig:
    with open(path, encoding="utf-8") as fh:
        return EngineConfig.from_flat(parse_config_text(fh.read()), base)
