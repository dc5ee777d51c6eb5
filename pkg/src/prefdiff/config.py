"""Flat key=value configuration with dotted namespaces.

Only the keys below exist; anything else is rejected by name. Values are
validated at parse time against the owning module's preconditions, so a
config that loads is a config that runs.
"""

from __future__ import annotations

import math
from pathlib import Path

from .data import TASK_NAMES


def _parse_bool(raw: str) -> bool:
    if raw == "true":
        return True
    if raw == "false":
        return False
    raise ValueError(f"expected true or false, got {raw!r}")


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"expected an integer, got {raw!r}") from None


def _parse_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"expected a number, got {raw!r}") from None


def _parse_task(raw: str) -> str:
    if raw not in TASK_NAMES:
        raise ValueError(f"expected one of {', '.join(TASK_NAMES)}, got {raw!r}")
    return raw


# key -> (parser, validator, constraint description)
KEY_SPECS = {
    "schedule.T": (_parse_int, lambda v: v >= 2, ">= 2"),
    "schedule.beta_start": (_parse_float, lambda v: 0.0 < v < 1.0, "in (0, 1)"),
    "schedule.beta_end": (_parse_float, lambda v: 0.0 < v < 1.0, "in (0, 1)"),
    "train.steps": (_parse_int, lambda v: v >= 1, ">= 1"),
    "train.batch": (_parse_int, lambda v: v >= 1, ">= 1"),
    "train.lr": (_parse_float, lambda v: v > 0.0, "> 0"),
    "pc.beta": (_parse_float, lambda v: v > 0.0, "> 0"),
    "guidance.gamma": (_parse_float, lambda v: math.isfinite(v) and v >= 0.0, "finite and >= 0"),
    "guidance.M": (_parse_int, lambda v: v >= 0, ">= 0"),
    "guidance.rejection": (_parse_bool, lambda v: True, ""),
    "data.task": (_parse_task, lambda v: True, ""),
    "seed": (_parse_int, lambda v: 0 <= v < 2**64, "a 64-bit unsigned integer"),
}

# Keys every command resolves the same way when unset. train.* defaults are
# per-command (the two trainers run at different scales), so they live with
# the commands instead.
GLOBAL_DEFAULTS = {
    "schedule.T": 50,
    "schedule.beta_start": 1e-4,
    "schedule.beta_end": 0.02,
    "pc.beta": 0.1,
    "guidance.gamma": 1.0,
    "guidance.M": 5,
    "guidance.rejection": True,
    "data.task": "two-mode-2d",
    "seed": 0,
}


class Config:
    """Validated key/value pairs; unset keys fall back per lookup."""

    def __init__(self, values: dict | None = None):
        self.values: dict = {}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value) -> None:
        if key not in KEY_SPECS:
            raise ValueError(f"unknown config key {key!r}")
        _, check, constraint = KEY_SPECS[key]
        if not check(value):
            raise ValueError(f"config key {key!r} must be {constraint}, got {value!r}")
        self.values[key] = value

    def get(self, key: str, default=None):
        if key not in KEY_SPECS:
            raise ValueError(f"unknown config key {key!r}")
        if key in self.values:
            return self.values[key]
        if default is not None:
            return default
        if key in GLOBAL_DEFAULTS:
            return GLOBAL_DEFAULTS[key]
        raise ValueError(f"config key {key!r} is unset and has no default here")

    def schedule_args(self) -> tuple[int, float, float]:
        T = self.get("schedule.T")
        start = self.get("schedule.beta_start")
        end = self.get("schedule.beta_end")
        if not start <= end:
            raise ValueError(
                f"schedule.beta_start = {start} must not exceed schedule.beta_end = {end}"
            )
        return T, start, end


def parse_config_text(text: str) -> Config:
    """Parse key=value lines; # starts a comment, blank lines are ignored."""
    cfg = Config()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw_line.strip()!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in KEY_SPECS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        parser, _, _ = KEY_SPECS[key]
        try:
            value = parser(raw_value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: config key {key!r}: {exc}") from None
        cfg.set(key, value)
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    return parse_config_text(Path(path).read_text(encoding="utf-8"))
