#!/usr/bin/env python3
"""
Run configuration: a flat key=value text file with '#' comments.

CLI flags override file keys; serialize() writes the same format back.
"""

import dataclasses
import logging
from dataclasses import dataclass, fields
from typing import Dict, List, Optional, Tuple

from .exceptions import ConfigError
from .ldpc_code import parse_code_params

logger = logging.getLogger(__name__)

COMMANDS = ("simulate", "threshold", "detector-compare", "de-trace", "neighborhood", "code-gen")
MAPPINGS = ("row-major", "random")
COSETS = ("zero", "random")
DE_MODES = ("te", "non-te")

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass(frozen=True)
class RunConfig:
    """
    Effective configuration of one CLI run.

    code is either an alist path or generator parameters "N,DV,DC".
    snr / sigma are grids "a:b:step" (inclusive) or single values.
    """

    command: str = "simulate"
    code: str = ""
    degrees: str = "3,6"
    girth: int = 6
    coset: str = "zero"
    channel: str = "HA"
    grid: str = "auto"
    mapping: str = "row-major"
    mapping_seed: int = 0
    iters: str = "3/50/10"
    snr: str = ""
    sigma: str = ""
    max_frames: int = 100
    min_errors: int = 100
    batch_frames: int = 8
    workers: int = 1
    early_exit: bool = False
    window: str = ""
    timing: bool = True
    mode: str = "te"
    tol: float = 0.01
    bracket: str = "0.3:1.5"
    samples: int = 100_000
    delta: float = 0.05
    llr_max: float = 50.0
    p_ers: float = 1e-6
    t_max: int = 3
    length: int = 1_000_000
    seed: int = 0
    out: str = ""

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def serialize(self) -> str:
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path, comments: Optional[Dict[str, object]] = None) -> None:
        with open(path, "w") as f:
            f.write(self.serialize())
            for key, value in (comments or {}).items():
                f.write(f"# {key}={value}\n")

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {number}", f"expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigError(key, "unknown key")
            values[key] = _coerce(key, types[key], value)
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r") as f:
                text = f.read()
        except OSError as e:
            raise ConfigError("config", f"cannot read {path}: {e}")
        return cls.parse(text)

    def validate(self) -> "RunConfig":
        """Check field ranges and the fields the command needs; returns self."""
        if self.command not in COMMANDS:
            raise ConfigError("command", f"unknown command {self.command!r}")
        for name in ("girth", "max_frames", "min_errors", "batch_frames", "workers", "samples", "t_max", "length"):
            if getattr(self, name) < (0 if name == "t_max" else 1):
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        for name in ("tol", "delta", "llr_max", "p_ers"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, f"must be positive, got {getattr(self, name)}")
        if self.mapping not in MAPPINGS:
            raise ConfigError("mapping", f"expected one of {', '.join(MAPPINGS)}, got {self.mapping!r}")
        if self.coset not in COSETS:
            raise ConfigError("coset", f"expected one of {', '.join(COSETS)}, got {self.coset!r}")
        if self.mode not in DE_MODES:
            raise ConfigError("mode", f"expected one of {', '.join(DE_MODES)}, got {self.mode!r}")
        self.iteration_counts()
        self.bracket_bounds()
        self.degree_pair()
        if self.window:
            self.window_halves()

        if self.command in ("simulate", "code-gen") and not self.code:
            raise ConfigError("code", "an alist path or N,DV,DC is required")
        if self.command == "code-gen":
            if self.code_params() is None:
                raise ConfigError("code", f"code-gen needs N,DV,DC, got {self.code!r}")
            if not self.out:
                raise ConfigError("out", "code-gen needs an output path")
        if self.command in ("simulate", "detector-compare"):
            if bool(self.snr) == bool(self.sigma):
                raise ConfigError("snr", "give exactly one of snr and sigma grids")
            self.snr_grid()
            self.sigma_grid()
        if self.command == "de-trace" and not self.sigma:
            raise ConfigError("sigma", "de-trace needs at least one sigma")
        return self

    def code_params(self) -> Optional[Tuple[int, int, int]]:
        return parse_code_params(self.code)

    def degree_pair(self) -> Tuple[int, int]:
        try:
            d_v, d_c = (int(x) for x in self.degrees.split(","))
        except ValueError:
            raise ConfigError("degrees", f"expected DV,DC, got {self.degrees!r}")
        if d_v < 2 or d_c <= d_v:
            raise ConfigError("degrees", f"need 2 <= DV < DC, got {self.degrees!r}")
        return d_v, d_c

    def iteration_counts(self) -> Tuple[int, int, int]:
        try:
            counts = tuple(int(x) for x in self.iters.split("/"))
        except ValueError:
            counts = ()
        if len(counts) != 3 or min(counts) < 1:
            raise ConfigError("iters", f"expected DET/IC/IOUT positive counts, got {self.iters!r}")
        return counts

    def window_halves(self) -> Tuple[int, int]:
        try:
            f_c, f_d = (int(x) for x in self.window.split(","))
        except ValueError:
            raise ConfigError("window", f"expected F_C,F_D, got {self.window!r}")
        if f_c < 1 or f_d < 1:
            raise ConfigError("window", f"half widths must be positive, got {self.window!r}")
        return f_c, f_d

    def bracket_bounds(self) -> Tuple[float, float]:
        try:
            lo, hi = (float(x) for x in self.bracket.split(":"))
        except ValueError:
            raise ConfigError("bracket", f"expected LO:HI, got {self.bracket!r}")
        if not 0 < lo < hi:
            raise ConfigError("bracket", f"need 0 < LO < HI, got {self.bracket!r}")
        return lo, hi

    def snr_grid(self) -> Optional[List[float]]:
        return parse_grid("snr", self.snr) if self.snr else None

    def sigma_grid(self) -> Optional[List[float]]:
        grid = parse_grid("sigma", self.sigma) if self.sigma else None
        if grid is not None and grid[0] <= 0:
            raise ConfigError("sigma", f"sigma values must be positive, got {grid[0]}")
        return grid


def parse_grid(field: str, text: str) -> List[float]:
    """'a:b:step' inclusive of b, or a single value; strictly increasing."""
    parts = text.split(":")
    try:
        numbers = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(field, f"expected a:b:step or a number, got {text!r}")
    if len(numbers) == 1:
        return numbers
    if len(numbers) != 3:
        raise ConfigError(field, f"expected a:b:step, got {text!r}")
    start, stop, step = numbers
    if step <= 0 or stop < start:
        raise ConfigError(field, f"grid {text!r} is not strictly increasing")
    count = int((stop - start) / step + 1e-9) + 1
    return [round(start + k * step, 12) for k in range(count)]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, kind, value: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "bool":
            lowered = value.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError as e:
        raise ConfigError(key, str(e))
    return value
