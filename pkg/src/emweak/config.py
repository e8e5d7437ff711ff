"""Experiment configuration: a YAML mapping with a fixed set of keys."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Union

import numpy as np
import yaml

from emweak.core import EmweakError, InvalidConfigError, SigmaSpec, sigma_analyze
from emweak.drifts import catalog_get
from emweak.experiment import TestFunction, test_function_get
from emweak.girsanov import NOVIKOV_LAMBDA


class ConfigError(EmweakError, ValueError):
    """Bad configuration; ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class ExperimentConfig:
    """Everything a CLI run needs.

    Step sizes are ``T * 2**-k`` for k in ``delta_min_exp..delta_max_exp``
    unless ``delta_grid`` lists them explicitly. The reference step is
    ``T * 2**-delta_ref_exp``; modulus shifts are ``2**-k`` for k in
    ``u_min_exp..u_max_exp``.
    """

    drift: dict = field(default_factory=lambda: {"name": "svc", "params": {}})
    sigma: Union[str, list] = "identity 1"
    f: dict = field(default_factory=lambda: {"name": "indicator", "params": {"c": 0.5}})
    T: float = 1.0
    x0: list = field(default_factory=lambda: [0.0])
    delta_grid: Optional[list] = None
    delta_min_exp: int = 2
    delta_max_exp: int = 7
    delta_ref_exp: int = 10
    n_paths: int = 200_000
    master_seed: int = 0
    n_workers: int = 1
    n_boot: int = 1000
    output: str = "emweak"
    p0: Optional[float] = None
    lam: float = NOVIKOV_LAMBDA
    cross_delta_exp: int = 5
    u_min_exp: int = 4
    u_max_exp: int = 10
    phi_model: str = "free"
    h2_samples: int = 100_000

    # -- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict, lines: Optional[dict] = None) -> "ExperimentConfig":
        lines = lines or {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError("unknown key", key, lines.get(key))
        cfg = cls(**data)
        cfg.validate(lines)
        return cfg

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            mark = exc.problem_mark
            raise ConfigError(str(exc.problem), line=None if mark is None else mark.line + 1) from None
        if data is None:
            data = {}
        lines = {}
        if isinstance(node, yaml.MappingNode):
            for k, _ in node.value:
                lines[k.value] = k.start_mark.line + 1
        return cls.from_dict(data, lines)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_yaml(fh.read())

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def replace(self, **changes) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(data)

    # -- validation ---------------------------------------------------

    def validate(self, lines: Optional[dict] = None) -> None:
        lines = lines or {}

        def fail(name, msg):
            raise ConfigError(msg, name, lines.get(name))

        for name in ("drift", "f"):
            spec = getattr(self, name)
            if not isinstance(spec, dict) or "name" not in spec:
                fail(name, "expected a mapping with 'name' and optional 'params'")
            extra = set(spec) - {"name", "params"}
            if extra:
                fail(name, f"unknown sub-keys {sorted(extra)}")
            if not isinstance(spec.get("params", {}) or {}, dict):
                fail(name, "'params' must be a mapping")
        try:
            T = float(self.T)
        except (TypeError, ValueError):
            fail("T", "must be a number")
        if not (T > 0 and math.isfinite(T)):
            fail("T", "must be positive")
        for name in ("n_paths", "n_workers", "n_boot", "h2_samples"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                fail(name, "must be a positive integer")
        for name in ("master_seed", "delta_min_exp", "delta_max_exp", "delta_ref_exp",
                     "cross_delta_exp", "u_min_exp", "u_max_exp"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                fail(name, "must be an integer")
        if self.delta_grid is None:
            if not 0 <= self.delta_min_exp <= self.delta_max_exp:
                fail("delta_min_exp", "need 0 <= delta_min_exp <= delta_max_exp")
        else:
            if not isinstance(self.delta_grid, list) or not self.delta_grid:
                fail("delta_grid", "must be a non-empty list")
            d = np.asarray(self.delta_grid, dtype=np.float64)
            if np.any(d <= 0) or np.any(np.diff(d) >= 0):
                fail("delta_grid", "must be positive and strictly descending")
        if self.delta_ref_exp < 1:
            fail("delta_ref_exp", "must be positive")
        if not 0 <= self.u_min_exp <= self.u_max_exp:
            fail("u_min_exp", "need 0 <= u_min_exp <= u_max_exp")
        if self.p0 is not None and float(self.p0) < 2:
            fail("p0", "must be >= 2")
        if not (isinstance(self.lam, (int, float)) and self.lam >= 0):
            fail("lam", "must be a nonnegative number")
        if self.phi_model not in ("free", "constant"):
            fail("phi_model", "must be 'free' or 'constant'")
        if not isinstance(self.x0, list) or not self.x0:
            fail("x0", "must be a non-empty list of numbers")
        try:
            sig = self.sigma_spec()
        except EmweakError as exc:
            fail("sigma", str(exc))
        if sig.dim != len(self.x0):
            fail("x0", f"has {len(self.x0)} coordinates but sigma is {sig.dim}x{sig.dim}")
        try:
            self.drift_spec()
        except (EmweakError, TypeError, ValueError) as exc:
            fail("drift", str(exc))
        try:
            self.test_function()
        except (EmweakError, TypeError, ValueError) as exc:
            fail("f", str(exc))

    # -- derived objects ----------------------------------------------

    def sigma_spec(self) -> SigmaSpec:
        if isinstance(self.sigma, str):
            parts = self.sigma.split()
            if len(parts) != 2 or parts[0] != "identity" or not parts[1].isdigit() or int(parts[1]) < 1:
                raise InvalidConfigError("sigma string must be 'identity <d>'")
            return sigma_analyze(np.eye(int(parts[1])))
        if isinstance(self.sigma, (int, float)):
            return sigma_analyze([[float(self.sigma)]])
        return sigma_analyze(self.sigma)

    def drift_spec(self):
        return catalog_get(self.drift["name"], **(self.drift.get("params") or {}))

    def test_function(self) -> TestFunction:
        return test_function_get(self.f["name"], **(self.f.get("params") or {}))

    def deltas(self) -> list[float]:
        if self.delta_grid is not None:
            return [float(v) for v in self.delta_grid]
        return [math.ldexp(float(self.T), -k) for k in range(self.delta_min_exp, self.delta_max_exp + 1)]

    def delta_ref(self) -> float:
        return math.ldexp(float(self.T), -self.delta_ref_exp)

    def shifts(self) -> list[float]:
        return [2.0 ** -k for k in range(self.u_max_exp, self.u_min_exp - 1, -1)]

    def p0_value(self) -> float:
        if self.p0 is not None:
            return float(self.p0)
        return self.drift_spec().theoretical_p0 or 2.0
