"""Run configuration: JSON in, validated dataclass out."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .beltrami import BeltramiCoefficient, constant_radial, truncate, zero_coefficient
from .conditions import MajorantQ, constant_majorant
from .field_core import GridSpec, build_grid, interpolate, load_field

CHECKS = ("l1", "divergence", "fmo", "continuity", "ring")


@dataclass
class RunConfig:
    coefficient: dict = field(default_factory=lambda: {"kind": "example"})
    alpha: float = 1.0
    p: float = 1.0
    k: float = 4.0
    k_list: list = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    grid_n: int = 512
    half_width: float = 2.0
    tol: float = 1e-8
    max_iter: int = 2000
    extension: str = "reflect"
    slack: float = 1e-2
    majorant: dict | None = None
    checks: list = field(default_factory=lambda: list(CHECKS))
    points: list = field(default_factory=lambda: [[0.0, 0.0]])
    delta: float | None = None
    epsilons: list = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    fmo_function: str = "majorant"
    continuity: dict = field(default_factory=lambda: {"z0": [0.75, 0.0], "r0": 0.1, "samples": 1000})
    ring_pairs: int = 20
    expect: dict = field(default_factory=dict)
    dump_fields: bool = False
    pipeline: str = "numerical"
    thresholds: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "bdeg_out"

    def __post_init__(self):
        if self.extension not in ("reflect", "zero"):
            raise ValueError(f"extension must be 'reflect' or 'zero', got {self.extension!r}")
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ValueError(f"unknown checks {sorted(unknown)}")
        kind = self.coefficient.get("kind")
        if kind not in ("example", "radial", "grid", "zero"):
            raise ValueError(f"unknown coefficient kind {kind!r}")
        self.k_list = [float(k) for k in self.k_list]
        if self.pipeline not in ("numerical", "analytic"):
            raise ValueError(f"pipeline must be 'numerical' or 'analytic', got {self.pipeline!r}")
        if self.pipeline == "analytic" and kind != "example":
            raise ValueError("the analytic pipeline needs the example coefficient")
        bad = set(self.thresholds) - {"divergence_floor", "convergence_ratio", "fmo_spread", "fmo_slope"}
        if bad:
            raise ValueError(f"unknown thresholds {sorted(bad)}")
        if self.fmo_function not in ("majorant", "log", "constant", "inverse_sqrt"):
            raise ValueError(f"unknown fmo_function {self.fmo_function!r}")
        # grid validity is checked eagerly
        self.grid()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def grid(self) -> GridSpec:
        return build_grid(self.half_width, self.grid_n)

    def truncation_level(self) -> float:
        k = self.coefficient.get("k")
        return float(self.k if k is None else k)

    def example_params(self, k=None):
        from .example import ExampleParams

        alpha = self.coefficient.get("alpha", self.alpha)
        return ExampleParams(float(alpha), float(self.p), None if k is None else float(k))

    def coefficient_obj(self, truncated: bool = True) -> BeltramiCoefficient:
        """Build the coefficient; ``k`` in the descriptor truncates it unless ``truncated`` is off."""
        c = self.coefficient
        kind = c["kind"]
        if kind == "example":
            from .example import example_coefficient

            mu = example_coefficient(self.example_params())
        elif kind == "radial":
            mu = constant_radial(float(c.get("nu", 0.0)))
        elif kind == "zero":
            mu = zero_coefficient()
        else:
            F = load_field(c["path"], self.grid())
            sup = float(np.max(np.abs(F.values)))
            if sup > 1:
                raise ValueError(f"grid coefficient {c['path']} has |mu| > 1")
            mu = BeltramiCoefficient(lambda z, F=F: interpolate(F, z) * (np.abs(z) <= 1), sup,
                                     f"grid {c['path']}", dict(c))
        if truncated and c.get("k") is not None:
            mu = truncate(mu, float(c["k"]))
        return mu

    def majorant_obj(self) -> MajorantQ | None:
        m = self.majorant
        if m is None:
            if self.coefficient["kind"] == "example":
                from .example import example_majorant

                return example_majorant(self.example_params())
            return None
        kind = m.get("kind")
        if kind == "example":
            from .example import example_majorant

            return example_majorant(self.example_params())
        if kind == "constant":
            return constant_majorant(float(m.get("value", 1.0)))
        if kind == "log":
            return MajorantQ(lambda w: np.log(np.e / np.maximum(np.abs(w), 1e-300)), "log(e/|w|)")
        raise ValueError(f"unknown majorant kind {kind!r}")
