"""Run configurations: a JSON document describing one abstraction experiment.

Schema (all keys optional unless noted)::

    {
      "name": "table1",
      "function": {"builtin": "rastrigin", "params": {"d": 2}}    # required; or
                  {"dsl": "field.dsl"} / {"dsl_text": "f0 = x0^2"},
      "domain": {"lower": [...], "upper": [...]},   # required for DSL functions
      "points_per_dim": 51,                         # required; int or list
      "method": "both",                             # onestep | incremental | both
      "budget": 500,                                # required iff incremental runs
      "memory_cap": null,                           # max active sample points
      "heuristics": {"start_region": "left_corner", # | "center" | {"lo": [..], "hi": [..]}
                     "warm_start": [[0.5]],         # positions, snapped to the grid
                     "expansion_order": [0, 1],
                     "partial_slabs": true},
      "smoothness": {"class": "lipschitz", "constant": 71.34},   # or "constant": "estimate"
      "output_mode": "scalar",                      # | replicated
      "coupling": "l1",                             # | componentwise
      "verify": {"grid_subset": null, "continuous_samples": 100000},
      "plot": {"slice": "x1=0", "increments": [1, 3, 5, 7]},
      "reference": {"onestep": 80.23, "incremental": 112.4},
      "out_dir": "out",
      "seed": 0
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .abstraction import OUTPUT_MODES, AbstractionConfig
from .errors import ConfigError, IncabsError
from .funcs import default_domain, estimated_spec, instantiate_builtin, parse_function_spec
from .funcs.spec import FunctionSpec, Smoothness
from .lp import COUPLINGS
from .mesh import BoxRegion, DomainBox, UniformMesh, build_mesh

METHODS = ("onestep", "incremental", "both")
TOP_KEYS = {
    "name", "function", "domain", "points_per_dim", "method", "budget", "memory_cap", "heuristics",
    "smoothness", "output_mode", "coupling", "verify", "plot", "reference", "out_dir", "seed",
}


@dataclass
class RunConfig:
    name: str
    function: dict
    points_per_dim: int | list[int]
    domain: dict | None = None
    method: str = "both"
    budget: int | None = None
    memory_cap: int | None = None
    start_region: Any = "left_corner"
    warm_start: list = field(default_factory=list)
    expansion_order: list[int] | None = None
    partial_slabs: bool = True
    smoothness_class: str | None = None
    smoothness_constant: float | str | None = None
    output_mode: str = "scalar"
    coupling: str = "l1"
    grid_subset: int | None = None
    continuous_samples: int = 100_000
    plot_slice: str | None = None
    plot_increments: list[int] | None = None
    reference: dict = field(default_factory=dict)
    out_dir: str = "out"
    seed: int = 0
    base_dir: Path = Path(".")

    @property
    def methods(self) -> tuple[str, ...]:
        return ("incremental", "onestep") if self.method == "both" else (self.method,)

    # ------------------------------------------------------------ builders

    def build_spec(self) -> FunctionSpec:
        fn = self.function
        try:
            if "builtin" in fn:
                spec = instantiate_builtin(fn["builtin"], fn.get("params", {}))
            elif "dsl" in fn:
                spec = parse_function_spec((self.base_dir / fn["dsl"]).read_text(encoding="utf-8"))
            else:
                spec = parse_function_spec(fn["dsl_text"])
        except OSError as exc:
            raise ConfigError(f"cannot read DSL file: {exc}") from exc
        except IncabsError as exc:
            raise ConfigError(f"bad function: {exc}") from exc
        if self.smoothness_class is None:
            return spec
        if self.smoothness_constant == "estimate":
            return estimated_spec(spec, self.build_domain(spec), self.smoothness_class, seed=self.seed)
        return spec.with_smoothness(self.smoothness_class, self.smoothness_constant)

    def build_domain(self, spec: FunctionSpec | None = None) -> DomainBox:
        spec = spec if spec is not None else self.build_spec()
        if self.domain is None:
            fn = self.function
            if "builtin" not in fn:
                raise ConfigError("a DSL function needs explicit domain bounds")
            return default_domain(fn["builtin"], fn.get("params", {}))
        try:
            return DomainBox(tuple(self.domain["lower"]), tuple(self.domain["upper"]), spec.n, spec.m)
        except (KeyError, TypeError, IncabsError) as exc:
            raise ConfigError(f"bad domain: {exc}") from exc

    def build(self) -> tuple[FunctionSpec, UniformMesh]:
        spec = self.build_spec()
        domain = self.build_domain(spec)
        try:
            return spec, build_mesh(domain, self.points_per_dim)
        except IncabsError as exc:
            raise ConfigError(f"bad mesh: {exc}") from exc

    def abstraction_config(self, mesh: UniformMesh) -> AbstractionConfig:
        start = self.start_region
        if isinstance(start, dict):
            start = BoxRegion(tuple(start["lo"]), tuple(start["hi"]))
        warm = tuple(mesh.nearest_index(p) for p in self.warm_start)
        order = None if self.expansion_order is None else tuple(self.expansion_order)
        return AbstractionConfig(
            budget=self.budget if self.budget is not None else mesh.s_max,
            expansion_order=order,
            start_region=start,
            warm_start=warm,
            output_mode=self.output_mode,
            partial_slabs=self.partial_slabs,
            coupling=self.coupling,
            memory_cap=self.memory_cap,
        )


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _count(value, key: str, minimum: int = 1) -> None:
    _expect(
        value is None or (isinstance(value, int) and not isinstance(value, bool) and value >= minimum),
        f"'{key}' must be an integer >= {minimum}, got {value!r}",
    )


def validate(cfg: RunConfig) -> RunConfig:
    fn = cfg.function
    _expect(isinstance(fn, dict) and len({"builtin", "dsl", "dsl_text"} & set(fn)) == 1,
            "'function' needs exactly one of 'builtin', 'dsl', 'dsl_text'")
    _expect(cfg.method in METHODS, f"'method' must be one of {METHODS}, got {cfg.method!r}")
    incremental = cfg.method in ("incremental", "both")
    _expect(incremental == (cfg.budget is not None),
            "'budget' is required for incremental runs and not allowed for onestep-only runs")
    _count(cfg.budget, "budget")
    _count(cfg.memory_cap, "memory_cap")
    if cfg.budget is not None and cfg.memory_cap is not None:
        _expect(cfg.memory_cap >= cfg.budget, f"memory_cap {cfg.memory_cap} is below budget {cfg.budget}")
    ppd = cfg.points_per_dim
    _expect(isinstance(ppd, int) or (isinstance(ppd, list) and all(isinstance(c, int) for c in ppd)),
            "'points_per_dim' must be an integer or a list of integers")
    _expect(cfg.output_mode in OUTPUT_MODES, f"'output_mode' must be one of {OUTPUT_MODES}")
    _expect(cfg.coupling in COUPLINGS, f"'coupling' must be one of {COUPLINGS}")
    start = cfg.start_region
    _expect(start in ("left_corner", "center") or (isinstance(start, dict) and {"lo", "hi"} <= set(start)),
            "'start_region' must be 'left_corner', 'center' or {'lo': [...], 'hi': [...]}")
    if cfg.smoothness_class is not None:
        try:
            Smoothness.parse(cfg.smoothness_class)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        c = cfg.smoothness_constant
        _expect(c == "estimate" or (isinstance(c, (int, float)) and not isinstance(c, bool) and c >= 0),
                "smoothness 'constant' must be a non-negative number or \"estimate\"")
    _count(cfg.grid_subset, "verify.grid_subset")
    _count(cfg.continuous_samples, "verify.continuous_samples", 0)
    _expect(isinstance(cfg.seed, int), "'seed' must be an integer")
    return cfg


def from_dict(doc: dict, base_dir: Path = Path(".")) -> RunConfig:
    _expect(isinstance(doc, dict), "config must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    _expect(not unknown, f"unknown config keys {sorted(unknown)}")
    _expect("function" in doc and "points_per_dim" in doc, "config needs 'function' and 'points_per_dim'")
    heur = doc.get("heuristics", {})
    smooth = doc.get("smoothness") or {}
    ver = doc.get("verify", {})
    plot = doc.get("plot", {})
    unknown = set(heur) - {"start_region", "warm_start", "expansion_order", "partial_slabs"}
    _expect(not unknown, f"unknown heuristics keys {sorted(unknown)}")
    cfg = RunConfig(
        name=doc.get("name", "run"),
        function=doc["function"],
        points_per_dim=doc["points_per_dim"],
        domain=doc.get("domain"),
        method=doc.get("method", "both"),
        budget=doc.get("budget"),
        memory_cap=doc.get("memory_cap"),
        start_region=heur.get("start_region", "left_corner"),
        warm_start=heur.get("warm_start", []),
        expansion_order=heur.get("expansion_order"),
        partial_slabs=heur.get("partial_slabs", True),
        smoothness_class=smooth.get("class"),
        smoothness_constant=smooth.get("constant"),
        output_mode=doc.get("output_mode", "scalar"),
        coupling=doc.get("coupling", "l1"),
        grid_subset=ver.get("grid_subset"),
        continuous_samples=ver.get("continuous_samples", 100_000),
        plot_slice=plot.get("slice"),
        plot_increments=plot.get("increments"),
        reference=doc.get("reference", {}),
        out_dir=doc.get("out_dir", "out"),
        seed=doc.get("seed", 0),
        base_dir=base_dir,
    )
    return validate(cfg)


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return apply_overrides(from_dict(doc, path.parent), **overrides)


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    changes = {k: v for k, v in overrides.items() if v is not None}
    if changes.get("method") == "onestep" and "budget" not in changes:
        changes["budget"] = None
    return validate(replace(cfg, **changes)) if changes else cfg
