"""Experiment configuration: JSON documents describing the reservoir, the
wells, controls, economics, limits and the algorithm to run.

Validation errors always name the offending field path (e.g.
``controls.production_years``) so configs can be fixed without reading code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .economics import EconomicParams, RateLimits
from .mads import MadsOptions
from .problem import ProblemSpec, WellTemplate
from .pso import PsoOptions
from .reservoir import (
    FluidModel,
    GridGeometry,
    ReservoirModel,
    generate_field,
    initial_state,
    load_rock_binary,
)
from .simulator import SimOptions
from .strategies import ALGORITHMS, StrategySettings
from .wells import INJECTOR, PRODUCER, HorizontalShape, InclinedShape, VerticalShape, WellSpec


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class _Section:
    """Dict wrapper that tracks its JSON path for error messages."""

    def __init__(self, data: dict, path: str = ""):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "must be an object")
        self.data = data
        self.path = path

    def _child(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def require(self, key: str, kind=None):
        if key not in self.data:
            raise ConfigError(self._child(key), "missing required field")
        return self._check(key, self.data[key], kind)

    def get(self, key: str, default=None, kind=None):
        if key not in self.data or self.data[key] is None:
            return default
        return self._check(key, self.data[key], kind)

    def _check(self, key: str, value, kind):
        if kind is None:
            return value
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(self._child(key), "must be a number")
            return float(value)
        if kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(self._child(key), "must be an integer")
            return value
        if not isinstance(value, kind):
            raise ConfigError(self._child(key), f"must be of type {kind.__name__}")
        return value

    def section(self, key: str, required: bool = True) -> Optional["_Section"]:
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(self._child(key), "missing required section")
            return None
        return _Section(self.require(key, dict), self._child(key))

    def pair(self, key: str, default=None) -> Optional[tuple[float, float]]:
        raw = self.get(key, default=default, kind=list) if default is None else self.get(key, default=list(default), kind=list)
        if raw is None:
            return None
        if len(raw) != 2 or not all(isinstance(v, (int, float)) for v in raw):
            raise ConfigError(self._child(key), "must be a [low, high] pair")
        lo, hi = float(raw[0]), float(raw[1])
        if lo >= hi:
            raise ConfigError(self._child(key), "bounds must be ordered low < high")
        return lo, hi


@dataclass
class ExperimentConfig:
    name: str
    grid: GridGeometry
    field_params: Optional[dict]
    field_file: Optional[str]
    fluids: FluidModel
    owc_depth: float
    datum_pressure: float
    initial_water_saturation: float
    n_injectors: int
    n_producers: int
    well_kind: str
    l_bounds: tuple[float, float]
    phi_bounds: tuple[float, float]
    z_bounds_injector: tuple[float, float]
    z_bounds_producer: tuple[float, float]
    well_radius: float
    production_years: float
    control_interval_years: float
    injector_bhp: tuple[float, float]
    producer_bhp: tuple[float, float]
    fixed_controls: Optional[dict[str, float]]
    econ: EconomicParams
    limits: RateLimits
    algorithm: str
    budget: int
    n_repeats: int
    base_seed: int
    settings: StrategySettings
    sim_options: SimOptions
    output_dir: Optional[str]


def parse_config(doc: dict, name: str = "experiment") -> ExperimentConfig:
    root = _Section(doc)

    res = root.section("reservoir")
    g = res.section("grid")
    grid = GridGeometry(
        nx=g.require("nx", int),
        ny=g.require("ny", int),
        nz=g.require("nz", int),
        dx=g.require("dx", float),
        dy=g.require("dy", float),
        dz=g.require("dz", float),
        depth_top=g.get("depth_top", 2000.0, float),
    )

    field_sec = res.section("field", required=False)
    field_file = res.get("field_file", kind=str)
    field_params = None
    if field_sec is not None:
        field_params = {
            "seed": field_sec.require("seed", int),
            "mean_perm_md": field_sec.require("mean_perm_md", float),
            "log_stddev": field_sec.get("log_stddev", 0.0, float),
            "correlation_length_m": field_sec.get("correlation_length_m", 100.0, float),
            "anisotropy_z": field_sec.get("anisotropy_z", 0.1, float),
            "porosity_mean": field_sec.get("porosity_mean", 0.2, float),
            "porosity_stddev": field_sec.get("porosity_stddev", 0.05, float),
        }
    if field_params is None and field_file is None:
        raise ConfigError("reservoir.field", "missing required field (or field_file)")

    fl = res.section("fluids", required=False)
    fluids = FluidModel() if fl is None else FluidModel(
        rho_w=fl.get("rho_w", 1000.0, float),
        rho_o=fl.get("rho_o", 860.0, float),
        mu_w=fl.get("mu_w", 0.32, float),
        mu_o=fl.get("mu_o", 0.53, float),
        c_w=fl.get("c_w", 5.0e-5, float),
        c_o_compr=fl.get("c_o", 4.35e-5, float),
        corey_nw=fl.get("corey_nw", 2.0, float),
        corey_no=fl.get("corey_no", 2.0, float),
        swc=fl.get("swc", 0.2, float),
        sor=fl.get("sor", 0.2, float),
        krw_end=fl.get("krw_end", 0.6, float),
        kro_end=fl.get("kro_end", 0.9, float),
    )

    ini = res.section("initial")
    owc = ini.require("owc_depth_m", float)
    datum = ini.get("datum_pressure_bar", 280.0, float)
    s_w0 = ini.get("initial_water_saturation", 0.2, float)

    wsec = root.section("wells")
    kind = wsec.require("kind", str)
    if kind not in ("vertical", "horizontal", "inclined"):
        raise ConfigError("wells.kind", "must be vertical, horizontal or inclined")
    n_inj = wsec.require("injectors", int)
    n_prod = wsec.require("producers", int)
    if n_inj < 1 or n_prod < 1:
        raise ConfigError("wells.injectors", "need at least one well of each role")

    csec = root.section("controls")
    production_years = csec.require("production_years", float)
    interval_years = csec.require("control_interval_years", float)
    n_intervals = production_years / interval_years
    if abs(n_intervals - round(n_intervals)) > 1e-9 or round(n_intervals) < 1:
        raise ConfigError(
            "controls.control_interval_years",
            "control interval must divide the production period",
        )
    fixed_sec = csec.section("fixed", required=False)
    fixed_controls = None
    if fixed_sec is not None:
        fixed_controls = {
            INJECTOR: fixed_sec.require("injector_bhp_bar", float),
            PRODUCER: fixed_sec.require("producer_bhp_bar", float),
        }

    esec = root.section("economics", required=False)
    econ = EconomicParams() if esec is None else EconomicParams(
        c_o=esec.get("oil_price_per_bbl", 80.0, float),
        c_w_inj=esec.get("water_injection_cost_per_bbl", 8.0, float),
        c_w_disp=esec.get("water_disposal_cost_per_bbl", 12.0, float),
        r=esec.get("interest_rate", 0.10, float),
        base_drill_cost=esec.get("base_drill_cost", 25e6, float),
        drill_cost_per_m=esec.get("drill_cost_per_m", 50e3, float),
    )

    lsec = root.section("limits", required=False)
    limits = RateLimits() if lsec is None else RateLimits(
        q_max_inj=lsec.get("q_max_inj_m3_per_day", None, float),
        q_max_prod=lsec.get("q_max_prod_m3_per_day", None, float),
    )

    asec = root.section("algorithm")
    algorithm = asec.require("name", str)
    if algorithm not in ALGORITHMS:
        raise ConfigError("algorithm.name", f"must be one of {', '.join(ALGORITHMS)}")
    budget = asec.require("budget", int)
    if budget < 1:
        raise ConfigError("algorithm.budget", "must be >= 1")

    psec = asec.section("pso", required=False)
    pso = PsoOptions() if psec is None else PsoOptions(
        size=psec.get("size", 50, int),
        iota=psec.get("iota", 0.721, float),
        mu=psec.get("mu", 1.193, float),
        nu=psec.get("nu", 1.193, float),
        stagnation_iters=psec.get("stagnation_iters", 100, int),
    )
    msec = asec.section("mads", required=False)
    mads = MadsOptions() if msec is None else MadsOptions(
        initial_delta_p=msec.get("initial_delta_p", 0.25, float),
        delta_min=msec.get("delta_min", 1e-6, float),
        lhs_count=msec.get("lhs_count", 60, int),
    )
    stage_raw = asec.get("stage_budgets", [4000, 8000], kind=list)
    if len(stage_raw) != 2 or not all(isinstance(v, int) for v in stage_raw):
        raise ConfigError("algorithm.stage_budgets", "must be a pair of integers")
    settings = StrategySettings(
        mads=mads,
        pso=pso,
        stage_budgets=(stage_raw[0], stage_raw[1]),
        stage2_initial_delta_p=asec.get("stage2_initial_delta_p", 0.1, float),
        stage1_injector_bhp=asec.get("stage1_injector_bhp_bar", 425.0, float),
        stage1_producer_bhp=asec.get("stage1_producer_bhp_bar", 150.0, float),
    )

    ssec = root.section("simulator", required=False)
    sim = SimOptions() if ssec is None else SimOptions(
        report_step_days=ssec.get("report_step_days", 30.0, float),
        cfl=ssec.get("cfl", 0.5, float),
        cg_rtol=ssec.get("cg_rtol", 1e-8, float),
        rock_compressibility=ssec.get("rock_compressibility", 0.0, float),
    )

    osec = root.section("output", required=False)
    out_dir = None if osec is None else osec.get("dir", kind=str)

    return ExperimentConfig(
        name=name,
        grid=grid,
        field_params=field_params,
        field_file=field_file,
        fluids=fluids,
        owc_depth=owc,
        datum_pressure=datum,
        initial_water_saturation=s_w0,
        n_injectors=n_inj,
        n_producers=n_prod,
        well_kind=kind,
        l_bounds=wsec.pair("l_bounds_m", default=(100.0, 320.0)),
        phi_bounds=wsec.pair("phi_bounds_deg", default=(0.0, 10.0)),
        z_bounds_injector=wsec.pair("z_bounds_injector_m", default=(25.0, 50.0)),
        z_bounds_producer=wsec.pair("z_bounds_producer_m", default=(0.0, 50.0)),
        well_radius=wsec.get("well_radius_m", 0.1, float),
        production_years=production_years,
        control_interval_years=interval_years,
        injector_bhp=csec.pair("injector_bhp_bar", default=(300.0, 450.0)),
        producer_bhp=csec.pair("producer_bhp_bar", default=(125.0, 260.0)),
        fixed_controls=fixed_controls,
        econ=econ,
        limits=limits,
        algorithm=algorithm,
        budget=budget,
        n_repeats=asec.get("n_repeats", 1, int),
        base_seed=asec.get("base_seed", 0, int),
        settings=settings,
        sim_options=sim,
        output_dir=out_dir,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
    return parse_config(doc, name=path.stem)


def build_model(cfg: ExperimentConfig) -> ReservoirModel:
    if cfg.field_params is not None:
        fp = cfg.field_params
        rock = generate_field(
            seed=fp["seed"],
            grid=cfg.grid,
            log_mean=math.log(fp["mean_perm_md"]),
            log_stddev=fp["log_stddev"],
            correlation_length=fp["correlation_length_m"],
            anisotropy_z=fp["anisotropy_z"],
            porosity_mean=fp["porosity_mean"],
            porosity_stddev=fp["porosity_stddev"],
        )
    else:
        rock = load_rock_binary(cfg.field_file)
    init = initial_state(
        cfg.grid,
        cfg.fluids,
        owc_depth=cfg.owc_depth,
        datum_pressure=cfg.datum_pressure,
        initial_water_saturation=cfg.initial_water_saturation,
    )
    return ReservoirModel(grid=cfg.grid, rock=rock, fluids=cfg.fluids, init=init)


def build_problem_spec(cfg: ExperimentConfig, model: Optional[ReservoirModel] = None) -> ProblemSpec:
    if model is None:
        model = build_model(cfg)
    template = tuple(
        [WellTemplate(INJECTOR, cfg.well_kind, f"I{i}") for i in range(cfg.n_injectors)]
        + [WellTemplate(PRODUCER, cfg.well_kind, f"P{i}") for i in range(cfg.n_producers)]
    )
    return ProblemSpec(
        model=model,
        wells_template=template,
        control_intervals=int(round(cfg.production_years / cfg.control_interval_years)),
        production_years=cfg.production_years,
        injector_bhp=cfg.injector_bhp,
        producer_bhp=cfg.producer_bhp,
        l_bounds=cfg.l_bounds,
        phi_bounds=cfg.phi_bounds,
        z_bounds_injector=cfg.z_bounds_injector,
        z_bounds_producer=cfg.z_bounds_producer,
        econ=cfg.econ,
        limits=cfg.limits,
        budget=cfg.budget,
        fixed_controls=cfg.fixed_controls,
        r_well=cfg.well_radius,
        sim_options=cfg.sim_options,
    )


# ---------------------------------------------------------------------------
# Solution JSON serialization


def well_to_dict(well: WellSpec) -> dict:
    s = well.shape
    if isinstance(s, VerticalShape):
        params = {"kind": "vertical", "x_idx": s.x_idx, "y_idx": s.y_idx}
    elif isinstance(s, HorizontalShape):
        params = {"kind": "horizontal", "x": s.x, "y": s.y, "l": s.l, "theta": s.theta}
    else:
        params = {
            "kind": "inclined",
            "x": s.x, "y": s.y, "z": s.z, "l": s.l, "theta": s.theta, "phi": s.phi,
        }
    return {"label": well.label, "role": well.role, **params}


def well_from_dict(doc: dict) -> WellSpec:
    kind = doc["kind"]
    if kind == "vertical":
        shape = VerticalShape(int(doc["x_idx"]), int(doc["y_idx"]))
    elif kind == "horizontal":
        shape = HorizontalShape(doc["x"], doc["y"], doc["l"], doc["theta"])
    elif kind == "inclined":
        shape = InclinedShape(
            doc["x"], doc["y"], doc["z"], doc["l"], doc["theta"], doc["phi"]
        )
    else:
        raise ValueError(f"unknown well kind {kind!r}")
    return WellSpec(role=doc["role"], shape=shape, label=doc["label"])


def solution_to_dict(
    wells: list[WellSpec],
    bhp: np.ndarray,
    interval_days: float,
    evaluation,
    algorithm: str,
    seed: int,
    vector: Optional[np.ndarray] = None,
) -> dict:
    return {
        "algorithm": algorithm,
        "seed": seed,
        "npv": evaluation.npv,
        "h": evaluation.h,
        "feasible": evaluation.feasible,
        "wells": [well_to_dict(w) for w in wells],
        "schedule": {
            "interval_days": interval_days,
            "bhp": np.asarray(bhp).tolist(),
        },
        "vector": None if vector is None else np.asarray(vector).tolist(),
    }
