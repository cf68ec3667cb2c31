"""Run configuration: INI parsing, validation and named presets.

The config is a single INI file with sections [run], [scenario], [material]
and [solver]; unknown sections or keys are rejected with the offending name.
All defaults of the benchmark presets are baked in (AlSi10Mg constants, cell
size 1 mm, strut area 0.1 mm^2).
"""

from __future__ import annotations

from configparser import ConfigParser
from dataclasses import dataclass, fields

from .material import ALSI10MG, MaterialParams
from .scenarios import ScenarioSpec
from .stepping import SolverOptions

WORKERS_ENV = "LATTICEHOM_WORKERS"

MODES = ("homogenization", "dns", "both")


class ConfigError(ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec
    mode: str = "homogenization"
    output_dir: str = "out"
    workers: int = None          # falls back to LATTICEHOM_WORKERS, then all cores
    write_curves: bool = True
    write_displacement_field: bool = False
    write_poisson: bool = False
    write_yield_map: bool = False
    solver: SolverOptions = SolverOptions()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"run.mode must be one of {MODES}, got {self.mode!r}",
                              field="run.mode")


_RUN_KEYS = {
    "mode": str,
    "output_dir": str,
    "workers": int,
    "write_curves": bool,
    "write_displacement_field": bool,
    "write_poisson": bool,
    "write_yield_map": bool,
}
_SCENARIO_KEYS = {
    "kind": str,
    "lattice": str,
    "nx": int,
    "ny": int,
    "cell_size": float,
    "strut_area": float,
    "thickness": float,
    "mesh_nx": int,
    "mesh_ny": int,
    "amplitude": float,
    "increments_per_segment": int,
    "notch_radius": float,
    "notch_depth": float,
}
_MATERIAL_KEYS = {
    "elastic_modulus": float,
    "kinematic_modulus": float,
    "yield_stress": float,
    "saturation_stress": float,
    "saturation_exponent": float,
}
_SOLVER_KEYS = {
    "tol_rel": float,
    "abs_floor": float,
    "max_newton": int,
    "max_bisections": int,
    "micro_tol_rel": float,
    "micro_max_iter": int,
}
_SECTIONS = {"run": _RUN_KEYS, "scenario": _SCENARIO_KEYS,
             "material": _MATERIAL_KEYS, "solver": _SOLVER_KEYS}

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _convert(section, key, raw, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}",
                          field=f"{section}.{key}") from None


def parse_config(text: str) -> RunConfig:
    cp = ConfigParser()
    cp.read_string(text)
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]", field=section)
        known = _SECTIONS[section]
        for key, raw in cp.items(section):
            if key not in known:
                raise ConfigError(f"unknown config key {section}.{key}",
                                  field=f"{section}.{key}")
            values[(section, key)] = _convert(section, key, raw, known[key])

    def sect(name):
        return {k: v for (s, k), v in values.items() if s == name}

    scen_kwargs = sect("scenario")
    if "kind" not in scen_kwargs or "lattice" not in scen_kwargs:
        raise ConfigError("scenario.kind and scenario.lattice are required",
                          field="scenario.kind")
    if "nx" not in scen_kwargs or "ny" not in scen_kwargs:
        raise ConfigError("scenario.nx and scenario.ny are required", field="scenario.nx")

    mat_kwargs = sect("material")
    material = ALSI10MG
    if mat_kwargs:
        try:
            material = MaterialParams(
                E=mat_kwargs.get("elastic_modulus", ALSI10MG.E),
                H=mat_kwargs.get("kinematic_modulus", ALSI10MG.H),
                sigma_y0=mat_kwargs.get("yield_stress", ALSI10MG.sigma_y0),
                Q_inf=mat_kwargs.get("saturation_stress", ALSI10MG.Q_inf),
                b=mat_kwargs.get("saturation_exponent", ALSI10MG.b),
            )
        except ValueError as exc:
            raise ConfigError(f"material: {exc}", field="material") from None

    try:
        scenario = ScenarioSpec(material=material, **scen_kwargs)
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}", field="scenario") from None

    solver = SolverOptions(**sect("solver")) if sect("solver") else SolverOptions()
    run_kwargs = sect("run")
    try:
        return RunConfig(scenario=scenario, solver=solver, **run_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc), field="run") from None


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _preset(kind, lattice, nx, ny, mode="both", **extra):
    lines = ["[run]", f"mode = {mode}", "write_curves = true"]
    if kind.startswith("plate"):
        lines.append("write_poisson = true")
    lines += ["", "[scenario]", f"kind = {kind}", f"lattice = {lattice}",
              f"nx = {nx}", f"ny = {ny}", "cell_size = 1.0", "strut_area = 0.1"]
    for k, v in extra.items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


#: Benchmark setups with the documented defaults baked in.
PRESETS = {
    "beam_triangular": _preset("beam", "triangular", 240, 48),
    "beam_x_braced": _preset("beam", "x_braced", 240, 48),
    "beam_xp_braced": _preset("beam", "xp_braced", 240, 48),
    "plate_triangular_x": _preset("plate_x", "triangular", 256, 256),
    "plate_triangular_y": _preset("plate_y", "triangular", 256, 256),
    "plate_x_braced": _preset("plate_x", "x_braced", 256, 256),
    "plate_xp_braced": _preset("plate_x", "xp_braced", 256, 256),
    "notched_triangular": _preset("notched_cyclic", "triangular", 32, 64),
    "notched_x_braced": _preset("notched_cyclic", "x_braced", 32, 64),
    "notched_xp_braced": _preset("notched_cyclic", "xp_braced", 32, 64),
}


def preset_ini(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}",
                          field="preset")
    return PRESETS[name]


def config_as_dict(cfg: RunConfig) -> dict:
    """Flatten a RunConfig (every default actually in effect) for the manifest."""
    spec = cfg.scenario
    return {
        "run": {
            "mode": cfg.mode,
            "output_dir": cfg.output_dir,
            "workers": cfg.workers,
            "write_curves": cfg.write_curves,
            "write_displacement_field": cfg.write_displacement_field,
            "write_poisson": cfg.write_poisson,
            "write_yield_map": cfg.write_yield_map,
        },
        "scenario": {
            "kind": spec.kind,
            "lattice": spec.lattice,
            "nx": spec.nx,
            "ny": spec.ny,
            "cell_size": spec.cell_size,
            "strut_area": spec.strut_area,
            "thickness": spec.thickness,
            "mesh_nx": spec.mesh[0],
            "mesh_ny": spec.mesh[1],
            "amplitude": spec.applied_displacement,
            "increments_per_segment": spec.increments_per_segment,
            "notch_radius": spec.notch_radius,
            "notch_depth": spec.notch_depth,
        },
        "material": {
            "elastic_modulus": spec.material.E,
            "kinematic_modulus": spec.material.H,
            "yield_stress": spec.material.sigma_y0,
            "saturation_stress": spec.material.Q_inf,
            "saturation_exponent": spec.material.b,
        },
        "solver": {f.name: getattr(cfg.solver, f.name) for f in fields(cfg.solver)},
    }
