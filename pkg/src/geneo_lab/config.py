"""Experiment configuration files: INI-style sections of key = value lines.

Grammar (sections and keys; unknown keys are rejected):

[experiment]
kind = robustness | coarse_error | scaling   (required)
name = free-text label (default: config file stem)
seed = 0

[problem]
kind = darcy | elasticity        (default darcy)
source = 1.0                     volume source f (darcy)
body_force = 0.0 0.0             (elasticity)
dirichlet = top:1 bottom:0       space-separated side:value items; for
                                 elasticity a value is ux,uy
flux = right:0.5                 Neumann data per side (darcy scalar,
                                 elasticity tx,ty); unlisted sides are zero flux

[mesh]
nx = 160                         total element counts; for scaling studies
ny = 160                         these are per-subdomain counts instead
lx = 1.0
ly = 1.0

[coefficients]
layout = constant | layers | skyscrapers | channels | raster
contrast = 1e6                   ignored when [sweep] contrasts is present
layers = 40                      layer count (layers layout)
rectangles = 0.1,0.1,0.3,0.9; 0.5,0.2,0.6,0.8    fractions of the domain
raster_file = path               relative to the config file
base = 1.0
nu = 0.3 0.4                     Poisson ratios (base material, contrast material)

[decomposition]
px = 8
py = 8
overlap_layers = 1
pou = standard | sarkis

[eigensolver]
tol = 1e-8
subspace = auto                  Krylov size; auto means 3m+10
sigma = auto                     shift; auto means 1e-8 ||A||_F/||B||_F
max_evs = 48

[selection]
mode = fixed | threshold
tau = 1.0                        threshold scale
evs = 2 3 4 5                    fixed-count sweep list

[solver]
mode = one_level | two_level | coarse_only | compare
tol = 1e-5
max_iter = 1000

[sweep]
contrasts = 1e2 1e4 1e6 1e8      robustness sweeps
grids = 2x2 4x4 8x8              scaling sweeps

[output]
prefix = run                     file name prefix for tables/figures/dumps
vtk = false                      also write legacy-ASCII VTK field dumps
"""

import configparser
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


_KNOWN_KEYS = {
    "experiment": {"kind", "name", "seed"},
    "problem": {"kind", "source", "body_force", "dirichlet", "flux"},
    "mesh": {"nx", "ny", "lx", "ly"},
    "coefficients": {
        "layout", "contrast", "layers", "rectangles", "raster_file", "base", "nu",
    },
    "decomposition": {"px", "py", "overlap_layers", "pou"},
    "eigensolver": {"tol", "subspace", "sigma", "max_evs"},
    "selection": {"mode", "tau", "evs"},
    "solver": {"mode", "tol", "max_iter"},
    "sweep": {"contrasts", "grids"},
    "output": {"prefix", "vtk"},
}

EXPERIMENT_KINDS = ("robustness", "coarse_error", "scaling")


@dataclass
class ExperimentConfig:
    kind: str
    name: str = "run"
    seed: int = 0
    problem: str = "darcy"
    source: float = 1.0
    body_force: tuple = (0.0, 0.0)
    dirichlet: dict = field(default_factory=dict)
    flux: dict = field(default_factory=dict)
    nx: int = 40
    ny: int = 40
    lx: float = 1.0
    ly: float = 1.0
    layout: str = "constant"
    contrast: float = 1.0
    layers: int = 1
    rectangles: list = field(default_factory=list)
    raster_file: str | None = None
    base: float = 1.0
    nu: tuple = (0.3, 0.3)
    px: int = 2
    py: int = 2
    overlap_layers: int = 1
    pou: str = "standard"
    eig_tol: float = 1e-8
    subspace: int | None = None
    sigma: float | None = None
    max_evs: int = 48
    selection_mode: str = "fixed"
    tau: float = 1.0
    evs: list = field(default_factory=lambda: [2])
    solver_mode: str = "two_level"
    solver_tol: float = 1e-5
    max_iter: int = 1000
    contrasts: list = field(default_factory=list)
    grids: list = field(default_factory=list)
    prefix: str | None = None
    vtk: bool = False


def _floats(text):
    return [float(tok) for tok in text.replace(",", " ").split()]


def _parse_side_map(text, section, key):
    out = {}
    for item in text.split():
        if ":" not in item:
            raise ConfigError(f"[{section}] {key}: expected side:value items, got {item!r}")
        side, value = item.split(":", 1)
        vals = [float(tok) for tok in value.split(",")]
        out[side] = vals[0] if len(vals) == 1 else tuple(vals)
    return out


def _parse_rectangles(text):
    rects = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        vals = [float(tok) for tok in part.replace(",", " ").split()]
        if len(vals) != 4:
            raise ConfigError(f"rectangle needs 4 numbers (x0,y0,x1,y1), got {part!r}")
        rects.append(tuple(vals))
    return rects


def _parse_grids(text):
    grids = []
    for tok in text.split():
        if "x" not in tok:
            raise ConfigError(f"grid must look like 4x4, got {tok!r}")
        px, py = tok.lower().split("x")
        grids.append((int(px), int(py)))
    return grids


def load_config(path):
    """Parse and validate one experiment configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read(path)

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    def get(section, key, fallback=None):
        return parser.get(section, key, fallback=fallback)

    kind = get("experiment", "kind")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"[experiment] kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")

    cfg = ExperimentConfig(kind=kind)
    cfg.name = get("experiment", "name", path.stem)
    cfg.seed = int(get("experiment", "seed", "0"))

    cfg.problem = get("problem", "kind", "darcy")
    if cfg.problem not in ("darcy", "elasticity"):
        raise ConfigError(f"[problem] kind must be darcy or elasticity, got {cfg.problem!r}")
    cfg.source = float(get("problem", "source", "1.0"))
    bf = _floats(get("problem", "body_force", "0 0"))
    if len(bf) != 2:
        raise ConfigError("[problem] body_force needs two components")
    cfg.body_force = tuple(bf)
    cfg.dirichlet = _parse_side_map(get("problem", "dirichlet", ""), "problem", "dirichlet")
    cfg.flux = _parse_side_map(get("problem", "flux", ""), "problem", "flux")

    cfg.nx = int(get("mesh", "nx", "40"))
    cfg.ny = int(get("mesh", "ny", "40"))
    cfg.lx = float(get("mesh", "lx", "1.0"))
    cfg.ly = float(get("mesh", "ly", "1.0"))

    cfg.layout = get("coefficients", "layout", "constant")
    if cfg.layout not in ("constant", "layers", "skyscrapers", "channels", "raster"):
        raise ConfigError(f"unknown coefficient layout {cfg.layout!r}")
    cfg.contrast = float(get("coefficients", "contrast", "1.0"))
    cfg.layers = int(get("coefficients", "layers", "1"))
    cfg.rectangles = _parse_rectangles(get("coefficients", "rectangles", ""))
    cfg.base = float(get("coefficients", "base", "1.0"))
    nu = _floats(get("coefficients", "nu", "0.3 0.3"))
    cfg.nu = (nu[0], nu[-1]) if nu else (0.3, 0.3)
    raster = get("coefficients", "raster_file")
    if raster is not None:
        raster_path = (path.parent / raster).resolve()
        if not raster_path.exists():
            raise ConfigError(f"raster file {raster_path} does not exist")
        cfg.raster_file = str(raster_path)
    if cfg.layout == "raster" and cfg.raster_file is None:
        raise ConfigError("layout = raster needs a raster_file")
    if cfg.layout in ("skyscrapers", "channels") and not cfg.rectangles:
        raise ConfigError(f"layout = {cfg.layout} needs a rectangles list")

    cfg.px = int(get("decomposition", "px", "2"))
    cfg.py = int(get("decomposition", "py", "2"))
    cfg.overlap_layers = int(get("decomposition", "overlap_layers", "1"))
    cfg.pou = get("decomposition", "pou", "standard")
    if cfg.pou not in ("standard", "sarkis"):
        raise ConfigError(f"[decomposition] pou must be standard or sarkis, got {cfg.pou!r}")

    cfg.eig_tol = float(get("eigensolver", "tol", "1e-8"))
    subspace = get("eigensolver", "subspace", "auto")
    cfg.subspace = None if subspace == "auto" else int(subspace)
    sigma = get("eigensolver", "sigma", "auto")
    cfg.sigma = None if sigma == "auto" else float(sigma)
    cfg.max_evs = int(get("eigensolver", "max_evs", "48"))

    cfg.selection_mode = get("selection", "mode", "fixed")
    if cfg.selection_mode not in ("fixed", "threshold"):
        raise ConfigError("[selection] mode must be fixed or threshold")
    cfg.tau = float(get("selection", "tau", "1.0"))
    cfg.evs = [int(v) for v in get("selection", "evs", "2").split()]
    if not cfg.evs:
        raise ConfigError("[selection] evs must not be empty")

    cfg.solver_mode = get("solver", "mode", "two_level")
    if cfg.solver_mode not in ("one_level", "two_level", "coarse_only", "compare"):
        raise ConfigError(f"unknown solver mode {cfg.solver_mode!r}")
    cfg.solver_tol = float(get("solver", "tol", "1e-5"))
    cfg.max_iter = int(get("solver", "max_iter", "1000"))

    cfg.contrasts = _floats(get("sweep", "contrasts", ""))
    cfg.grids = _parse_grids(get("sweep", "grids", ""))

    cfg.prefix = get("output", "prefix", cfg.name)
    cfg.vtk = parser.getboolean("output", "vtk", fallback=False)

    if cfg.kind == "robustness" and not cfg.contrasts:
        raise ConfigError("robustness experiments need a [sweep] contrasts list")
    if cfg.kind == "scaling" and not cfg.grids:
        raise ConfigError("scaling experiments need a [sweep] grids list")
    return cfg
