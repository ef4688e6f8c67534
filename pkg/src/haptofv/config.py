"""Run configuration: initial-condition descriptors and the flat ``key = value`` file format.

Example::

    grid.lo = -5
    grid.hi = 5
    grid.n = 512
    params.alpha = 1.0
    ic.kind = mixed
    ic.psi.kind = gaussian_bump
    ic.phi.kind = step_ecm
    scheme.t_end = 1.0

Multi-axis values are comma separated (``grid.n = 64, 64``).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .grid import Grid, read_snapshot
from .model import ModelParams, Quadratic, Window
from .scheme import SchemeConfig


class ConfigError(ValueError):
    pass


def _axis_array(grid: Grid, value) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1:
        v = np.repeat(v, grid.dim)
    if v.size != grid.dim:
        raise ConfigError(f"expected {grid.dim} components, got {v.size}")
    return v


@dataclass(frozen=True)
class Homogeneous:
    psi: float = 0.5
    phi: float = 0.5

    def build(self, grid: Grid):
        return np.full(grid.shape, float(self.psi)), np.full(grid.shape, float(self.phi))


@dataclass(frozen=True)
class GaussianBump:
    center: tuple = (0.0,)
    width: float = 0.5
    amplitude: float = 0.5
    phi_background: float = 0.5
    background: float = 0.0

    def build(self, grid: Grid):
        c = _axis_array(grid, self.center)
        r2 = sum((x - ci) ** 2 for x, ci in zip(grid.centers, c))
        psi = self.background + self.amplitude * np.exp(-r2 / (2.0 * self.width**2))
        return psi, np.full(grid.shape, float(self.phi_background))


@dataclass(frozen=True)
class StepECM:
    """ECM step along the first axis at ``position``; ``width > 0`` smooths it with tanh."""

    phi_left: float = 0.1
    phi_right: float = 0.6
    psi_uniform: float = 0.0
    position: float = 0.0
    width: float = 0.0

    def build(self, grid: Grid):
        x = grid.centers[0] - self.position
        if self.width > 0:
            frac = 0.5 * (1.0 + np.tanh(x / self.width))
        else:
            frac = (x > 0).astype(float)
        phi = self.phi_left + (self.phi_right - self.phi_left) * frac
        return np.full(grid.shape, float(self.psi_uniform)), phi


@dataclass(frozen=True)
class FromFile:
    path: str = ""

    def build(self, grid: Grid):
        try:
            fgrid, psi, phi, _ = read_snapshot(self.path)
        except OSError as exc:
            raise ConfigError(f"cannot read initial data file {self.path}: {exc}") from exc
        if fgrid != grid:
            raise ConfigError(f"grid in {self.path} does not match the configured grid")
        return psi, phi


@dataclass(frozen=True)
class Mixed:
    """Take psi from one descriptor and phi from another."""

    psi_from: "InitialCondition" = field(default_factory=GaussianBump)
    phi_from: "InitialCondition" = field(default_factory=StepECM)

    def build(self, grid: Grid):
        return self.psi_from.build(grid)[0], self.phi_from.build(grid)[1]


InitialCondition = Union[Homogeneous, GaussianBump, StepECM, FromFile, Mixed]

IC_KINDS = {
    "homogeneous": Homogeneous,
    "gaussian_bump": GaussianBump,
    "step_ecm": StepECM,
    "from_file": FromFile,
    "mixed": Mixed,
}


@dataclass
class SweepSettings:
    deltas: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    epsilons: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    mode: str = "smooth_bump"
    perturb_phi: bool = True
    center: tuple = (0.0,)
    width: float = 0.5
    phi_cut: float = 1e-3
    samples: int = 10
    levels: int = 4
    workers: int = 1


@dataclass
class RunConfig:
    grid: Grid = field(default_factory=lambda: Grid.uniform(-5.0, 5.0, 512))
    params: ModelParams = field(default_factory=ModelParams)
    ic: InitialCondition = field(default_factory=Mixed)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    strict_bound: bool = True
    output_times: tuple = ()
    stride: int = 1
    out_dir: Optional[str] = None
    seed: int = 0
    tail_tolerance: float = 1e-10
    sweep: SweepSettings = field(default_factory=SweepSettings)

    def with_params(self, **changes) -> "RunConfig":
        return replace(self, params=self.params.replace(**changes))

    def to_text(self) -> str:
        return dump_config(self)

    @property
    def config_hash(self) -> str:
        # the worker count does not change results, so it is left out of the hash
        canonical = replace(self, sweep=replace(self.sweep, workers=1))
        return hashlib.sha256(canonical.to_text().encode()).hexdigest()[:16]


# parsing


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _scalar(text: str) -> float:
    vals = _floats(text)
    if len(vals) != 1:
        raise ConfigError(f"expected one number, got {text!r}")
    return vals[0]


def parse_lines(text: str) -> dict:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


_IC_FIELDS = {
    Homogeneous: {"psi": _scalar, "phi": _scalar},
    GaussianBump: {"center": _floats, "width": _scalar, "amplitude": _scalar, "phi_background": _scalar,
                   "background": _scalar},
    StepECM: {"phi_left": _scalar, "phi_right": _scalar, "psi_uniform": _scalar, "position": _scalar, "width": _scalar},
    FromFile: {"path": str},
}


def _build_ic(entries: dict, prefix: str, used: set) -> InitialCondition:
    kind_key = f"{prefix}.kind"
    kind = entries.get(kind_key, "mixed" if prefix == "ic" else "gaussian_bump")
    used.add(kind_key)
    if kind not in IC_KINDS:
        raise ConfigError(f"{kind_key}: unknown initial condition {kind!r} (choose from {', '.join(IC_KINDS)})")
    cls = IC_KINDS[kind]
    if cls is Mixed:
        if prefix != "ic":
            raise ConfigError("mixed initial conditions cannot be nested")
        entries.setdefault("ic.psi.kind", "gaussian_bump")
        entries.setdefault("ic.phi.kind", "step_ecm")
        return Mixed(_build_ic(entries, "ic.psi", used), _build_ic(entries, "ic.phi", used))
    kwargs = {}
    for name, conv in _IC_FIELDS[cls].items():
        key = f"{prefix}.{name}"
        if key in entries:
            used.add(key)
            kwargs[name] = conv(entries[key])
    return cls(**kwargs)


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    entries = parse_lines(text)
    used = set()

    def take(key, conv, default):
        if key in entries:
            used.add(key)
            try:
                return conv(entries[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        return default

    try:
        dim = int(take("grid.dim", _scalar, 1))
        lo = take("grid.lo", _floats, (-5.0,))
        hi = take("grid.hi", _floats, (5.0,))
        n = tuple(int(v) for v in take("grid.n", _floats, (512,)))
        grid = Grid(*(v * dim if len(v) == 1 else v for v in (lo, hi, n)))
        if grid.dim != dim:
            raise ConfigError(f"grid.dim = {dim} but grid axes describe {grid.dim} dimensions")

        law_name = take("params.saturation", str, "quadratic")
        if law_name == "quadratic":
            law = Quadratic()
        elif law_name == "window":
            law = Window(take("params.phi_min", _scalar, 0.0), take("params.phi_th", _scalar, 1.0))
        else:
            raise ConfigError(f"params.saturation: unknown law {law_name!r}")
        params = ModelParams(
            alpha=take("params.alpha", _scalar, 1.0),
            D=take("params.D", _scalar, 1.0),
            R0=take("params.R0", _scalar, 1.0),
            gamma=take("params.gamma", _scalar, 1.0),
            delta=take("params.delta", _scalar, 0.0),
            saturation_law=law,
        )
        scheme = SchemeConfig(
            t_end=take("scheme.t_end", _scalar, 1.0),
            cfl_safety=take("scheme.cfl_safety", _scalar, 0.45),
            max_dt=take("scheme.max_dt", _scalar, 1e-2),
            negativity_tolerance=take("scheme.negativity_tolerance", _scalar, 0.0),
            flux_form=take("scheme.flux_form", str, "upwind_hapto_central_diff"),
        )
        ic = _build_ic(entries, "ic", used)
        if isinstance(ic, FromFile) and base_dir is not None and not Path(ic.path).is_absolute():
            ic = FromFile(str(base_dir / ic.path))
        sweep = SweepSettings(
            deltas=take("sweep.deltas", _floats, SweepSettings.deltas),
            epsilons=take("sweep.epsilons", _floats, SweepSettings.epsilons),
            mode=take("sweep.mode", str, SweepSettings.mode),
            perturb_phi=take("sweep.perturb_phi", _bool, True),
            center=take("sweep.center", _floats, SweepSettings.center),
            width=take("sweep.width", _scalar, SweepSettings.width),
            phi_cut=take("sweep.phi_cut", _scalar, SweepSettings.phi_cut),
            samples=int(take("sweep.samples", _scalar, SweepSettings.samples)),
            levels=int(take("sweep.levels", _scalar, SweepSettings.levels)),
            workers=int(take("sweep.workers", _scalar, 1)),
        )
        cfg = RunConfig(
            grid=grid,
            params=params,
            ic=ic,
            scheme=scheme,
            strict_bound=take("ic.strict_bound", _bool, True),
            output_times=take("output.times", _floats, ()),
            stride=int(take("output.stride", _scalar, 1)),
            out_dir=take("output.dir", str, None),
            seed=int(take("seed", _scalar, 0)),
            tail_tolerance=take("output.tail_tolerance", _scalar, 1e-10),
            sweep=sweep,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    unknown = sorted(set(entries) - used)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    if cfg.sweep.mode not in ("smooth_bump", "seeded_noise"):
        raise ConfigError(f"sweep.mode must be smooth_bump or seeded_noise, got {cfg.sweep.mode!r}")
    if cfg.stride < 1:
        raise ConfigError("output.stride must be >= 1")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return parse_config(text, base_dir=path.parent)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dump_ic(ic, prefix: str, out: list):
    kind = next(k for k, c in IC_KINDS.items() if isinstance(ic, c))
    out.append((f"{prefix}.kind", kind))
    if isinstance(ic, Mixed):
        _dump_ic(ic.psi_from, f"{prefix}.psi", out)
        _dump_ic(ic.phi_from, f"{prefix}.phi", out)
        return
    for f in fields(ic):
        out.append((f"{prefix}.{f.name}", getattr(ic, f.name)))


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c))`` reproduces ``c``."""
    p = cfg.params
    items = [
        ("grid.dim", cfg.grid.dim),
        ("grid.lo", cfg.grid.lo),
        ("grid.hi", cfg.grid.hi),
        ("grid.n", cfg.grid.n),
        ("params.alpha", p.alpha),
        ("params.D", p.D),
        ("params.R0", p.R0),
        ("params.gamma", p.gamma),
        ("params.delta", p.delta),
    ]
    if isinstance(p.saturation_law, Window):
        items += [
            ("params.saturation", "window"),
            ("params.phi_min", p.saturation_law.phi_min),
            ("params.phi_th", p.saturation_law.phi_th),
        ]
    else:
        items.append(("params.saturation", "quadratic"))
    _dump_ic(cfg.ic, "ic", items)
    items.append(("ic.strict_bound", cfg.strict_bound))
    s = cfg.scheme
    items += [
        ("scheme.t_end", s.t_end),
        ("scheme.cfl_safety", s.cfl_safety),
        ("scheme.max_dt", s.max_dt),
        ("scheme.negativity_tolerance", s.negativity_tolerance),
        ("scheme.flux_form", s.flux_form),
        ("output.stride", cfg.stride),
        ("output.tail_tolerance", cfg.tail_tolerance),
        ("seed", cfg.seed),
    ]
    if cfg.output_times:
        items.append(("output.times", tuple(float(t) for t in cfg.output_times)))
    if cfg.out_dir is not None:
        items.append(("output.dir", cfg.out_dir))
    w = cfg.sweep
    items += [
        ("sweep.deltas", tuple(w.deltas)),
        ("sweep.epsilons", tuple(w.epsilons)),
        ("sweep.mode", w.mode),
        ("sweep.perturb_phi", w.perturb_phi),
        ("sweep.center", tuple(w.center)),
        ("sweep.width", w.width),
        ("sweep.phi_cut", w.phi_cut),
        ("sweep.samples", w.samples),
        ("sweep.levels", w.levels),
        ("sweep.workers", w.workers),
    ]
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items)
