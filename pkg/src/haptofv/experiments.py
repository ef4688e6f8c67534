"""Batch drivers: single runs, the delta -> 0 sweep, the initial-perturbation sweep and grid refinement."""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .diagnostics import EnvelopeReport, check_envelopes
from .grid import Grid, format_float, write_snapshot
from .model import STRICT_PHI_BOUND, InitialData, ModelInputError, validate_initial_data
from .scheme import SchemeFailure, Trajectory, simulate

log = logging.getLogger(__name__)


class ValidationFailed(ModelInputError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SweepAborted(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def initial_data(cfg: RunConfig) -> InitialData:
    psi0, phi0 = cfg.ic.build(cfg.grid)
    return InitialData(np.asarray(psi0, dtype=float), np.asarray(phi0, dtype=float), cfg.strict_bound)


def validate(cfg: RunConfig, init: InitialData | None = None) -> InitialData:
    init = init if init is not None else initial_data(cfg)
    report = validate_initial_data(init, cfg.grid)
    if not report.ok:
        detail = "; ".join(f"{c.name} failed at cell {c.index} ({c.message})" for c in report.failures)
        raise ValidationFailed(f"initial data violates assumptions: {detail}", report)
    return init


def run_metadata(cfg: RunConfig, extra: dict | None = None) -> dict:
    meta = {"config_hash": cfg.config_hash, "seed": cfg.seed}
    meta.update({f"grid.{k}": v for k, v in cfg.grid.metadata().items()})
    meta["formal"] = int(cfg.params.delta == 0.0)
    meta.update(extra or {})
    return meta


@dataclass
class RunResult:
    config: RunConfig
    trajectory: Trajectory
    envelopes: EnvelopeReport
    tail: float
    tail_ok: bool

    @property
    def final(self):
        return self.trajectory.states[-1]

    @property
    def record(self):
        return self.trajectory.record


def _snapshot_name(t: float) -> str:
    return f"fields_t{t:g}.csv"


def write_run_outputs(result: RunResult, out_dir, status: str = "ok"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    meta = run_metadata(cfg, {"status": status, "tail_max": format_float(result.tail),
                              "tail_tolerance": format_float(cfg.tail_tolerance)})
    for st in result.trajectory.states:
        write_snapshot(out / _snapshot_name(st.time), cfg.grid, st.psi, st.phi, st.time, meta)
    result.record.to_csv(out / "diagnostics.csv", extra_meta={**meta, "stride": cfg.stride})
    result.envelopes.to_csv(out / "envelopes.csv")
    (out / "envelopes.txt").write_text(result.envelopes.to_text())


def run(cfg: RunConfig, out_dir=None, init: InitialData | None = None) -> RunResult:
    """Validate, simulate and audit one configuration; optionally write its CSV outputs.

    On a solver failure the partial diagnostics are written with a failure marker
    before the :class:`SchemeFailure` propagates.
    """
    init = validate(cfg, init)
    try:
        traj = simulate(cfg.grid, cfg.params, init, cfg.scheme, cfg.output_times, cfg.stride)
    except SchemeFailure as exc:
        if out_dir is not None and exc.record is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            exc.record.to_csv(out / "diagnostics.csv", extra_meta=run_metadata(cfg, {"status": f"failed: {exc}"}))
        raise
    report = check_envelopes(traj.record, cfg.params, init)
    tail = float(np.max(traj.record["boundary_tail"]))
    result = RunResult(cfg, traj, report, tail, tail <= cfg.tail_tolerance)
    if not result.tail_ok:
        log.warning("boundary tail %.3g exceeds tolerance %.3g; enlarge the box", tail, cfg.tail_tolerance)
    if out_dir is not None:
        write_run_outputs(result, out_dir)
    return result


# sweeps


@dataclass
class SweepResult:
    """Distance rows between sweep points, empirical orders, and explicit assertion rows."""

    kind: str
    metrics: list
    rows: list = field(default_factory=list)        # (label, point, reference, {metric: value})
    orders: list = field(default_factory=list)      # (label, point, {metric: order})
    assertions: list = field(default_factory=list)  # (name, passed, detail)
    meta: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(p for _, p, _ in self.assertions)

    def assertion(self, name: str) -> bool:
        for n, p, _ in self.assertions:
            if n == name:
                return p
        raise KeyError(name)

    def series(self, metric: str, label: str = "consecutive") -> np.ndarray:
        return np.array([m[metric] for lab, _, _, m in self.rows if lab == label])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k} = {v}\n")
        buf.write(",".join(["kind", "label", "point", "reference", *self.metrics, "passed", "detail"]) + "\n")
        for label, point, ref, vals in self.rows:
            cells = [format_float(vals[m]) if m in vals else "" for m in self.metrics]
            buf.write(",".join(["distance", label, format_float(point), format_float(ref), *cells, "", ""]) + "\n")
        for label, point, vals in self.orders:
            cells = [format_float(vals[m]) if m in vals else "" for m in self.metrics]
            buf.write(",".join(["order", label, format_float(point), "", *cells, "", ""]) + "\n")
        for name, passed, detail in self.assertions:
            buf.write(",".join(["assertion", name, "", "", *([""] * len(self.metrics)), str(int(passed)),
                                detail.replace(",", ";")]) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a or (a == 0.0 and b == 0.0) for a, b in zip(v, v[1:]))


def _orders(distances: list, points: list, metrics: list, log_base=None) -> list:
    """Empirical orders from consecutive distance pairs; needs at least three sweep points."""
    out = []
    if len(distances) < 2:
        return out
    for k in range(len(distances) - 1):
        vals = {}
        for m in metrics:
            a, b = distances[k][m], distances[k + 1][m]
            ratio = (points[k] / points[k + 1]) if log_base is None else log_base
            vals[m] = math.log(a / b) / math.log(ratio) if a > 0 and b > 0 else float("nan")
        out.append(vals)
    return out


def _task(args):
    cfg, init, out_dir = args
    res = run(cfg, out_dir=out_dir, init=init)
    return res


def _run_points(tasks: list, workers: int) -> list:
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_task, tasks))
    return [_task(t) for t in tasks]


def _point_dir(out_dir, k: int):
    return None if out_dir is None else Path(out_dir) / f"point_{k:02d}"


def _field_distances(grid: Grid, a, b) -> dict:
    dpsi = a.psi - b.psi
    dphi = a.phi - b.phi
    dmix = np.sqrt(a.phi) * a.psi - np.sqrt(b.phi) * b.psi
    return {
        "L1_psi": grid.lp_norm(dpsi, 1),
        "L2_psi": grid.lp_norm(dpsi, 2),
        "L3_psi": grid.lp_norm(dpsi, 3),
        "L1_phi": grid.lp_norm(dphi, 1),
        "L2_phi": grid.lp_norm(dphi, 2),
        "L1_sqrtphi_psi": grid.lp_norm(dmix, 1),
        "L2_sqrtphi_psi": grid.lp_norm(dmix, 2),
    }


DELTA_METRICS = ["L1_psi", "L2_psi", "L3_psi", "L1_phi", "L2_phi", "L1_sqrtphi_psi", "L2_sqrtphi_psi"]


def _sweep_meta(cfg: RunConfig, kind: str) -> dict:
    meta = run_metadata(cfg, {"sweep": kind})
    meta["t_end"] = format_float(cfg.scheme.t_end)
    return meta


def delta_sweep(base: RunConfig, deltas=None, out_dir=None) -> SweepResult:
    """Run the regularised problem for a descending list of deltas plus delta = 0.

    Distances between consecutive deltas at t_end test the Cauchy property; the
    delta -> 0 field is extrapolated linearly from the two smallest deltas.
    """
    deltas = [float(d) for d in (deltas if deltas is not None else base.sweep.deltas)]
    if len(deltas) < 3:
        raise ValueError("delta_sweep needs at least three deltas")
    if any(d <= 0 for d in deltas) or any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly descending")
    init = validate(base)
    points = deltas + [0.0]
    tasks = [(base.with_params(delta=d), init, _point_dir(out_dir, k)) for k, d in enumerate(points)]
    result = SweepResult("delta", DELTA_METRICS, meta=_sweep_meta(base, "delta"))
    try:
        runs = _run_points(tasks, base.sweep.workers)
    except (SchemeFailure, ValidationFailed) as exc:
        result.assertions.append(("all_runs_completed", False, str(exc)))
        if out_dir is not None:
            result.meta["status"] = "aborted"
            result.to_csv(Path(out_dir) / "sweep.csv")
        raise SweepAborted(f"delta sweep aborted: {exc}", result) from exc
    finals = [r.final for r in runs]
    grid = base.grid

    dists = []
    for k in range(len(deltas) - 1):
        d = _field_distances(grid, finals[k], finals[k + 1])
        dists.append(d)
        result.rows.append(("consecutive", deltas[k + 1], deltas[k], d))
    for vals, k in zip(_orders(dists, deltas, DELTA_METRICS), range(len(deltas))):
        result.orders.append(("order_in_delta", deltas[k + 1], vals))

    zero = finals[-1]
    to_zero = [_field_distances(grid, finals[k], zero) for k in range(len(deltas))]
    for d, vals in zip(deltas, to_zero):
        result.rows.append(("to_delta0", d, 0.0, vals))

    d1, d2 = deltas[-2], deltas[-1]
    s1, s2 = finals[len(deltas) - 2], finals[len(deltas) - 1]
    w = d2 / (d1 - d2)
    psi_ext = np.maximum(s2.psi + w * (s2.psi - s1.psi), 0.0)
    phi_ext = np.clip(s2.phi + w * (s2.phi - s1.phi), 0.0, 1.0)
    ext = replace(s2, psi=psi_ext, phi=phi_ext)
    result.extras["extrapolated"] = ext
    result.extras["finals"] = finals
    result.rows.append(("extrapolated_to_delta0", 0.0, 0.0, _field_distances(grid, ext, zero)))

    for metric in ("L1_psi", "L1_phi"):
        series = [d[metric] for d in dists]
        result.assertions.append((f"cauchy_{metric}", _strictly_decreasing(series),
                                  " > ".join(f"{v:.3e}" for v in series)))
    near, far = to_zero[-1]["L1_psi"], to_zero[0]["L1_psi"]
    result.assertions.append(("delta0_closer_to_smallest_delta", near < far or near == far == 0.0,
                              f"d(0;{deltas[-1]:g})={near:.3e} vs d(0;{deltas[0]:g})={far:.3e}"))
    if out_dir is not None:
        write_snapshot(Path(out_dir) / "extrapolated_delta0.csv", grid, ext.psi, ext.phi, ext.time,
                       {"sweep": "delta", "config_hash": base.config_hash})
        result.to_csv(Path(out_dir) / "sweep.csv")
    return result


# perturbation sweep

PERTURB_METRICS = [
    "L1_phi", "L2_phi", "L1_sqrtphi_psi", "L2_sqrtphi_psi",
    "L1_psi_support", "L2_psi_support", "L1_psi", "L2_psi", "L3_psi",
    "weak_1", "weak_2", "weak_3", "weak_4", "weak_5",
]


def _test_functions(grid: Grid) -> list:
    x = grid.centers[0]
    r2 = grid.radius_sq
    half = 0.5 * (grid.hi[0] - grid.lo[0])
    return [
        np.ones(grid.shape),
        x / half,
        (x / half) ** 2,
        np.exp(-r2),
        np.exp(-sum((c - 1.0) ** 2 for c in grid.centers)),
    ]


def perturbation_profile(cfg: RunConfig, mode: str):
    """Unit-size perturbations (for psi, for phi), localised around ``sweep.center``."""
    grid = cfg.grid
    w = cfg.sweep
    c = np.atleast_1d(np.asarray(w.center, dtype=float))
    if c.size == 1:
        c = np.repeat(c, grid.dim)
    r2 = sum((x - ci) ** 2 for x, ci in zip(grid.centers, c))
    envelope = np.exp(-r2 / (2.0 * w.width**2))
    if mode == "smooth_bump":
        return envelope, -envelope
    if mode == "seeded_noise":
        rng = np.random.default_rng(cfg.seed)
        n_psi = rng.uniform(-1.0, 1.0, grid.shape)
        n_phi = rng.uniform(-1.0, 1.0, grid.shape)
        return envelope * n_psi, envelope * n_phi
    raise ValueError(f"unknown perturbation mode {mode!r}")


def perturbed_initial_data(cfg: RunConfig, eps: float, mode: str) -> InitialData:
    base = initial_data(cfg)
    b_psi, b_phi = perturbation_profile(cfg, mode)
    psi = np.maximum(base.psi0 + eps * b_psi, 0.0)
    phi = base.phi0
    if cfg.sweep.perturb_phi:
        upper = STRICT_PHI_BOUND if cfg.strict_bound else 1.0
        phi = np.clip(base.phi0 + eps * b_phi, 0.0, upper)
    return InitialData(psi, phi, cfg.strict_bound)


def _space_time_distances(grid: Grid, ref: Trajectory, run_: Trajectory, phi_cut: float, tests: list) -> dict:
    times = np.array([s.time for s in ref.states])
    T = times[-1]
    acc = {m: [] for m in PERTURB_METRICS}
    for a, b in zip(run_.states, ref.states):
        dpsi = a.psi - b.psi
        dmix = np.sqrt(a.phi) * a.psi - np.sqrt(b.phi) * b.psi
        dphi = a.phi - b.phi
        support = b.phi > phi_cut
        acc["L1_phi"].append(grid.integrate(np.abs(dphi)))
        acc["L2_phi"].append(grid.integrate(dphi**2))
        acc["L1_sqrtphi_psi"].append(grid.integrate(np.abs(dmix)))
        acc["L2_sqrtphi_psi"].append(grid.integrate(dmix**2))
        acc["L1_psi_support"].append(grid.integrate(np.abs(dpsi) * support))
        acc["L2_psi_support"].append(grid.integrate(dpsi**2 * support))
        acc["L1_psi"].append(grid.integrate(np.abs(dpsi)))
        acc["L2_psi"].append(grid.integrate(dpsi**2))
        acc["L3_psi"].append(grid.integrate(np.abs(dpsi) ** 3))
        decay = 1.0 - a.time / T if T > 0 else 1.0
        for k, chi in enumerate(tests, 1):
            acc[f"weak_{k}"].append(decay * grid.integrate(chi * dpsi))
    out = {}
    for m, vals in acc.items():
        vals = np.array(vals)
        total = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times))) if len(times) > 1 else 0.0
        if m.startswith("weak"):
            out[m] = abs(total)
        else:
            p = 2.0 if m.startswith("L2") else 3.0 if m.startswith("L3") else 1.0
            out[m] = max(total, 0.0) ** (1.0 / p)
    return out


def perturbation_sweep(base: RunConfig, epsilons=None, mode: str | None = None, out_dir=None) -> SweepResult:
    """Compare runs from perturbed initial data against the unperturbed run.

    Distances are space-time norms over [0, t_end] from ``sweep.samples`` evenly
    spaced snapshots. Convergence of phi, of sqrt(phi) psi and of psi on
    {phi > phi_cut} is asserted; global psi convergence is asserted only when
    phi0 >= 0.1 everywhere.
    """
    mode = mode or base.sweep.mode
    epsilons = [float(e) for e in (epsilons if epsilons is not None else base.sweep.epsilons)]
    if any(e < 0 for e in epsilons) or any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError("epsilons must be non-negative and strictly descending")
    T = base.scheme.t_end
    n_samples = max(int(base.sweep.samples), 1)
    times = tuple(T * (k + 1) / n_samples for k in range(n_samples - 1))
    cfg = replace(base, output_times=times)

    ref_init = validate(cfg)
    inits = []
    for e in epsilons:
        init = perturbed_initial_data(cfg, e, mode)
        try:
            inits.append(validate(cfg, init))
        except ValidationFailed as exc:
            names = ", ".join(c.name for c in exc.report.failures)
            raise ValidationFailed(f"perturbed data for eps={e:g} violates {names}", exc.report) from exc

    result = SweepResult("perturbation", PERTURB_METRICS, meta={**_sweep_meta(cfg, "perturbation"), "mode": mode})
    tasks = [(cfg, ref_init, _point_dir(out_dir, 0))]
    tasks += [(cfg, init, _point_dir(out_dir, k + 1)) for k, init in enumerate(inits)]
    try:
        runs = _run_points(tasks, base.sweep.workers)
    except SchemeFailure as exc:
        result.assertions.append(("all_runs_completed", False, str(exc)))
        if out_dir is not None:
            result.meta["status"] = "aborted"
            result.to_csv(Path(out_dir) / "sweep.csv")
        raise SweepAborted(f"perturbation sweep aborted: {exc}", result) from exc

    ref = runs[0].trajectory
    tests = _test_functions(cfg.grid)
    dists = []
    for e, r in zip(epsilons, runs[1:]):
        d = _space_time_distances(cfg.grid, ref, r.trajectory, cfg.sweep.phi_cut, tests)
        dists.append(d)
        result.rows.append(("to_reference", e, 0.0, d))
    positive = [(e, d) for e, d in zip(epsilons, dists) if e > 0]
    if len(positive) >= 3:
        for vals, (e, _) in zip(_orders([d for _, d in positive], [e for e, _ in positive], PERTURB_METRICS),
                                positive[1:]):
            result.orders.append(("order_in_eps", e, vals))

    strictly_positive = float(np.min(ref_init.phi0)) >= 0.1
    asserted = ["L1_phi", "L2_phi", "L1_sqrtphi_psi", "L2_sqrtphi_psi", "L1_psi_support"]
    if strictly_positive:
        asserted += ["L1_psi", "L2_psi"]
    for metric in asserted:
        series = [d[metric] for _, d in positive]
        result.assertions.append((f"decreasing_{metric}", _strictly_decreasing(series),
                                  " > ".join(f"{v:.3e}" for v in series)))
    if positive:
        e_min, d_min = positive[-1]
        for metric in ("L1_phi", "L1_sqrtphi_psi"):
            result.assertions.append((f"small_{metric}", d_min[metric] <= 10.0 * e_min,
                                      f"{d_min[metric]:.3e} <= 10*{e_min:g}"))
    for e, d in zip(epsilons, dists):
        if e == 0.0:
            result.assertions.append(("zero_eps_zero_distance", all(v == 0.0 for v in d.values()), ""))
    result.meta["phi0_min"] = format_float(float(np.min(ref_init.phi0)))
    result.extras["runs"] = runs
    if out_dir is not None:
        result.to_csv(Path(out_dir) / "sweep.csv")
    return result


# refinement

REFINE_METRICS = ["h", "L1_psi_vs_finest", "L1_phi_vs_finest", "L1_psi_consecutive", "L1_phi_consecutive"]


def refinement_study(base: RunConfig, levels: int | None = None, out_dir=None) -> SweepResult:
    """Halve h (and max_dt) per level and measure self-convergence of the t_end fields.

    Errors against the finest level and differences between consecutive levels use
    cell averaging onto the coarser grid; orders come from consecutive differences.
    """
    levels = int(levels if levels is not None else base.sweep.levels)
    if levels < 3:
        raise ValueError("refinement_study needs at least three levels")
    cfgs = []
    grid = base.grid
    for k in range(levels):
        scheme = replace(base.scheme, max_dt=base.scheme.max_dt / 2**k)
        cfgs.append(replace(base, grid=grid, scheme=scheme, output_times=()))
        grid = grid.refine(2)
    tasks = [(c, None, _point_dir(out_dir, k)) for k, c in enumerate(cfgs)]
    result = SweepResult("refinement", REFINE_METRICS, meta=_sweep_meta(base, "refinement"))
    try:
        runs = _run_points(tasks, base.sweep.workers)
    except (SchemeFailure, ValidationFailed) as exc:
        result.assertions.append(("all_runs_completed", False, str(exc)))
        if out_dir is not None:
            result.meta["status"] = "aborted"
            result.to_csv(Path(out_dir) / "sweep.csv")
        raise SweepAborted(f"refinement study aborted: {exc}", result) from exc
    finals = [r.final for r in runs]

    def restrict_to(level, src_level, field_):
        g = cfgs[src_level].grid
        arr = field_
        for _ in range(src_level - level):
            arr = g.restrict(arr, 2)
            g = Grid(g.lo, g.hi, tuple(n // 2 for n in g.n))
        return arr

    fine = len(finals) - 1
    consecutive = []
    for k in range(levels - 1):
        g = cfgs[k].grid
        vals = {
            "h": g.spacing[0],
            "L1_psi_vs_finest": g.lp_norm(finals[k].psi - restrict_to(k, fine, finals[fine].psi), 1),
            "L1_phi_vs_finest": g.lp_norm(finals[k].phi - restrict_to(k, fine, finals[fine].phi), 1),
            "L1_psi_consecutive": g.lp_norm(finals[k].psi - restrict_to(k, k + 1, finals[k + 1].psi), 1),
            "L1_phi_consecutive": g.lp_norm(finals[k].phi - restrict_to(k, k + 1, finals[k + 1].phi), 1),
        }
        consecutive.append(vals)
        result.rows.append((f"level_{k}", float(g.n[0]), float(cfgs[fine].grid.n[0]), vals))
    for k, vals in enumerate(_orders(consecutive, None, ["L1_psi_consecutive", "L1_phi_consecutive"], log_base=2.0)):
        result.orders.append(("observed_order", float(cfgs[k + 1].grid.n[0]), vals))
    result.assertions.append(("errors_decrease_with_refinement",
                              _strictly_decreasing([v["L1_psi_consecutive"] for v in consecutive]),
                              " > ".join(f"{v['L1_psi_consecutive']:.3e}" for v in consecutive)))
    result.extras["finals"] = finals
    if out_dir is not None:
        result.to_csv(Path(out_dir) / "sweep.csv")
    return result


def observed_order(result: SweepResult, metric: str = "L1_psi_consecutive") -> float:
    """Last observed self-convergence order of a refinement study."""
    vals = [v[metric] for _, _, v in result.orders if not math.isnan(v.get(metric, float("nan")))]
    return vals[-1] if vals else float("nan")
