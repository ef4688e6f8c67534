"""Discrete functionals controlled by the a priori estimates, and envelope checks over a run."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import format_float, read_comment_meta
from .model import InitialData, ModelParams, Quadratic, STRICT_PHI_BOUND, Window

ENV_TOL = 1e-8

# column name -> estimate tag written in the CSV header
COLUMNS = {
    "time": "-",
    "mass": "est_psi_l1_l2",
    "l2": "est_psi_l1_l2",
    "l3": "est_psi_l3",
    "second_moment": "est_second_moment",
    "entropy_abs": "est_entropy",
    "energy": "est_energy",
    "dissipation": "est_gradient",
    "energy_dissipation": "est_gradient",
    "grad_sqrt_phi": "est_grad_sqrt_phi",
    "w_grad_psi": "est_weighted_grad_psi",
    "phi_grad_psi": "est_psi_compactness",
    "psi_grad_sqrt_phi": "est_psi_grad_sqrt_phi",
    "psi_grad_sqrt_phi_32": "est_psi_compactness",
    "full_w_grad_psi": "est_psi_weighted_grad_psi",
    "delta_dissipation": "est_delta_dissipation",
    "dt_sqrt_phi_l3": "est_dt_sqrt_phi",
    "phi_max": "est_phi_bounds",
    "phi_min": "est_phi_bounds",
    "phi_mass": "est_phi_bounds",
    "phi_increase": "est_phi_bounds",
    "psi_min": "-",
    "boundary_tail": "-",
    "floored_cells": "-",
}

# functionals whose time integral over [0, T] must be finite
TIME_INTEGRATED = {
    "l3": "est_psi_l3",
    "dissipation": "est_gradient",
    "w_grad_psi": "est_weighted_grad_psi",
    "psi_grad_sqrt_phi": "est_psi_grad_sqrt_phi",
    "full_w_grad_psi": "est_psi_weighted_grad_psi",
    "phi_grad_psi": "est_psi_compactness (L2 part)",
    "psi_grad_sqrt_phi_32": "est_psi_compactness (L3/2 part)",
    "delta_dissipation": "est_delta_dissipation",
    "dt_sqrt_phi_l3": "est_dt_sqrt_phi",
}


class DiagnosticsError(RuntimeError):
    pass


def _xlogx_abs(psi: np.ndarray) -> np.ndarray:
    out = np.zeros_like(psi)
    pos = psi > 0
    out[pos] = psi[pos] * np.abs(np.log(psi[pos]))
    return out


def _law_saturation(phi: np.ndarray, params: ModelParams) -> np.ndarray:
    law = params.saturation_law
    if isinstance(law, Quadratic):
        return params.delta + phi * (1.0 - phi)
    width = law.phi_th - law.phi_min
    return params.delta + 4.0 * np.maximum((phi - law.phi_min) * (law.phi_th - phi), 0.0) / width**2


def evaluate(state, params: ModelParams) -> dict:
    """All functionals of one state, as a dict keyed like :data:`COLUMNS`."""
    grid = state.grid
    psi = np.asarray(state.psi, dtype=float)
    phi = np.asarray(state.phi, dtype=float)
    alpha, D = params.alpha, params.D
    sphi = np.sqrt(np.maximum(phi, 0.0))
    logistic = phi * (1.0 - phi)

    g_psi = grid.face_gradient(psi)
    g_phi = grid.face_gradient(phi)
    g_sphi = grid.face_gradient(sphi)
    mix = [alpha * a - D * b for a, b in zip(g_phi, g_psi)]
    avg = grid.face_average

    def weighted(w, grads, power=2):
        return grid.face_integral([wa * np.abs(g) ** power for wa, g in zip(avg(w), grads)])

    row = {
        "time": float(state.time),
        "mass": grid.integrate(psi),
        "l2": grid.integrate(psi**2),
        "l3": grid.integrate(psi**3),
        "second_moment": grid.second_moment(psi),
        "entropy_abs": grid.integrate(_xlogx_abs(psi)),
        "energy": grid.integrate(psi * (0.5 * D * psi - alpha * phi)),
        "dissipation": weighted(psi * logistic, mix),
        "energy_dissipation": weighted(psi * _law_saturation(phi, params), mix),
        "grad_sqrt_phi": grid.face_integral([g * g for g in g_sphi]),
        "w_grad_psi": weighted(logistic, g_psi),
        "phi_grad_psi": weighted(phi, g_psi),
        "psi_grad_sqrt_phi": weighted(psi, g_sphi),
        "psi_grad_sqrt_phi_32": grid.face_integral(
            [np.abs(p * g) ** 1.5 for p, g in zip(avg(psi), g_sphi)]
        ),
        "full_w_grad_psi": weighted(psi * logistic, g_psi),
        "delta_dissipation": params.delta * weighted(psi, mix),
        "dt_sqrt_phi_l3": grid.integrate(np.abs(0.5 * params.gamma * sphi * psi) ** 3),
        "phi_max": float(np.max(phi)),
        "phi_min": float(np.min(phi)),
        "phi_mass": grid.integrate(phi),
        "boundary_tail": float(np.max(np.abs(psi[grid.boundary_mask()]))),
        "floored_cells": float(state.floored),
    }
    for k, v in row.items():
        if not math.isfinite(v):
            raise DiagnosticsError(f"functional {k} is not finite at t={state.time}: {v}")
    return row


def params_meta(params: ModelParams) -> dict:
    law = params.saturation_law
    meta = {
        "params.alpha": params.alpha,
        "params.D": params.D,
        "params.R0": params.R0,
        "params.gamma": params.gamma,
        "params.delta": params.delta,
        "params.saturation": "window" if isinstance(law, Window) else "quadratic",
    }
    if isinstance(law, Window):
        meta["params.phi_min"] = law.phi_min
        meta["params.phi_th"] = law.phi_th
    return meta


def params_from_meta(meta: dict) -> ModelParams:
    law = Quadratic()
    if meta.get("params.saturation", "quadratic") == "window":
        law = Window(float(meta["params.phi_min"]), float(meta["params.phi_th"]))
    return ModelParams(
        alpha=float(meta["params.alpha"]),
        D=float(meta["params.D"]),
        R0=float(meta["params.R0"]),
        gamma=float(meta["params.gamma"]),
        delta=float(meta["params.delta"]),
        saturation_law=law,
    )


@dataclass
class DiagnosticsRecord:
    """Time series of functionals, one row per sample."""

    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @classmethod
    def for_run(cls, params: ModelParams, init: InitialData) -> "DiagnosticsRecord":
        meta = dict(params_meta(params))
        meta["init.phi0_max"] = float(np.max(init.phi0))
        meta["init.strict_bound"] = int(bool(init.strict_bound))
        return cls(rows=[], meta=meta)

    def append(self, row: dict, psi_min: float = float("nan"), phi_increase: float = float("nan")):
        row = dict(row)
        row["psi_min"] = float(psi_min)
        row["phi_increase"] = float(phi_increase)
        self.rows.append({k: row.get(k, float("nan")) for k in COLUMNS})

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def times(self) -> np.ndarray:
        return self["time"]

    def to_csv(self, path=None, extra_meta: dict | None = None) -> str:
        buf = io.StringIO()
        for k, v in {**self.meta, **(extra_meta or {})}.items():
            buf.write(f"# {k} = {v}\n")
        buf.write("# tags: " + ",".join(COLUMNS.values()) + "\n")
        buf.write(",".join(COLUMNS) + "\n")
        for r in self.rows:
            buf.write(",".join(format_float(r[k]) for k in COLUMNS) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "DiagnosticsRecord":
        with open(path) as fh:
            lines = fh.read().splitlines()
        meta = read_comment_meta(lines)
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        if not body:
            raise ValueError(f"{path}: no header row")
        header = body[0].split(",")
        rec = cls(rows=[], meta=meta)
        for ln in body[1:]:
            vals = [float(v) for v in ln.split(",")]
            row = dict(zip(header, vals))
            rec.rows.append({k: row.get(k, float("nan")) for k in COLUMNS})
        return rec


@dataclass
class EnvelopeCheck:
    name: str
    tag: str
    passed: bool
    worst_margin: float
    worst_time: float
    value: float = float("nan")
    note: str = ""


@dataclass
class EnvelopeReport:
    checks: list = field(default_factory=list)
    samples: int = 0

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> EnvelopeCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"# samples = {self.samples}", f"{'check':<36} {'tag':<32} {'status':<6} {'worst_margin':>14} {'at_time':>12}  value"]
        for c in self.checks:
            lines.append(
                f"{c.name:<36} {c.tag:<32} {'pass' if c.passed else 'FAIL':<6} "
                f"{c.worst_margin:>14.6g} {c.worst_time:>12.6g}  {c.value:.6g} {c.note}".rstrip()
            )
        return "\n".join(lines) + "\n"

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# samples = {self.samples}\n")
        buf.write("name,tag,passed,worst_margin,worst_time,value,note\n")
        for c in self.checks:
            buf.write(
                f"{c.name},{c.tag},{int(c.passed)},{format_float(c.worst_margin)},"
                f"{format_float(c.worst_time)},{format_float(c.value)},{c.note}\n"
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _trapezoid(y: np.ndarray, t: np.ndarray) -> float:
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def gronwall_envelope(t: np.ndarray, y0: float, rate: float, forcing: np.ndarray) -> np.ndarray:
    """Upper bound e^{rate t} y0 + int_0^t e^{rate (t-s)} forcing(s) ds, forcing sampled at t.

    The integral uses the trapezoid rule on e^{-rate s} forcing(s).
    """
    weighted = np.exp(-rate * t) * forcing
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (weighted[1:] + weighted[:-1]) * np.diff(t))])
    return np.exp(rate * t) * (y0 + cum)


def _upper_check(name, tag, value, bound, t, tol=ENV_TOL, note=""):
    """value <= bound * (1 + tol) (bound may be negative; tolerance scales with |bound|)."""
    slack = bound - value
    scale = np.maximum(np.abs(bound), np.finfo(float).tiny)
    margin = np.where((slack == 0.0), 0.0, slack / scale)
    ok = value <= bound + tol * np.abs(bound)
    start = 1 if len(margin) > 1 else 0
    i = start + int(np.argmin(margin[start:])) if len(margin) else 0
    return EnvelopeCheck(name, tag, bool(np.all(ok)), float(margin[i]) if len(margin) else 0.0,
                         float(t[i]) if len(t) else 0.0, float(np.max(value)) if len(value) else 0.0, note)


def check_envelopes(record: DiagnosticsRecord, params: ModelParams, init: InitialData | None = None) -> EnvelopeReport:
    """Audit a diagnostics record against the bounds that admit computable envelopes.

    Explicit Gronwall envelopes are checked for mass, energy, second moment and
    the gradient of sqrt(phi); the remaining estimates are reported as finite
    suprema or finite time integrals.
    """
    t = record.times
    report = EnvelopeReport(samples=len(t))
    if len(t) == 0:
        return report
    if init is not None:
        phi0_max = float(np.max(init.phi0))
        strict = bool(init.strict_bound)
    else:
        phi0_max = float(record.meta.get("init.phi0_max", record["phi_max"][0]))
        strict = bool(int(float(record.meta.get("init.strict_bound", 0))))
    R0, alpha, D, gamma, delta = params.R0, params.alpha, params.D, params.gamma, params.delta
    add = report.checks.append

    mass = record["mass"]
    mass_env = mass[0] * np.exp(R0 * t)
    add(_upper_check("mass_gronwall", "est_mass_growth", mass, mass_env, t))

    # phi: bounds and monotone decay
    phi_max = record["phi_max"]
    add(_upper_check("phi_below_initial", "est_phi_bounds", phi_max, np.full_like(t, phi0_max), t))
    phi_min = record["phi_min"]
    add(EnvelopeCheck("phi_nonnegative", "est_phi_bounds", bool(np.all(phi_min >= 0)), float(np.min(phi_min)),
                      float(t[int(np.argmin(phi_min))]), float(np.min(phi_min))))
    inc = np.nan_to_num(record["phi_increase"], nan=0.0)
    add(EnvelopeCheck("phi_pointwise_nonincreasing", "est_phi_bounds", bool(np.all(inc <= 0)),
                      float(-np.max(inc)) + 0.0, float(t[int(np.argmax(inc))]), float(np.max(inc))))
    pm = record["phi_mass"]
    dpm = np.diff(pm)
    add(EnvelopeCheck("phi_mass_nonincreasing", "est_phi_bounds", bool(np.all(dpm <= ENV_TOL * np.abs(pm[:-1]))),
                      float(-np.max(dpm)) if len(dpm) else 0.0, float(t[1 + int(np.argmax(dpm))]) if len(dpm) else 0.0,
                      float(pm[-1])))
    if strict:
        add(_upper_check("phi_two_thirds_propagated", "phi_two_thirds", phi_max, np.full_like(t, STRICT_PHI_BOUND), t))
    psi_min = np.nan_to_num(record["psi_min"], nan=0.0)
    add(EnvelopeCheck("psi_nonnegative", "positivity", bool(np.all(psi_min >= 0)), float(np.min(psi_min)),
                      float(t[int(np.argmin(psi_min))]), float(np.min(psi_min))))

    # energy: E' <= C2 E + alpha (C2 + R0) M with M <= M0 e^{R0 t}
    c2 = params.energy_rate
    energy = record["energy"]
    k = alpha * (c2 + R0) * mass[0]
    energy_env = np.exp(c2 * t) * energy[0] + k * (np.exp(c2 * t) - np.exp(R0 * t)) / (c2 - R0)
    add(_upper_check("energy_gronwall", "est_energy", energy, energy_env, t, note=f"C2={c2:.6g}"))

    # second moment: m' <= (sup S_delta + R0) m + (1/2) int psi S_delta |alpha grad phi - D grad psi|^2
    m2 = record["second_moment"]
    rate = 1.0 + delta + R0
    m2_env = gronwall_envelope(t, m2[0], rate, 0.5 * record["energy_dissipation"])
    add(_upper_check("second_moment_gronwall", "est_second_moment", m2, m2_env, t))

    # |grad sqrt phi|^2: G' <= (gamma/2) G + (gamma/2) int phi |grad psi|^2
    g = record["grad_sqrt_phi"]
    g_env = gronwall_envelope(t, g[0], 0.5 * gamma, 0.5 * gamma * record["phi_grad_psi"])
    add(_upper_check("grad_sqrt_phi_gronwall", "est_grad_sqrt_phi", g, g_env, t))

    for name, tag in (("l2", "est_psi_l1_l2"), ("entropy_abs", "est_entropy")):
        v = record[name]
        ok = bool(np.all(np.isfinite(v)))
        add(EnvelopeCheck(f"{name}_sup_finite", tag, ok, 0.0, float(t[int(np.argmax(v))]), float(np.max(v))))

    for name, tag in TIME_INTEGRATED.items():
        total = _trapezoid(record[name], t)
        ok = bool(np.isfinite(total)) and total >= 0
        add(EnvelopeCheck(f"{name}_time_integral", tag, ok, 0.0, float(t[-1]), total))
    return report
