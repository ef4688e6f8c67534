"""Coefficient laws for the haptotaxis model and checks on parameters and initial data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .grid import Grid

STRICT_PHI_BOUND = 2.0 / 3.0


class ModelInputError(ValueError):
    """Raised when parameters or pointwise inputs leave their admissible domain."""


@dataclass(frozen=True)
class Quadratic:
    """Motility modulation S(phi) = phi (1 - phi)."""

    code = 0

    @property
    def sup(self) -> float:
        return 0.25


@dataclass(frozen=True)
class Window:
    """Windowed motility modulation, vanishing outside (phi_min, phi_th) and equal to 1 midway."""

    phi_min: float = 0.0
    phi_th: float = 1.0

    code = 1

    def __post_init__(self):
        if not (0.0 <= self.phi_min < 1.0):
            raise ModelInputError(f"phi_min must lie in [0, 1), got {self.phi_min}")
        if not (self.phi_min < self.phi_th <= 1.0):
            raise ModelInputError(
                f"phi_th must lie in (phi_min, 1], got phi_min={self.phi_min}, phi_th={self.phi_th}"
            )

    @property
    def sup(self) -> float:
        return 1.0


SaturationLaw = Union[Quadratic, Window]


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 1.0
    D: float = 1.0
    R0: float = 1.0
    gamma: float = 1.0
    delta: float = 0.0
    saturation_law: SaturationLaw = field(default_factory=Quadratic)

    def __post_init__(self):
        for name in ("alpha", "D", "gamma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ModelInputError(f"{name} must be a finite positive number, got {value}")
        for name in ("R0", "delta"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ModelInputError(f"{name} must be a finite non-negative number, got {value}")
        if not isinstance(self.saturation_law, (Quadratic, Window)):
            raise ModelInputError(f"unknown saturation law {self.saturation_law!r}")

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("alpha", "D", "R0", "gamma", "delta", "saturation_law")}
        values.update(changes)
        return ModelParams(**values)

    @property
    def energy_rate(self) -> float:
        """Growth rate (2/D)(D R0 + alpha R0 + alpha gamma) of the energy Gronwall inequality."""
        return 2.0 / self.D * (self.D * self.R0 + self.alpha * self.R0 + self.alpha * self.gamma)

    def as_coefficients(self) -> np.ndarray:
        """Packed float vector consumed by the compiled kernels."""
        law = self.saturation_law
        phi_min, phi_th = (law.phi_min, law.phi_th) if isinstance(law, Window) else (0.0, 1.0)
        return np.array(
            [self.alpha, self.D, self.R0, self.gamma, self.delta, phi_min, phi_th, float(law.code)],
            dtype=np.float64,
        )


def _check_phi(phi):
    phi = np.asarray(phi, dtype=float)
    bad = ~((phi >= 0.0) & (phi <= 1.0))
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), phi.shape) if phi.ndim else ()
        raise ModelInputError(f"phi outside [0, 1] at index {idx}: {phi[idx] if phi.ndim else phi}")
    return phi


def saturation(phi, params: ModelParams):
    """Evaluate S_delta(phi) = delta + S(phi) for scalar or array phi in [0, 1]."""
    phi = _check_phi(phi)
    law = params.saturation_law
    if isinstance(law, Quadratic):
        s = phi * (1.0 - phi)
    else:
        width = law.phi_th - law.phi_min
        s = 4.0 * np.maximum((phi - law.phi_min) * (law.phi_th - phi), 0.0) / (width * width)
    out = params.delta + s
    return float(out) if out.ndim == 0 else out


def reaction_rate(psi, phi, params: ModelParams):
    """Net proliferation rate R0 (1 - phi - psi)."""
    psi = np.asarray(psi, dtype=float)
    if np.any(~(psi >= 0.0)):
        raise ModelInputError("psi must be non-negative")
    phi = _check_phi(phi)
    out = params.R0 * (1.0 - phi - psi)
    return float(out) if out.ndim == 0 else out


@dataclass
class InitialData:
    psi0: np.ndarray
    phi0: np.ndarray
    strict_bound: bool = True


@dataclass
class Check:
    name: str
    passed: bool
    index: Optional[tuple] = None
    message: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    mass: float = float("nan")
    second_moment: float = float("nan")
    l2: float = float("nan")
    grad_sqrt_phi: float = float("nan")

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def raise_if_failed(self):
        if not self.ok:
            lines = "; ".join(f"{c.name} at {c.index}: {c.message}" for c in self.failures)
            raise ModelInputError(f"initial data rejected: {lines}")
        return self


def _first_bad(mask: np.ndarray):
    if not np.any(mask):
        return None
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(mask)), mask.shape))


def validate_initial_data(data: InitialData, grid: Grid) -> ValidationReport:
    """Check the standing assumptions on (psi0, phi0) and record the quantities they control.

    Failures carry the index of the first offending cell. Nothing is clamped.
    """
    psi0 = np.asarray(data.psi0, dtype=float)
    phi0 = np.asarray(data.phi0, dtype=float)
    report = ValidationReport()
    for name, arr in (("psi0", psi0), ("phi0", phi0)):
        if arr.shape != grid.shape:
            report.checks.append(Check(f"{name}_shape", False, None, f"shape {arr.shape} != grid {grid.shape}"))
    if report.checks:
        return report

    finite = np.isfinite(psi0) & np.isfinite(phi0)
    idx = _first_bad(~finite)
    report.checks.append(Check("finite_values", idx is None, idx, "" if idx is None else "non-finite value"))

    idx = _first_bad(~(psi0 >= 0.0))
    report.checks.append(
        Check("psi_nonnegative", idx is None, idx, "" if idx is None else f"psi0={psi0[idx]}")
    )
    idx = _first_bad(~((phi0 >= 0.0) & (phi0 <= 1.0)))
    report.checks.append(
        Check("phi_unit_interval", idx is None, idx, "" if idx is None else f"phi0={phi0[idx]}")
    )
    if data.strict_bound:
        idx = _first_bad(~(phi0 <= STRICT_PHI_BOUND))
        report.checks.append(
            Check("phi_below_two_thirds", idx is None, idx, "" if idx is None else f"phi0={phi0[idx]} > 2/3")
        )
    if not all(c.passed for c in report.checks):
        return report

    report.mass = grid.integrate(psi0)
    report.second_moment = grid.second_moment(psi0)
    report.l2 = grid.integrate(psi0 * psi0)
    report.grad_sqrt_phi = grid.face_integral([g * g for g in grid.face_gradient(np.sqrt(phi0))])
    for name, value in (
        ("finite_mass", report.mass),
        ("finite_second_moment", report.second_moment),
        ("finite_l2", report.l2),
        ("finite_grad_sqrt_phi", report.grad_sqrt_phi),
    ):
        ok = bool(np.isfinite(value))
        report.checks.append(Check(name, ok, None, "" if ok else f"value {value}"))
    return report
