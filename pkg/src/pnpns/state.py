"""Domain data model: physical parameters, scheme knobs, state, diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NonPositiveConcentrationError
from .spectral import Grid, ScalarField, VectorField

#: inner tolerance of the linearized Newton solves (inexact Newton)
NEWTON_GMRES_TOL = 1e-4
#: large restart: short restarts stagnate on the sharp-interface Jacobians
NEWTON_GMRES_RESTART = 300
NEWTON_GMRES_MAX_CYCLES = 2


@dataclass(frozen=True)
class PhysParams:
    """Physical coefficients of the ion-transport / fluid system.

    epsilon scales the electric potential equation (-eps * lap psi = p - n),
    kappa the electric body force on the fluid, diffusion the ion fluxes and
    viscosity the fluid stress. All must be strictly positive.
    """

    epsilon: float = 1.0
    kappa: float = 1.0
    diffusion: float = 1.0
    viscosity: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "kappa", "diffusion", "viscosity"):
            value = getattr(self, name)
            if not (value > 0.0 and np.isfinite(value)):
                raise ValueError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class SchemeConfig:
    """Discretization and solver knobs for one run."""

    n_modes: int
    dt: float
    t_final: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 30
    krylov_tol: float = 1e-12
    krylov_max_iter: int = 200
    dealias: bool = False
    track_functional: bool = False
    snapshot_times: tuple[float, ...] = ()
    output_dir: Path = Path(".")

    def __post_init__(self):
        if self.n_modes < 4 or self.n_modes % 2 != 0:
            raise ValueError(f"n_modes must be even and >= 4, got {self.n_modes}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ValueError(f"t_final must be at least dt, got {self.t_final}")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class SimState:
    """Full discrete state at one time level.

    p, n are the ion concentrations (positive everywhere), psi the zero-mean
    electric potential, mu/nu the chemical potentials ln p + psi / ln n - psi,
    u the projected velocity, u_tilde the pre-projection velocity from the
    last step, phi the zero-mean modified pressure.
    """

    p: ScalarField
    n: ScalarField
    psi: ScalarField
    mu: ScalarField
    nu: ScalarField
    u: VectorField
    u_tilde: VectorField
    phi: ScalarField
    step_index: int = 0
    time: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.p.grid


@dataclass(frozen=True)
class EnergyBreakdown:
    """Parts of the modified discrete energy.

    entropy_p/entropy_n are the raw mixing entropies <f(ln f - 1), 1>;
    field is (eps/2)||grad psi||^2; kinetic is ||u||^2 / 2; pressure_aug is
    the (dt^2/2)||grad phi||^2 augmentation of the projection splitting.
    The total weighs the ion parts with kappa:

        total = kappa*(entropy_p + entropy_n + field) + kinetic + pressure_aug
    """

    entropy_p: float
    entropy_n: float
    field: float
    kinetic: float
    pressure_aug: float
    total: float

    def recompute_total(self, kappa: float) -> float:
        return (kappa * (self.entropy_p + self.entropy_n + self.field)
                + self.kinetic + self.pressure_aug)


@dataclass
class StepDiagnostics:
    """Per-step invariant ledger."""

    step_index: int
    time: float
    mass_p: float
    mass_n: float
    min_p: float
    min_n: float
    max_p: float
    max_n: float
    energy: EnergyBreakdown
    newton_iters: int
    krylov_iters_step2: int
    cg_iters_projection: int
    residual_step1: float
    residual_step2: float
    wall_time_s: float = 0.0


def mass(f: ScalarField) -> float:
    """Total amount <f, 1> carried by the field."""
    return f.grid.integral(f.values)


def _entropy(values: np.ndarray, grid: Grid) -> float:
    return grid.integral(values * (np.log(values) - 1.0))


def total_energy(state: SimState, params: PhysParams, dt: float) -> EnergyBreakdown:
    """Modified discrete energy of a state (the Lyapunov functional).

    With unit coefficients this is exactly
    E(p) + E(n) + ||grad psi||^2/2 + ||u||^2/2 + (dt^2/2)||grad phi||^2
    where E(f) = <f(ln f - 1), 1>; kappa and epsilon generalize the weights
    as documented on EnergyBreakdown.
    """
    grid = state.grid
    min_p = state.p.values.min()
    min_n = state.n.values.min()
    if min_p <= 0.0 or min_n <= 0.0:
        raise NonPositiveConcentrationError(
            f"energy undefined: min p={min_p:.3e}, min n={min_n:.3e}"
        )
    entropy_p = _entropy(state.p.values, grid)
    entropy_n = _entropy(state.n.values, grid)

    gx, gy = grid.grad(state.psi.values)
    field_part = 0.5 * params.epsilon * (grid.inner(gx, gx) + grid.inner(gy, gy))

    kinetic = 0.5 * (grid.inner(state.u.x_comp.values, state.u.x_comp.values)
                     + grid.inner(state.u.y_comp.values, state.u.y_comp.values))

    px, py = grid.grad(state.phi.values)
    pressure_aug = 0.5 * dt * dt * (grid.inner(px, px) + grid.inner(py, py))

    total = (params.kappa * (entropy_p + entropy_n + field_part)
             + kinetic + pressure_aug)
    return EnergyBreakdown(entropy_p, entropy_n, field_part, kinetic, pressure_aug, total)
