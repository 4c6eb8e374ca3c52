"""Shared fixtures and random-field builders.

Random test fields are band-limited (no content at or above the cutoff
wavenumber) so that the discrete operator identities hold to roundoff: the
quadrature is exact for resolved trigonometric polynomials, and Nyquist
content is outside the contract of the first-derivative operators.
"""

import numpy as np
import pytest

from pnpns.pnp import chemical_potentials, compute_psi
from pnpns.spectral import Grid, ScalarField, VectorField, make_grid
from pnpns.state import SimState


@pytest.fixture
def rng():
    return np.random.default_rng(20250811)


@pytest.fixture(params=[8, 16, 32])
def grid(request) -> Grid:
    return make_grid(request.param)


@pytest.fixture
def grid8() -> Grid:
    return make_grid(8)


@pytest.fixture
def grid16() -> Grid:
    return make_grid(16)


@pytest.fixture
def grid64() -> Grid:
    return make_grid(64)


def band_limited(grid: Grid, rng, kmax: int | None = None,
                 amplitude: float = 1.0) -> np.ndarray:
    """Random real field with spectrum confined to |kx|, |ky| < kmax."""
    n = grid.n_modes
    if kmax is None:
        kmax = max(1, n // 4)
    raw = rng.standard_normal((n, n))
    spec = grid.rfft(raw)
    kx = np.abs(np.fft.fftfreq(n, d=1.0 / n))[:, None]
    ky = np.arange(n // 2 + 1)[None, :]
    spec[(kx >= kmax) | (ky >= kmax)] = 0.0
    values = grid.irfft(spec)
    peak = np.abs(values).max()
    if peak > 0:
        values *= amplitude / peak
    return values


def positive_field(grid: Grid, rng, base: float = 1.0, wobble: float = 0.3,
                   kmax: int | None = None) -> np.ndarray:
    return base + band_limited(grid, rng, kmax=kmax, amplitude=wobble)


def div_free_velocity(grid: Grid, rng, amplitude: float = 1.0,
                      kmax: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Velocity from a random streamfunction: exactly divergence-free."""
    stream = band_limited(grid, rng, kmax=kmax, amplitude=amplitude)
    return grid.ddy(stream), -grid.ddx(stream)


def admissible_state(grid: Grid, rng, wobble: float = 0.3,
                     speed: float = 0.5) -> SimState:
    """Random valid previous state: positive, electroneutral, solenoidal."""
    p_vals = positive_field(grid, rng, wobble=wobble)
    n_vals = positive_field(grid, rng, wobble=wobble)
    n_vals += p_vals.mean() - n_vals.mean()  # equal masses
    p = ScalarField(grid, p_vals)
    n = ScalarField(grid, n_vals)
    psi = compute_psi(p, n, 1.0)
    mu, nu = chemical_potentials(p, n, psi)
    ux, uy = div_free_velocity(grid, rng, amplitude=speed)
    u = VectorField.from_arrays(grid, ux, uy)
    phi_vals = band_limited(grid, rng, amplitude=0.2)
    phi = ScalarField(grid, phi_vals - phi_vals.mean())
    return SimState(p=p, n=n, psi=psi, mu=mu, nu=nu, u=u, u_tilde=u.copy(),
                    phi=phi, step_index=0, time=0.0)
