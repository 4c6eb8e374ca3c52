"""Independent oracles: direct DFT, dense differentiation matrices, dense
weak-form assembly, and a finite-difference forcing check.

Nothing here touches the FFT machinery under test; derivatives come from the
closed-form trigonometric cardinal-function matrix and transforms from the
explicit DFT sum.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def direct_dft2(values: np.ndarray) -> np.ndarray:
    """Amplitude-normalized 2-D DFT by explicit summation (O(N^4) work)."""
    n = values.shape[0]
    j = np.arange(n)
    k = np.fft.fftfreq(n, d=1.0 / n)  # ordering matches the package convention
    e = np.exp(-2j * np.pi * np.outer(k, j) / n)
    return e @ values @ e.T / (n * n)


def fourier_diff_matrix(n: int) -> np.ndarray:
    """Trigonometric collocation differentiation matrix on [0, 2pi), even n.

    Closed form d[j,m] = (-1)^(j-m) / (2 tan((j-m) pi / n)) for j != m; this
    is the derivative of the trig interpolant with the unmatched Nyquist mode
    dropped, matching the solver's first-derivative convention.
    """
    d = np.zeros((n, n))
    for j in range(n):
        for m in range(n):
            if j != m:
                d[j, m] = 0.5 * (-1.0) ** (j - m) / np.tan((j - m) * np.pi / n)
    return d


def diff_matrices_2d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Kronecker lifts of the 1-D matrix: d/dx acts on the row index."""
    d = fourier_diff_matrix(n)
    eye = np.eye(n)
    return np.kron(d, eye), np.kron(eye, d)


def dense_weighted_laplacian(m_values: np.ndarray) -> np.ndarray:
    """Weak-form assembly of f -> -div(M grad f) on the flattened grid.

    <L f, v> = <M grad f, grad v> with the uniform quadrature weights
    cancelling: L = Dx^T diag(M) Dx + Dy^T diag(M) Dy.
    """
    n = m_values.shape[0]
    dx, dy = diff_matrices_2d(n)
    m_diag = np.diag(m_values.ravel())
    return dx.T @ m_diag @ dx + dy.T @ m_diag @ dy


def dense_solve_zero_mean(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm solve of the (constant-nullspace) dense system."""
    sol, *_ = np.linalg.lstsq(matrix, rhs.ravel(), rcond=None)
    sol = sol - sol.mean()
    n = int(round(np.sqrt(rhs.size)))
    return sol.reshape(n, n)


def dense_inv_laplacian(n: int) -> np.ndarray:
    """Pseudo-inverse of the dense (derivative-consistent) -laplacian."""
    lap = dense_weighted_laplacian(np.ones((n, n)))
    return np.linalg.pinv(lap)


# ---------------------------------------------------------------------------
# finite-difference forcing oracle
# ---------------------------------------------------------------------------

def _roll_axis(values: np.ndarray, shift: int, axis: int) -> np.ndarray:
    return np.roll(values, -shift, axis=axis)


def fd_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """4th-order central first derivative on the periodic probe grid."""
    f1 = _roll_axis(values, 1, axis)
    f2 = _roll_axis(values, 2, axis)
    b1 = _roll_axis(values, -1, axis)
    b2 = _roll_axis(values, -2, axis)
    return (-f2 + 8.0 * f1 - 8.0 * b1 + b2) / (12.0 * h)


def fd_time_derivative(sample, t: float, ht: float = 1e-3) -> np.ndarray:
    """4th-order central time derivative of a field-valued function of t."""
    return (-sample(t + 2 * ht) + 8.0 * sample(t + ht)
            - 8.0 * sample(t - ht) + sample(t - 2 * ht)) / (12.0 * ht)


class FdForcingOracle:
    """Assembles the manufactured forcing terms by finite differences only.

    The exact fields are restated here in closed form (independent of the
    package's symbolic derivation); all space and time derivatives use
    4th-order central differences on an n_probe^2 periodic grid.
    """

    def __init__(self, params, variant: str, n_probe: int = 512):
        self.eps = params.epsilon
        self.kappa = params.kappa
        self.diff = params.diffusion
        self.visc = params.viscosity
        self.variant = variant
        self.n = n_probe
        self.h = TWO_PI / n_probe
        coords = np.arange(n_probe) * self.h
        self.x, self.y = np.meshgrid(coords, coords, indexing="ij")

    # closed forms, restated independently of the package
    def p(self, t):
        return 1.1 + np.cos(self.x) * np.cos(self.y) * np.sin(t)

    def n_field(self, t):
        return 1.1 - np.cos(self.x) * np.cos(self.y) * np.cos(t)

    def psi(self, t):
        return np.cos(self.x) * np.cos(self.y) * (np.sin(t) + np.cos(t)) / (2 * self.eps)

    def u1(self, t):
        return np.sin(self.x) ** 2 * np.sin(2 * self.y) * np.sin(t)

    def u2(self, t):
        g = np.sin(t) if self.variant == "divergence-free" else np.cos(t)
        return -np.sin(2 * self.x) * np.sin(self.y) ** 2 * g

    def pressure(self, t):
        return np.cos(self.x) * np.cos(self.y) * np.sin(t)

    def _dx(self, f):
        return fd_derivative(f, 0, self.h)

    def _dy(self, f):
        return fd_derivative(f, 1, self.h)

    def _lap(self, f):
        return self._dx(self._dx(f)) + self._dy(self._dy(f))

    def ion_parts(self, t: float):
        """(u.grad p, p_t - D div(grad p + p grad psi)) split for f_p."""
        p = self.p(t)
        psi = self.psi(t)
        u1, u2 = self.u1(t), self.u2(t)
        advect = u1 * self._dx(p) + u2 * self._dy(p)
        flux_x = self._dx(p) + p * self._dx(psi)
        flux_y = self._dy(p) + p * self._dy(psi)
        rest = (fd_time_derivative(self.p, t)
                - self.diff * (self._dx(flux_x) + self._dy(flux_y)))
        return advect, rest

    def f_p(self, t: float):
        advect, rest = self.ion_parts(t)
        return advect + rest

    def f_n(self, t: float):
        n = self.n_field(t)
        psi = self.psi(t)
        u1, u2 = self.u1(t), self.u2(t)
        advect = u1 * self._dx(n) + u2 * self._dy(n)
        flux_x = self._dx(n) - n * self._dx(psi)
        flux_y = self._dy(n) - n * self._dy(psi)
        return (fd_time_derivative(self.n_field, t) + advect
                - self.diff * (self._dx(flux_x) + self._dy(flux_y)))

    def f_u(self, t: float):
        u1, u2 = self.u1(t), self.u2(t)
        psi = self.psi(t)
        charge = self.p(t) - self.n_field(t)
        fx = (fd_time_derivative(self.u1, t)
              + u1 * self._dx(u1) + u2 * self._dy(u1)
              - self.visc * self._lap(u1)
              + self._dx(self.pressure(t)) + self.kappa * charge * self._dx(psi))
        fy = (fd_time_derivative(self.u2, t)
              + u1 * self._dx(u2) + u2 * self._dy(u2)
              - self.visc * self._lap(u2)
              + self._dy(self.pressure(t)) + self.kappa * charge * self._dy(psi))
        return fx, fy

    def sample_at(self, values: np.ndarray, grid) -> np.ndarray:
        """Restrict a probe-grid field to a coarse collocation grid."""
        stride = self.n // grid.n_modes
        if stride * grid.n_modes != self.n:
            raise ValueError("probe grid must be a multiple of the target grid")
        return values[::stride, ::stride]
