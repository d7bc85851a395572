"""Independent reference routes used by the tests.

Everything here is deliberately dumb and slow: scipy matrix exponentials,
dense Gauss quadrature, closed forms for constant coefficients. None of it
shares code with the package internals it checks.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

PI = np.pi


def coefficient_matrix(p, q, lam) -> np.ndarray:
    """First-order system matrix A(x, lam) with y' = A y."""
    return np.array([[q, -(lam + p)], [lam - p, -q]], dtype=complex)


def const_propagator(p0, q0, lam, x) -> np.ndarray:
    """Y(x) for a constant potential, via scipy's generic expm."""
    return expm(coefficient_matrix(p0, q0, lam) * float(x))


def piecewise_monodromy(pieces, lam) -> np.ndarray:
    """Y(pi) for piecewise-constant (a, b, p, q) data, a and b in units of pi.

    Plain product of scipy matrix exponentials in increasing x order.
    """
    Y = np.eye(2, dtype=complex)
    for a, b, p, q in pieces:
        d = (float(b) - float(a)) * PI
        Y = expm(coefficient_matrix(p, q, lam) * d) @ Y
    return Y


def const_discriminant(p0, q0, lam) -> complex:
    """F(lam) = 2 cos(pi omega), omega^2 = lam^2 - p0^2 - q0^2."""
    omega = np.sqrt(complex(lam) ** 2 - complex(p0) ** 2 - complex(q0) ** 2)
    return complex(2.0 * np.cos(PI * omega))


def const_discriminant_derivative(p0, q0, lam) -> complex:
    """dF/dlam for a constant potential: -2 pi lam sin(pi omega)/omega."""
    lam = complex(lam)
    w2 = lam * lam - complex(p0) ** 2 - complex(q0) ** 2
    omega = np.sqrt(w2)
    if abs(omega) < 1e-8:
        # sin(pi w)/w -> pi (1 - (pi w)^2 / 6)
        ratio = PI * (1.0 - (PI * PI * w2) / 6.0)
    else:
        ratio = np.sin(PI * omega) / omega
    return complex(-2.0 * PI * lam * ratio)


def dispersion_value(n, j, t, p0, q0) -> complex:
    """Closed-form lam_{n,j}(t) for a constant potential.

    The square root branch is the one nearest the free center 2n (+/-) t;
    when the two roots are equidistant the principal one is returned, so
    callers comparing against a computed eigenvalue should also try the
    negated value.
    """
    mu = 2 * n + complex(t) if j == 1 else 2 * n - complex(t)
    lam = np.sqrt(mu * mu + complex(p0) ** 2 + complex(q0) ** 2)
    if abs(-lam - mu) < abs(lam - mu):
        lam = -lam
    return complex(lam)


def dispersion_residual(lam, n, j, t, p0, q0) -> float:
    """|lam^2 - ((2n +/- t)^2 + p0^2 + q0^2)|."""
    mu = 2 * n + complex(t) if j == 1 else 2 * n - complex(t)
    return abs(complex(lam) ** 2 - (mu * mu + complex(p0) ** 2 + complex(q0) ** 2))


def central_difference(fun, z, h=1e-5) -> complex:
    return (fun(z + h) - fun(z - h)) / (2.0 * h)


def zero_mode(n, j, t, x) -> np.ndarray:
    """Zero-potential Bloch mode with unit twisted norm on [0, pi].

    j = 1 rides e^{i(2n+t)x} with amplitude (1, -i)/sqrt(2 pi); j = 2 rides
    e^{i(-2n+t)x} with amplitude (1, i)/sqrt(2 pi).
    """
    x = np.asarray(x, dtype=float)
    if j == 1:
        phase = np.exp(1j * (2 * n + complex(t)) * x)
        amp = np.array([1.0, -1.0j]) / np.sqrt(2.0 * PI)
    else:
        phase = np.exp(1j * (-2 * n + complex(t)) * x)
        amp = np.array([1.0, 1.0j]) / np.sqrt(2.0 * PI)
    return phase[..., None] * amp


def _gauss_nodes(a, b, m=240):
    xi, wi = np.polynomial.legendre.leggauss(m)
    return 0.5 * (a + b) + 0.5 * (b - a) * xi, 0.5 * (b - a) * wi


def zero_coefficient(f, n, j, t) -> complex:
    """Expansion coefficient against the zero-potential system, brute force.

    For the free operator the coefficient of label (n, j) reduces to a plain
    Fourier transform of f over its support: integral of
    f(u)^T conj(mode*(u)) du, where mode* is the adjoint-system mode and
    lives at quasimomentum conj(t). Conjugating it gives a kernel analytic
    in t (the quasimomentum is continued, never conjugated).
    """
    a, b = f.support
    u, w = _gauss_nodes(float(a), float(b))
    vals = f(u)
    kernel = np.conjugate(zero_mode(n, j, np.conjugate(complex(t)), u))
    integrand = np.sum(vals * kernel, axis=-1)
    return complex(np.sum(w * integrand))


def brute_inner(u_vals, v_vals, w) -> complex:
    """Weighted integral of u^T conj(v) with explicit quadrature weights."""
    return complex(np.sum(w * np.sum(u_vals * np.conjugate(v_vals), axis=-1)))
