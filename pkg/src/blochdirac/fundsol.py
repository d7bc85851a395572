"""Fundamental solutions, monodromy and the Hill discriminant.

The first-order system is y' = A(x, λ) y with

    A = [[ q,      -(λ + p)],
         [ λ - p,  -q      ]],

which is J⁻¹(λI − Q) for J = [[0, 1], [-1, 0]]; tr A = 0, det A = λ² − p² − q².
c(x, λ) and s(x, λ) are the columns of the fundamental matrix Y(x, λ) with
Y(0) = I. F(λ) = c₁(π, λ) + s₂(π, λ) is the discriminant; its λ-derivative is
computed by the closed quadrature formula (never finite differences) using the
boundary values at π:

    F'(λ) = ∫₀^π [ s₁(π)(c₁² + c₂²) + (s₂(π) − c₁(π))(c₁s₁ + c₂s₂)
                   − c₂(π)(s₁² + s₂²) ] dx.

Two propagation backends:

* exact closed form for piecewise-constant potentials,
  e^{Ad} = cos(ωd)·I + (sin(ωd)/ω)·A with ω = sqrt(det A)
  (entire in ω², so complex λ is unproblematic);
* stacked adaptive DOP853 for fourier potentials, except syntactically
  constant ones, which reuse the exact constant propagator.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationFailure, ValidationError
from .potential import PERIOD, PotentialSpec
from .quadrature import PanelGrid, build_panel_grid, refine_breaks

__all__ = [
    "SolutionBatch",
    "FundamentalPair",
    "DiscriminantSample",
    "propagate",
    "monodromy",
    "fundamental_solutions",
    "discriminant",
    "discriminant_batch",
    "discriminant_derivative",
    "fprime_batch",
    "panel_grid_for",
    "MonodromyCache",
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
]

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-12


# ---------------------------------------------------------------------------
# closed-form propagator pieces


def _cos_sinc(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(cos z, sin z / z) with a series branch for small |z|; entire in z².

    Both values come from a single exp: cos z = (E + 1/E)/2 and
    sin z = (E - 1/E)/2i with E = e^{iz}, which is exact to an ulp and
    roughly halves the transcendental cost on the large arrays the
    contour march feeds through here.
    """
    z = np.asarray(z, dtype=complex)
    E = np.exp(1j * z)
    Ei = np.reciprocal(E)
    cz = (E + Ei) * 0.5
    sc = E
    sc -= Ei
    sc *= -0.5j
    small = np.abs(z) < 1e-2
    if small.any():
        np.divide(sc, z, out=sc, where=~small)
        zs = z[small]
        z2 = zs * zs
        sc[small] = 1.0 - z2 / 6.0 + z2 * z2 / 120.0
    else:
        sc /= z
    return cz, sc


def _mul2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Stacked 2x2 matrix product; avoids matmul's per-matrix dispatch cost."""
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=complex)
    out[..., 0, 0] = A[..., 0, 0] * B[..., 0, 0] + A[..., 0, 1] * B[..., 1, 0]
    out[..., 0, 1] = A[..., 0, 0] * B[..., 0, 1] + A[..., 0, 1] * B[..., 1, 1]
    out[..., 1, 0] = A[..., 1, 0] * B[..., 0, 0] + A[..., 1, 1] * B[..., 1, 0]
    out[..., 1, 1] = A[..., 1, 0] * B[..., 0, 1] + A[..., 1, 1] * B[..., 1, 1]
    return out


def _expm_piece(lam: np.ndarray, p: complex, q: complex, d) -> np.ndarray:
    """e^{A(λ)·d} for a constant piece. lam: (nl,), d: scalar or (nd,).

    Returns (nl, 2, 2) for scalar d, else (nl, nd, 2, 2).
    """
    lam = np.asarray(lam, dtype=complex)
    d = np.asarray(d, dtype=float)
    scalar_d = d.ndim == 0
    dd = d.reshape(1, -1)
    omega = np.sqrt(lam * lam - (p * p + q * q))
    z = omega[:, None] * dd
    cz, f = _cos_sinc(z)
    f *= dd  # sin(ωd)/ω
    fq = f * q
    out = np.empty(z.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = cz + fq
    out[..., 0, 1] = f * (-(lam + p))[:, None]
    out[..., 1, 0] = f * (lam - p)[:, None]
    out[..., 1, 1] = cz - fq
    return out[:, 0] if scalar_d else out


def _pieces_of(spec: PotentialSpec):
    if spec.kind == "piecewise":
        return [(float(a) * PERIOD, float(b) * PERIOD, complex(p), complex(q))
                for a, b, p, q in spec.pieces]
    p0, q0 = spec.constant_values()
    return [(0.0, PERIOD, p0, q0)]


def _exact_monodromy(spec: PotentialSpec, lam: np.ndarray) -> np.ndarray:
    Y = None
    for xa, xb, p, q in _pieces_of(spec):
        M = _expm_piece(lam, p, q, xb - xa)
        Y = M if Y is None else _mul2(M, Y)
    return Y


def _exact_propagate(spec: PotentialSpec, lam: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Y(x_i, λ_l) as (nl, nx, 2, 2); x sorted in [0, π]."""
    pieces = _pieces_of(spec)
    edges = np.array([pc[0] for pc in pieces] + [PERIOD])
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(pieces) - 1)
    out = np.empty(lam.shape + x.shape + (2, 2), dtype=complex)
    start = None  # accumulated product over full pieces; None while still identity
    for k, (xa, xb, p, q) in enumerate(pieces):
        mask = idx == k
        if np.any(mask):
            local = _expm_piece(lam, p, q, x[mask] - xa)  # (nl, nm, 2, 2)
            out[:, mask] = local if start is None else _mul2(local, start[:, None])
        if k + 1 < len(pieces):
            M = _expm_piece(lam, p, q, xb - xa)
            start = M if start is None else _mul2(M, start)
    return out


# ---------------------------------------------------------------------------
# adaptive backend (fourier potentials)


def _rk_propagate(spec: PotentialSpec, lam: np.ndarray, x: np.ndarray,
                  rtol: float, atol: float) -> np.ndarray:
    nl = lam.shape[0]
    xs = np.unique(np.concatenate((x, [0.0, PERIOD])))
    lamc = lam.astype(complex)

    def rhs(xx, yy):
        Y = yy.reshape(nl, 2, 2)
        p = complex(spec.eval_p(xx))
        q = complex(spec.eval_q(xx))
        dY = np.empty_like(Y)
        dY[:, 0, :] = q * Y[:, 0, :] - (lamc + p)[:, None] * Y[:, 1, :]
        dY[:, 1, :] = (lamc - p)[:, None] * Y[:, 0, :] - q * Y[:, 1, :]
        return dY.reshape(-1)

    y0 = np.broadcast_to(np.eye(2, dtype=complex), (nl, 2, 2)).reshape(-1).astype(complex)
    sol = solve_ivp(rhs, (0.0, PERIOD), y0, method="DOP853",
                    t_eval=xs, rtol=rtol, atol=atol)
    if sol.status != 0 or not sol.success:
        raise IntegrationFailure(f"adaptive propagation failed: {sol.message}")
    Yall = sol.y.T.reshape(len(xs), nl, 2, 2)
    pos = np.searchsorted(xs, x)
    return np.transpose(Yall[pos], (1, 0, 2, 3))


# ---------------------------------------------------------------------------
# batch containers and dispatch


@dataclass(frozen=True, eq=False)
class SolutionBatch:
    """Fundamental matrices sampled on a common x-grid for a batch of λ.

    c = Y[..., 0], s = Y[..., 1] (columns). Y_pi is the monodromy matrix.
    """

    lam: np.ndarray            # (nl,)
    x: np.ndarray              # (nx,)
    Y: np.ndarray              # (nl, nx, 2, 2)
    Y_pi: np.ndarray           # (nl, 2, 2)

    @property
    def c(self) -> np.ndarray:
        return self.Y[..., 0]

    @property
    def s(self) -> np.ndarray:
        return self.Y[..., 1]

    def wronskian_residual(self) -> float:
        det = self.Y[..., 0, 0] * self.Y[..., 1, 1] - self.Y[..., 0, 1] * self.Y[..., 1, 0]
        return float(np.max(np.abs(det - 1.0)))


def _uses_exact_backend(spec: PotentialSpec) -> bool:
    return spec.kind == "piecewise" or spec.is_syntactically_constant()


def propagate(spec: PotentialSpec, lam, x,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> SolutionBatch:
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or np.any(np.diff(x) < 0):
        raise ValidationError("x grid must be a sorted 1-d array")
    if x.size and (x[0] < -1e-12 or x[-1] > PERIOD + 1e-12):
        raise ValidationError("x grid must lie in [0, π]")
    x = np.clip(x, 0.0, PERIOD)
    if _uses_exact_backend(spec):
        Y = _exact_propagate(spec, lam, x)
        Ypi = _exact_monodromy(spec, lam)
    else:
        xs = np.unique(np.concatenate((x, [PERIOD])))
        Yfull = _rk_propagate(spec, lam, xs, rtol, atol)
        Y = Yfull[:, np.searchsorted(xs, x)]
        Ypi = Yfull[:, -1]
    return SolutionBatch(lam=lam, x=x, Y=Y, Y_pi=Ypi)


def monodromy(spec: PotentialSpec, lam,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL) -> np.ndarray:
    """Y(π, λ) for a λ array, shape (nl, 2, 2)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if _uses_exact_backend(spec):
        return _exact_monodromy(spec, lam)
    return _rk_propagate(spec, lam, np.array([PERIOD]), rtol, atol)[:, -1]


# ---------------------------------------------------------------------------
# quadrature grids matched to oscillation scale


@lru_cache(maxsize=256)
def _cached_grid(spec: PotentialSpec, bucket: float, extra: tuple, order: int,
                 width_factor: float) -> PanelGrid:
    breaks = {0.0, PERIOD}
    breaks.update(spec.breakpoints)
    breaks.update(float(b) for b in extra)
    width = width_factor * 2.4 / max(1.0, bucket)
    return build_panel_grid(refine_breaks(sorted(breaks), width), order=order)


def panel_grid_for(spec: PotentialSpec, max_abs_lam: float,
                   extra_breaks: tuple = (), order: int = 10,
                   width_factor: float = 1.0) -> PanelGrid:
    """Panel grid on [0, π] aligned to potential breakpoints, fine enough for
    integrands oscillating like e^{2iλx} at |λ| ≤ max_abs_lam.

    The |λ| scale is bucketed to powers of √2 so repeated calls share grids.
    width_factor > 1 trades panel resolution for speed; at order 8 a factor
    of 2 still keeps the per-panel phase under 5 radians, where Gauss error
    stays near machine precision.
    """
    bucket = 1.0
    target = max(1.0, float(max_abs_lam))
    while bucket < target:
        bucket *= math.sqrt(2.0)
    extra = tuple(sorted(round(float(b), 15) for b in extra_breaks))
    return _cached_grid(spec, round(bucket, 9), extra, order, float(width_factor))


# ---------------------------------------------------------------------------
# discriminant and its derivative


class MonodromyCache:
    """Single-writer-per-key memo of monodromy matrices, keyed by exact λ.

    Purely an accelerator for contour sampling: correctness never depends on
    hits. Thread-safe; stale entries are simply recomputed values equal to the
    cached ones because propagation is deterministic.
    """

    def __init__(self, spec: PotentialSpec, max_entries: int = 200_000):
        self.spec = spec
        self.max_entries = max_entries
        self._data: dict[complex, np.ndarray] = {}
        self._lock = threading.Lock()

    def monodromy(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        keys = [complex(v) for v in lam]
        with self._lock:
            missing = [k for k in keys if k not in self._data]
        if missing:
            fresh = monodromy(self.spec, np.array(missing, dtype=complex))
            with self._lock:
                if len(self._data) + len(missing) > self.max_entries:
                    self._data.clear()
                for k, m in zip(missing, fresh):
                    self._data[k] = m
        with self._lock:
            return np.stack([self._data[k] for k in keys])


def discriminant_batch(spec: PotentialSpec, lam, cache: MonodromyCache | None = None) -> np.ndarray:
    """F(λ) = trace of the monodromy matrix, vectorized."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    Ypi = cache.monodromy(lam) if cache is not None else monodromy(spec, lam)
    return Ypi[..., 0, 0] + Ypi[..., 1, 1]


def fprime_batch(spec: PotentialSpec, lam, grid: PanelGrid | None = None,
                 batch: SolutionBatch | None = None) -> np.ndarray:
    """F'(λ) by the quadrature formula, vectorized over λ.

    Pass ``batch`` to reuse fundamental solutions already sampled on ``grid``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if grid is None:
        grid = panel_grid_for(spec, float(np.max(np.abs(lam))) if lam.size else 1.0)
    if batch is None:
        batch = propagate(spec, lam, grid.nodes)
    c1 = batch.Y[..., 0, 0]
    c2 = batch.Y[..., 1, 0]
    s1 = batch.Y[..., 0, 1]
    s2 = batch.Y[..., 1, 1]
    c1p = batch.Y_pi[..., 0, 0][..., None]
    c2p = batch.Y_pi[..., 1, 0][..., None]
    s1p = batch.Y_pi[..., 0, 1][..., None]
    s2p = batch.Y_pi[..., 1, 1][..., None]
    integrand = (
        s1p * (c1 * c1 + c2 * c2)
        + (s2p - c1p) * (c1 * s1 + c2 * s2)
        - c2p * (s1 * s1 + s2 * s2)
    )
    return grid.integrate(integrand)


@dataclass(frozen=True)
class DiscriminantSample:
    """F and F' at one λ, with the monodromy entries that produced them."""

    lam: complex
    F: complex
    F_prime: complex
    monodromy: tuple
    wronskian_residual: float


def discriminant(spec: PotentialSpec, lam, with_derivative: bool = True) -> DiscriminantSample:
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    if lam_arr.size != 1:
        raise ValidationError("discriminant() is scalar; use discriminant_batch")
    if with_derivative:
        grid = panel_grid_for(spec, float(np.abs(lam_arr[0])))
        batch = propagate(spec, lam_arr, grid.nodes)
        fp = complex(fprime_batch(spec, lam_arr, grid=grid, batch=batch)[0])
        Ypi = batch.Y_pi[0]
        wr = batch.wronskian_residual()
    else:
        Ypi = monodromy(spec, lam_arr)[0]
        fp = complex(float("nan"), float("nan"))
        det = Ypi[0, 0] * Ypi[1, 1] - Ypi[0, 1] * Ypi[1, 0]
        wr = float(np.abs(det - 1.0))
    F = complex(Ypi[0, 0] + Ypi[1, 1])
    return DiscriminantSample(
        lam=complex(lam_arr[0]),
        F=F,
        F_prime=fp,
        monodromy=tuple(map(tuple, Ypi.tolist())),
        wronskian_residual=wr,
    )


def discriminant_derivative(spec: PotentialSpec, lam) -> complex:
    return complex(fprime_batch(spec, np.atleast_1d(np.asarray(lam, dtype=complex)))[0])


# ---------------------------------------------------------------------------
# public sampled pair


@dataclass(frozen=True, eq=False)
class FundamentalPair:
    """c and s sampled on a grid, with the monodromy and a Wronskian residual."""

    lam: complex
    grid: np.ndarray
    c_values: np.ndarray       # (nx, 2)
    s_values: np.ndarray       # (nx, 2)
    monodromy: np.ndarray      # (2, 2)
    wronskian_residual: float


def fundamental_solutions(spec: PotentialSpec, lam, resolution: int = 256) -> FundamentalPair:
    """Sample c(x, λ), s(x, λ) on a uniform grid of ``resolution`` cells
    (plus potential breakpoints). ``resolution`` controls output sampling only;
    the exact backend is exact at every x and the adaptive backend controls
    error by tolerance, not by this grid."""
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    xs = np.unique(np.concatenate((np.linspace(0.0, PERIOD, resolution + 1),
                                   np.asarray(spec.breakpoints, dtype=float))))
    batch = propagate(spec, lam, xs)
    return FundamentalPair(
        lam=complex(np.atleast_1d(lam)[0]),
        grid=xs,
        c_values=batch.c[0],
        s_values=batch.s[0],
        monodromy=batch.Y_pi[0],
        wronskian_residual=batch.wronskian_residual(),
    )
