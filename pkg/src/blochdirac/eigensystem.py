"""Eigenfunctions, biorthogonal pairs, and the resolvent of the fiber operator.

An eigenvalue λ of the fiber at quasimomentum t has monodromy eigenvector
v = (s1(π), E − c1(π)) with E = e^{iπt}, so Φ(x) = Y(x)v is the Bloch
eigenfunction; the partner Φ⁻ at quasimomentum −t shares the same λ and the
same Y(x), differing only through E ↦ 1/E. The normalized pair is

    Ψ  = e^{iθ} Φ⁺ / ‖e^{−itx}Φ⁺‖,     Ψ* = e^{iθ} conj(Φ⁻) / ‖e^{itx}Φ⁻‖,

with one common phase θ fixed against a zero-potential reference mode, and

    α = ∫ Ψᵀ conj(Ψ*) dx = s1(π) F'(λ) / (N⁺ N⁻),

which is invariant under the common rotation. Everything downstream (spectral
projections, expansion coefficients) uses either this pair or the
normalization-free combination Φ⁺ · ∫fᵀΦ⁻ / (s1 F').
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NearSingularError, SolverError, ValidationError
from .fundsol import fprime_batch, propagate
from .potential import PERIOD, PotentialSpec, adjoint_potential, eval_potential
from .quadrature import PanelGrid, adaptive_circle_sum, cumulative_integral, panel_derivative

__all__ = [
    "EigenTriple",
    "pairing",
    "inner",
    "twisted_norm",
    "reference_mode",
    "eigenfunction",
    "bloch_wave_batch",
    "alpha_at",
    "eigen_residual",
    "normalized_pair",
    "resolvent_apply",
    "resolvent_apply_batch",
    "total_projection",
]

_J = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
_J_INV = -_J


def pairing(grid: PanelGrid, u: np.ndarray, v: np.ndarray) -> complex:
    """Bilinear pairing ∫ uᵀ v dx over one period (no conjugation)."""
    return complex(np.sum(grid.integrate(np.moveaxis(u * v, -1, 0)), axis=0))


def inner(grid: PanelGrid, u: np.ndarray, v: np.ndarray) -> complex:
    """Inner product ∫ uᵀ conj(v) dx, linear in u."""
    return complex(np.sum(grid.integrate(np.moveaxis(u * np.conjugate(v), -1, 0)), axis=0))


def twisted_norm(grid: PanelGrid, t, u: np.ndarray) -> float:
    """L² norm of e^{−itx} u(x) on [0, π]; for real t just ‖u‖."""
    w = np.exp(2.0 * complex(t).imag * grid.nodes)
    dens = np.sum(np.abs(u) ** 2, axis=-1) * w
    return float(np.sqrt(np.real(grid.integrate(dens))))


def reference_mode(n: int, j: int, t, x: np.ndarray) -> np.ndarray:
    """Zero-potential Bloch mode used to anchor phases: for branch j the
    vector amplitude is (1, ∓i)/√(2π) riding e^{i(±2n+t)x}."""
    if j not in (1, 2):
        raise ValidationError(f"branch index j must be 1 or 2, got {j!r}")
    mu = (2 * n + complex(t)) if j == 1 else (-2 * n + complex(t))
    amp = np.array([1.0, -1.0j if j == 1 else 1.0j]) / np.sqrt(2.0 * np.pi)
    return np.exp(1j * mu * np.asarray(x))[..., None] * amp


def _phi_from_batch(Y, Y_pi, E, prefer_form: int | None = None):
    """Monodromy-eigenvector eigenfunctions for a batch.

    Y: (nl, nx, 2, 2), Y_pi: (nl, 2, 2), E: scalar or (nl,). Returns
    (phi, form) where form is 1 when v = (s1, E−c1) and 2 when the second
    monodromy row v = (E−s2, c2) is better conditioned.
    """
    E = np.asarray(E, dtype=complex)
    s1 = Y_pi[..., 0, 1]
    c1 = Y_pi[..., 0, 0]
    c2 = Y_pi[..., 1, 0]
    s2 = Y_pi[..., 1, 1]
    v1 = np.stack([s1, E - c1], axis=-1)
    v2 = np.stack([E - s2, c2], axis=-1)
    n1 = np.sum(np.abs(v1) ** 2, axis=-1)
    n2 = np.sum(np.abs(v2) ** 2, axis=-1)
    if prefer_form == 1:
        take1 = np.ones(n1.shape, dtype=bool)
    elif prefer_form == 2:
        take1 = np.zeros(n1.shape, dtype=bool)
    else:
        take1 = n1 >= 1e-12 * n2
    v = np.where(take1[..., None], v1, v2)
    phi = np.einsum("lxab,lb->lxa", Y, v)
    return phi, np.where(take1, 1, 2)


def eigenfunction(spec: PotentialSpec, t, lam, grid: PanelGrid,
                  batch=None):
    """Bloch eigenfunction Φ on the grid nodes for a single (t, λ).

    Returns (phi, info) with info holding the monodromy entries, the form
    used, and the quasi-periodicity residual |Φ(π) − EΦ(0)|.
    """
    lam_arr = np.array([complex(lam)])
    if batch is None:
        batch = propagate(spec, lam_arr, grid.nodes)
    E = np.exp(1j * np.pi * complex(t))
    phi, form = _phi_from_batch(batch.Y, batch.Y_pi, np.array([E]))
    phi = phi[0]
    qp = float(np.max(np.abs(batch.Y_pi[0] @ _phi_vec(batch.Y_pi[0], E, int(form[0]))
                             - E * _phi_vec(batch.Y_pi[0], E, int(form[0])))))
    info = {
        "form": int(form[0]),
        "E": E,
        "s1": complex(batch.Y_pi[0, 0, 1]),
        "c1": complex(batch.Y_pi[0, 0, 0]),
        "quasi_periodicity_residual": qp,
        "batch": batch,
    }
    return phi, info


def _phi_vec(Y_pi, E, form):
    if form == 1:
        return np.array([Y_pi[0, 1], E - Y_pi[0, 0]])
    return np.array([E - Y_pi[1, 1], Y_pi[1, 0]])


def bloch_wave_batch(spec: PotentialSpec, t_arr, lam_arr, grid: PanelGrid):
    """Vectorized eigen-data along a spectral curve: for matched arrays of
    quasimomenta and eigenvalues returns the dict of Φ⁺, Φ⁻ (form 1 both),
    s1(π, λ) and F'(λ). These are exactly the ingredients of the
    normalization-free expansion term Φ⁺ ∫fᵀΦ⁻ / (s1 F')."""
    t_arr = np.atleast_1d(np.asarray(t_arr, dtype=complex))
    lam_arr = np.atleast_1d(np.asarray(lam_arr, dtype=complex))
    if t_arr.shape != lam_arr.shape:
        raise ValidationError("t and λ arrays must have matching shapes")
    batch = propagate(spec, lam_arr, grid.nodes)
    E = np.exp(1j * np.pi * t_arr)
    s1 = batch.Y_pi[:, 0, 1]
    if np.any(np.abs(s1) < 1e-13):
        raise SolverError(
            "s1(π, λ) vanishes on the curve; the first-row eigenvector form "
            "degenerates at these nodes"
        )
    phi_p, _ = _phi_from_batch(batch.Y, batch.Y_pi, E, prefer_form=1)
    phi_m, _ = _phi_from_batch(batch.Y, batch.Y_pi, 1.0 / E, prefer_form=1)
    fp = fprime_batch(spec, lam_arr, grid=grid, batch=batch)
    return {"phi_plus": phi_p, "phi_minus": phi_m, "s1": s1, "fprime": fp,
            "batch": batch}


def alpha_at(spec: PotentialSpec, t, lam, grid: PanelGrid) -> complex:
    """Biorthogonality constant α at one eigenvalue, label-free.

    α = ∫ Φ⁺ᵀ Φ⁻ dx / (N⁺ N⁻) with the twisted norms; |α| does not depend on
    the eigenvector form or any phase convention, and that modulus is what
    the blow-up diagnostics consume.
    """
    t = complex(t)
    batch = propagate(spec, np.array([complex(lam)]), grid.nodes)
    E = np.exp(1j * np.pi * t)
    phi_p, form = _phi_from_batch(batch.Y, batch.Y_pi, np.array([E]))
    phi_m, _ = _phi_from_batch(batch.Y, batch.Y_pi, np.array([1.0 / E]),
                               prefer_form=int(form[0]))
    phi_p, phi_m = phi_p[0], phi_m[0]
    n_p = twisted_norm(grid, t, phi_p)
    n_m = twisted_norm(grid, -t, phi_m)
    if n_p == 0.0 or n_m == 0.0:
        raise SolverError(f"vanishing eigenvector at t={t}, λ={lam}")
    return complex(pairing(grid, phi_p, phi_m) / (n_p * n_m))


def eigen_residual(spec: PotentialSpec, lam, grid: PanelGrid,
                   y: np.ndarray) -> float:
    """Relative strong residual ‖Jy' + Qy − λy‖ / ‖y‖ on the grid."""
    dy = panel_derivative(grid, np.moveaxis(y, -1, 0))
    dy = np.moveaxis(dy, 0, -1)
    Q = eval_potential(spec, grid.nodes)
    r = dy @ _J.T + np.einsum("xab,xb->xa", Q, y) - complex(lam) * y
    num = np.sqrt(np.real(grid.integrate(np.sum(np.abs(r) ** 2, axis=-1))))
    den = np.sqrt(np.real(grid.integrate(np.sum(np.abs(y) ** 2, axis=-1))))
    return float(num / max(den, 1e-300))


@dataclass(frozen=True)
class EigenTriple:
    """Normalized eigenfunction pair and its biorthogonality constant."""

    n: int
    j: int
    t: complex
    lam: complex
    alpha: complex
    psi: np.ndarray
    psi_star: np.ndarray
    grid: PanelGrid
    residual: float
    adjoint_mismatch: float


def normalized_pair(spec: PotentialSpec, t, lam, n: int, j: int,
                    grid: PanelGrid, *, verify_adjoint: bool = True,
                    check_residual: bool = True) -> EigenTriple:
    """Build (Ψ, Ψ*, α) at one labeled eigenvalue.

    Both members carry the twisted normalization ‖e^{−itx}Ψ‖ = 1 (with t̄ for
    Ψ*) and one common phase aligned against the reference mode, so α is an
    intrinsic function of the label. With verify_adjoint the conjugated
    partner is compared with an independent eigenfunction of the conjugate
    potential at (t̄, λ̄); the two agree identically in exact arithmetic.
    """
    t = complex(t)
    lam = complex(lam)
    lam_arr = np.array([lam])
    batch = propagate(spec, lam_arr, grid.nodes)
    E = np.exp(1j * np.pi * t)
    phi_p, form_p = _phi_from_batch(batch.Y, batch.Y_pi, np.array([E]))
    phi_m, form_m = _phi_from_batch(batch.Y, batch.Y_pi, np.array([1.0 / E]),
                                    prefer_form=int(form_p[0]))
    phi_p, phi_m = phi_p[0], phi_m[0]

    n_p = twisted_norm(grid, t, phi_p)
    n_m = twisted_norm(grid, -t, phi_m)
    if n_p == 0.0 or n_m == 0.0:
        raise SolverError(f"degenerate eigenvector at t={t}, λ={lam}")
    psi = phi_p / n_p
    psi_star = np.conjugate(phi_m) / n_m

    ref = reference_mode(n, j, t, grid.nodes)
    a = inner(grid, psi, ref)
    if abs(a) < 1e-10:
        # reference nearly orthogonal (strong coupling); anchor on the
        # largest sample instead so the phase stays deterministic
        k = int(np.argmax(np.abs(psi[:, 0])))
        a = psi[k, 0]
    rot = np.exp(-1j * np.angle(a))
    psi = psi * rot
    psi_star = psi_star * rot

    alpha = complex(pairing(grid, psi, np.conjugate(psi_star)))

    adj_mismatch = 0.0
    if verify_adjoint:
        spec_a = adjoint_potential(spec)
        batch_a = propagate(spec_a, np.array([np.conjugate(lam)]), grid.nodes)
        phi_a, _ = _phi_from_batch(batch_a.Y, batch_a.Y_pi,
                                   np.array([np.exp(1j * np.pi * np.conjugate(t))]),
                                   prefer_form=int(form_m[0]))
        phi_a = phi_a[0]
        target = np.conjugate(phi_m)
        scale = max(float(np.max(np.abs(target))), 1e-300)
        adj_mismatch = float(np.max(np.abs(phi_a - target)) / scale)
        if adj_mismatch > 1e-8:
            raise SolverError(
                f"conjugated partner disagrees with the adjoint-built "
                f"eigenfunction (mismatch {adj_mismatch:.2e})"
            )

    res = eigen_residual(spec, lam, grid, psi) if check_residual else 0.0
    return EigenTriple(n=n, j=j, t=t, lam=lam, alpha=alpha, psi=psi,
                       psi_star=psi_star, grid=grid, residual=res,
                       adjoint_mismatch=adj_mismatch)


# ---------------------------------------------------------------------------
# resolvent and Riesz projection


def resolvent_apply_batch(spec: PotentialSpec, t, lam_arr, f_vals: np.ndarray,
                          grid: PanelGrid, *, near_tol: float = 1e-13,
                          batch=None) -> np.ndarray:
    """(L_t − λ)⁻¹ f on the grid for a batch of λ.

    Variation of constants: y = Y(x)(u0 + G(x)) with G(x) = ∫₀ˣ Y⁻¹J⁻¹f ds
    and u0 = −(Y(π) − E)⁻¹ Y(π) G(π). The 2×2 determinant equals
    E·(2cos πt − F(λ)); a value below near_tol raises NearSingularError.
    """
    t = complex(t)
    lam_arr = np.atleast_1d(np.asarray(lam_arr, dtype=complex))
    if batch is None:
        batch = propagate(spec, lam_arr, grid.nodes)
    Y = batch.Y
    Y_pi = batch.Y_pi
    E = np.exp(1j * np.pi * t)

    F = Y_pi[:, 0, 0] + Y_pi[:, 1, 1]
    gap = np.abs(2.0 * np.cos(np.pi * t) - F)
    if np.any(gap < near_tol):
        raise NearSingularError(
            "resolvent contour touches the spectrum of the fiber",
            delta_abs=float(np.min(gap)),
        )

    # Y⁻¹ by adjugate (det Y = 1), applied to J⁻¹ f
    jf = f_vals @ _J_INV.T
    Yinv = np.empty_like(Y)
    Yinv[..., 0, 0] = Y[..., 1, 1]
    Yinv[..., 0, 1] = -Y[..., 0, 1]
    Yinv[..., 1, 0] = -Y[..., 1, 0]
    Yinv[..., 1, 1] = Y[..., 0, 0]
    V = np.einsum("lxab,xb->lxa", Yinv, jf)
    G = np.moveaxis(cumulative_integral(grid, np.moveaxis(V, -1, 0)), 0, -1)
    # G at the right endpoint comes from the full-period weights; the last
    # grid node is interior to its panel and must not stand in for x = π
    G_pi = np.einsum("lxa,x->la", V, grid.weights)

    M = Y_pi - E * np.eye(2)
    detM = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    Minv = np.empty_like(M)
    Minv[:, 0, 0] = M[:, 1, 1]
    Minv[:, 0, 1] = -M[:, 0, 1]
    Minv[:, 1, 0] = -M[:, 1, 0]
    Minv[:, 1, 1] = M[:, 0, 0]
    Minv = Minv / detM[:, None, None]
    rhs = np.einsum("lab,lb->la", Y_pi, G_pi)
    u0 = -np.einsum("lab,lb->la", Minv, rhs)

    return np.einsum("lxab,lxb->lxa", Y, u0[:, None, :] + G)


def resolvent_apply(spec: PotentialSpec, t, lam, f_vals: np.ndarray,
                    grid: PanelGrid, **kw) -> np.ndarray:
    return resolvent_apply_batch(spec, t, np.array([complex(lam)]), f_vals,
                                 grid, **kw)[0]


def total_projection(spec: PotentialSpec, t, f_vals: np.ndarray,
                     center, radius: float, grid: PanelGrid,
                     tol: float = 1e-10) -> np.ndarray:
    """Riesz projection −(2πi)⁻¹ ∮ (L_t − λ)⁻¹ f dλ over the circle."""

    def fn(z):
        vals = resolvent_apply_batch(spec, t, z, f_vals, grid)
        return np.moveaxis(vals, 0, -1)

    total = adaptive_circle_sum(fn, complex(center), float(radius), tol=tol)
    return -total / (2j * np.pi)
