"""Multiple Bloch eigenvalues and their classification.

A critical point ν of the discriminant (F'(ν) = 0) that is also an eigenvalue
at some quasimomentum marks a collision of spectral branches. The associated
exceptional quasimomenta solve 2cos(πt) = F(ν). Collisions at interior real t
are spectral singularities; collisions at the degenerate quasimomenta t = 0, 1
are only candidates for worse behavior, decided here empirically through the
blow-up rate β of 1/|α(t)| along approach rays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bloch
from .errors import ContourError, ProbeFailure, ValidationError
from .fundsol import discriminant_batch, fprime_batch, panel_grid_for
from .potential import PotentialSpec
from .quadrature import winding_number

__all__ = [
    "SingularityRecord",
    "critical_points",
    "exceptional_quasimomenta",
    "classify",
    "alpha_exponent",
    "fit_blowup_exponent",
    "scan_window",
    "DEFAULT_RADII",
]

DEFAULT_RADII = tuple(np.geomspace(1e-2, 1e-5, 10))
ENDPOINT_TOL = 1e-9


@dataclass(frozen=True)
class SingularityRecord:
    """Classification of one (t0, λ0) eigenvalue collision candidate."""

    t0: complex
    lambda0: complex
    m: int
    kind: str  # simple | spectral_singularity | ess_candidate | not_ess
    exponent_fit: float | None = None
    fit_residual: float | None = None
    direction_dependent: bool = False
    evidence: tuple = field(default_factory=tuple)


# ---------------------------------------------------------------------------
# critical points of the discriminant


def _fprime_on_path(spec, z):
    return fprime_batch(spec, np.asarray(z, dtype=complex))


def _rect_samples(re0, re1, im0, im1, density):
    corners = [complex(re0, im0), complex(re1, im0),
               complex(re1, im1), complex(re0, im1)]
    zs = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        npts = max(8, int(np.ceil(abs(b - a) * density)))
        zs.append(a + (b - a) * np.arange(npts) / npts)
    return np.concatenate(zs)


def _count_fprime_zeros(spec, re0, re1, im0, im1, min_abs, density0=16.0,
                        max_doublings=5) -> int:
    density = density0
    for _ in range(max_doublings + 1):
        z = _rect_samples(re0, re1, im0, im1, density)
        vals = _fprime_on_path(spec, z)
        if float(np.min(np.abs(vals))) < min_abs:
            raise ContourError(
                "window boundary passes too close to a zero of F'",
                min_abs=float(np.min(np.abs(vals))),
            )
        try:
            return winding_number(vals)
        except ContourError:
            density *= 2
    raise ContourError("F' winding did not stabilize on the window boundary")


def _newton_fprime(spec, z0: complex, max_iter: int = 40) -> complex:
    lam = complex(z0)
    for _ in range(max_iter):
        h = 1e-6 * max(1.0, abs(lam))
        fp = _fprime_on_path(spec, [lam])[0]
        fpp = (_fprime_on_path(spec, [lam + h])[0]
               - _fprime_on_path(spec, [lam - h])[0]) / (2 * h)
        if fpp == 0:
            break
        step = fp / fpp
        if abs(step) > 0.5:
            step *= 0.5 / abs(step)
        lam -= step
        if abs(step) < 1e-13 * max(1.0, abs(lam)):
            break
    return lam


def critical_points(spec: PotentialSpec, re0: float, re1: float,
                    im0: float, im1: float, *,
                    min_boundary: float = 1e-8,
                    resolution: float = 1e-9,
                    _depth: int = 0) -> list[complex]:
    """All zeros of F' in the open rectangle, repeated with multiplicity.

    The window boundary must stay away from zeros (boundary-zero ContourError
    otherwise); completeness is inherited from the argument-principle count
    that drives the recursive subdivision.
    """
    total = _count_fprime_zeros(spec, re0, re1, im0, im1, min_boundary)
    if total == 0:
        return []
    w, hgt = re1 - re0, im1 - im0
    if total == 1 or max(w, hgt) < resolution or _depth > 40:
        z0 = _newton_fprime(spec, complex(re0 + w / 2.0, im0 + hgt / 2.0))
        if not (re0 <= z0.real <= re1 and im0 <= z0.imag <= im1):
            z0 = complex(re0 + w / 2.0, im0 + hgt / 2.0)
        return [z0] * total
    # split the longer side; nudge the cut if it lands on a zero
    out: list[complex] = []
    for shift in (0.0, 0.017, -0.023, 0.041):
        cut = (re0 + re1) / 2.0 + shift * w if w >= hgt else (im0 + im1) / 2.0 + shift * hgt
        boxes = ([(re0, cut, im0, im1), (cut, re1, im0, im1)] if w >= hgt
                 else [(re0, re1, im0, cut), (re0, re1, cut, im1)])
        try:
            out = []
            for bx in boxes:
                out.extend(critical_points(spec, *bx, min_boundary=min_boundary,
                                           resolution=resolution, _depth=_depth + 1))
            break
        except ContourError:
            if shift == 0.041:
                raise
            continue
    if len(out) != total:
        raise ContourError(
            f"subdivision lost zeros of F': found {len(out)}, boundary count {total}"
        )
    return out


# ---------------------------------------------------------------------------
# exceptional quasimomenta


def _to_fundamental(t: complex) -> complex:
    """Shift by an even integer into the strip Re t ∈ (−1, 1]."""
    k = np.floor((t.real + 1.0) / 2.0)
    w = t - 2.0 * k
    if w.real <= -1.0 + 1e-15:
        w += 2.0
    return w


def exceptional_quasimomenta(spec: PotentialSpec, nu, *,
                             tol: float = 1e-12) -> list[complex]:
    """Quasimomenta t in (−1, 1] with 2cos(πt) = F(ν), i.e. where ν belongs
    to the fiber spectrum. Both arccos branches are returned (they merge at
    the degenerate values t = 0, 1)."""
    F = complex(discriminant_batch(spec, np.array([complex(nu)]))[0])
    t0 = complex(np.arccos(np.complex128(F / 2.0)) / np.pi)
    out: list[complex] = []
    for cand in (t0, -t0):
        w = _to_fundamental(cand)
        # snap roundoff-sized offsets onto the degenerate quasimomenta; a
        # collision at F(ν) = ±2 otherwise acquires a spurious ~1e-8 offset
        # through the square-root behavior of arccos at ±1
        for snap in (0.0, 1.0):
            if abs(w - snap) < 1e-7 or abs(w + snap) < 1e-7:
                w = complex(snap)
        if all(abs(w - u) > 1e-12 for u in out):
            resid = abs(F - 2.0 * np.cos(np.pi * w))
            if resid > tol:
                raise ValidationError(
                    f"arccos branch failed the residual check at t={w}: {resid:.2e}"
                )
            out.append(w)
    return out


# ---------------------------------------------------------------------------
# blow-up exponent of 1/|alpha|


def fit_blowup_exponent(radii, alpha_values) -> tuple[float, float]:
    """Least-squares slope β of log(1/|α|) against log(1/r).

    Returns (β, fit residual): the residual is the RMS deviation of the fit
    in log space. A clean power law α ∝ r^β fits with residual ≈ 0.
    """
    r = np.asarray(radii, dtype=float)
    a = np.abs(np.asarray(alpha_values, dtype=complex))
    if len(r) < 2 or np.any(a == 0):
        raise ValidationError("need ≥ 2 probe radii with nonzero α")
    x = np.log(1.0 / r)
    y = np.log(1.0 / a)
    beta, c0 = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (beta * x + c0)) ** 2)))
    return float(beta), resid


def _probe_direction(spec, t0, theta, n, j, radii, grid):
    """α along t = t0 + r·e^{iθ}, following one branch by continuation."""
    from . import eigensystem

    samples = []
    lam_prev = None
    for r in sorted(radii, reverse=True):
        tt = complex(t0) + r * np.exp(1j * theta)
        if lam_prev is None:
            ev = bloch.solve_eigenvalue(spec, tt, n, j, allow_degenerate=True)
            lam = ev.lam
        else:
            arr, res, conv = bloch.newton_refine(spec, tt, np.array([lam_prev]))
            if not conv[0]:
                raise ProbeFailure(f"eigenvalue continuation failed at probe t={tt}")
            lam = complex(arr[0])
        fp = abs(fprime_batch(spec, np.array([lam]))[0])
        if fp < 1e-13:
            raise ProbeFailure(f"probe eigenvalue at t={tt} is not simple")
        alpha = eigensystem.alpha_at(spec, tt, lam, grid)
        samples.append((tt, alpha))
        lam_prev = lam
    return samples


def alpha_exponent(spec: PotentialSpec, t0, n: int, j: int, *,
                   radii=DEFAULT_RADII, directions=None,
                   grid=None) -> tuple[float, float]:
    """Fitted β in 1/|α(t)| ∝ |t − t0|^{−β} along approach rays.

    Probes at t = t0 + r·e^{iθ} for each direction; slopes are averaged.
    Returns (β, fit residual). Use _alpha_exponent_full for the per-direction
    evidence and the direction-dependence flag.
    """
    beta, resid, _, _ = _alpha_exponent_full(spec, t0, n, j, radii=radii,
                                             directions=directions, grid=grid)
    return beta, resid


def _alpha_exponent_full(spec, t0, n, j, *, radii=DEFAULT_RADII,
                         directions=None, grid=None):
    t0 = complex(t0)
    if directions is None:
        interior = min(abs(t0), abs(t0 - 1.0), abs(t0 + 1.0)) > ENDPOINT_TOL
        directions = (0.0, np.pi / 2.0, np.pi) if interior else (0.0, np.pi / 2.0)
    if grid is None:
        center_scale = max(2.0 * abs(n) + 2.0, abs(t0) + 2.0)
        grid = panel_grid_for(spec, center_scale)
    slopes = []
    resids = []
    evidence = []
    for theta in directions:
        samples = _probe_direction(spec, t0, theta, n, j, radii, grid)
        b, rr = fit_blowup_exponent([abs(t - t0) for t, _ in samples],
                                    [a for _, a in samples])
        slopes.append(b)
        resids.append(rr)
        evidence.extend(samples)
    beta = float(np.mean(slopes))
    direction_dependent = (max(slopes) - min(slopes)) > 0.05
    return beta, float(max(resids)), direction_dependent, tuple(evidence)


# ---------------------------------------------------------------------------
# classification


def _branch_label_near(spec, t0, lambda0, r_start) -> tuple[int, int]:
    """Deterministic (n, j) whose branch passes nearest λ0 at t0 + r_start."""
    t0 = complex(t0)
    tt = t0 + r_start
    best = None
    for j in (1, 2):
        sgn = 1.0 if j == 1 else -1.0
        n_guess = int(np.round((complex(lambda0).real - sgn * tt.real) / 2.0))
        for n in (n_guess - 1, n_guess, n_guess + 1):
            try:
                ev = bloch.solve_eigenvalue(spec, tt, n, j, allow_degenerate=True)
            except Exception:
                continue
            d = abs(ev.lam - complex(lambda0))
            if best is None or d < best[0]:
                best = (d, n, j)
    if best is None:
        raise ProbeFailure(f"no branch found near λ={lambda0} at t={tt}")
    return best[1], best[2]


def classify(spec: PotentialSpec, t0, lambda0, *,
             radii=DEFAULT_RADII, beta_threshold: float = 1.0,
             res_tol: float = 1e-8) -> SingularityRecord:
    """SingularityRecord for the eigenvalue λ0 of the fiber at t0.

    m = 1 is recorded as simple. A multiple eigenvalue at interior t0 is a
    spectral singularity. At the degenerate quasimomenta t0 ∈ {0, 1} the
    record becomes ess_candidate when the fitted blow-up exponent reaches
    beta_threshold and not_ess otherwise; β ≈ 0 at a diagonalizable collision
    and β ≥ 1 at a defective one, so the default threshold 1.0 separates
    them with a wide margin.
    """
    t0 = complex(t0)
    lambda0 = complex(lambda0)
    G = abs(complex(discriminant_batch(spec, np.array([lambda0]))[0])
            - 2.0 * np.cos(np.pi * t0))
    if G > res_tol:
        raise ValidationError(
            f"λ0={lambda0} is not an eigenvalue at t0={t0} (residual {G:.2e})"
        )
    m = bloch.multiplicity(spec, t0, lambda0)
    if m == 1:
        return SingularityRecord(t0=t0, lambda0=lambda0, m=1, kind="simple")

    n, j = _branch_label_near(spec, t0, lambda0, max(radii))
    beta, resid, dir_dep, evidence = _alpha_exponent_full(
        spec, t0, n, j, radii=radii
    )
    endpoint = min(abs(t0), abs(t0 - 1.0), abs(t0 + 1.0)) <= ENDPOINT_TOL
    if not endpoint:
        kind = "spectral_singularity"
    elif beta >= beta_threshold:
        kind = "ess_candidate"
    else:
        kind = "not_ess"
    return SingularityRecord(t0=t0, lambda0=lambda0, m=m, kind=kind,
                             exponent_fit=beta, fit_residual=resid,
                             direction_dependent=dir_dep, evidence=evidence)


def scan_window(spec: PotentialSpec, re0: float, re1: float,
                im0: float, im1: float, **classify_kw) -> list[SingularityRecord]:
    """Critical points in the window, expanded into classified records, one
    per exceptional quasimomentum of each distinct critical value."""
    nus = critical_points(spec, re0, re1, im0, im1)
    distinct: list[complex] = []
    for nu in nus:
        if all(abs(nu - u) > 1e-9 for u in distinct):
            distinct.append(nu)
    records = []
    for nu in distinct:
        for tk in exceptional_quasimomenta(spec, nu):
            records.append(classify(spec, tk, nu, **classify_kw))
    return records
