"""Bloch eigenvalues: roots of F(λ) = 2cos(πt) with asymptotic labeling.

Labels follow the zero-potential spectrum: branch (n, 1) lives near 2n + t and
(n, 2) near 2n − t, with the central block (small |n|) indexed by homotopy
continuation from the zero potential when direct Newton assignment is
ambiguous. Counting is always validated by the argument principle; nothing is
trusted to Newton alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    CollisionError,
    CompletenessError,
    ContourError,
    LocalizationError,
    SolverError,
    ValidationError,
)
from .fundsol import (
    MonodromyCache,
    discriminant_batch,
    fprime_batch,
    panel_grid_for,
    propagate,
)
from .potential import PotentialSpec, scale_potential
from .quadrature import adaptive_circle_sum, circle_nodes, winding_number

__all__ = [
    "BlochEigenvalue",
    "QuasimomentumDomain",
    "GUARD_RADIUS",
    "RESIDUAL_TOL",
    "CONTOUR_MIN_ABS",
    "asymptotic_center",
    "solve_eigenvalue",
    "count_roots_in_disk",
    "count_roots_in_rectangle",
    "roots_in_disk",
    "root_moment",
    "spectrum_window",
    "multiplicity",
    "track_branch",
    "calibrate_localization",
    "newton_refine",
]

GUARD_RADIUS = 1e-6
RESIDUAL_TOL = 1e-10
CONTOUR_MIN_ABS = 1e-8


@dataclass(frozen=True)
class BlochEigenvalue:
    """One labeled eigenvalue of the quasi-periodic problem at quasimomentum t."""

    n: int
    j: int
    t: complex
    lam: complex
    residual: float
    multiplicity: int = 1


@dataclass(frozen=True)
class QuasimomentumDomain:
    """Strip D_h = {−h ≤ Re t ≤ 2−h, |Im t| ≤ 2h} with the guard disks
    U_h(0), U_h(1) around the degenerate quasimomenta removed on request."""

    h: float

    def __post_init__(self):
        if not (0.0 < self.h < 0.1):
            raise ValidationError("h must lie strictly inside (0, 1/10)")

    def contains(self, t) -> bool:
        t = complex(t)
        return (-self.h <= t.real <= 2.0 - self.h) and abs(t.imag) <= 2.0 * self.h

    def contains_regular(self, t) -> bool:
        """Membership in D_h(0, 1): the strip minus the degenerate disks."""
        t = complex(t)
        if not self.contains(t):
            return False
        return abs(t) > self.h and abs(t - 1.0) > self.h and abs(t - 2.0) > self.h

    def near_degenerate(self, t, radius: float = GUARD_RADIUS) -> bool:
        t = complex(t)
        return min(abs(t - round(t.real)), abs(t - 2.0), abs(t + 0.0)) < radius


def asymptotic_center(n: int, j: int, t) -> complex:
    if j == 1:
        return 2.0 * n + complex(t)
    if j == 2:
        return 2.0 * n - complex(t)
    raise ValidationError(f"branch index j must be 1 or 2, got {j!r}")


def _char_target(t) -> complex:
    return 2.0 * np.cos(np.pi * complex(t))


def _guard_check(t, allow_degenerate: bool):
    t = complex(t)
    if allow_degenerate:
        return
    if abs(t - np.round(t.real)) < GUARD_RADIUS:
        raise ValidationError(
            f"t={t} is inside the guard disk of an integer quasimomentum; "
            "pass allow_degenerate=True (degenerate machinery) if intended"
        )


# ---------------------------------------------------------------------------
# Newton iteration (vectorized over branches)


def newton_refine(spec: PotentialSpec, t, lam0, res_tol: float = RESIDUAL_TOL,
                  max_iter: int = 40, step_cap: float = 0.75):
    """Vector Newton for F(λ) = 2cos(πt) from the guesses lam0.

    Returns (lam, residual, converged). One fundamental-solution batch per
    iteration provides both F (monodromy trace) and F' (quadrature formula).
    """
    lam = np.atleast_1d(np.asarray(lam0, dtype=complex)).copy()
    target = _char_target(t)
    res = np.full(lam.shape, np.inf)
    converged = np.zeros(lam.shape, dtype=bool)
    grid = panel_grid_for(spec, float(np.max(np.abs(lam))) + 2.0)
    for _ in range(max_iter):
        batch = propagate(spec, lam, grid.nodes)
        F = batch.Y_pi[:, 0, 0] + batch.Y_pi[:, 1, 1]
        G = F - target
        res = np.abs(G)
        newly = res <= res_tol
        converged |= newly
        if np.all(converged):
            break
        Fp = fprime_batch(spec, lam, grid=grid, batch=batch)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(Fp) > 0, G / Fp, 0.0)
        big = np.abs(step) > step_cap
        step = np.where(big, step * (step_cap / np.where(big, np.abs(step), 1.0)), step)
        lam = np.where(converged, lam, lam - step)
    return lam, res, converged


# ---------------------------------------------------------------------------
# argument-principle primitives


def count_roots_in_disk(spec: PotentialSpec, t, center, radius: float,
                        cache: MonodromyCache | None = None,
                        min_abs: float = CONTOUR_MIN_ABS,
                        k0: int = 64, kmax: int = 4096) -> int:
    """Number of eigenvalues (with multiplicity) inside |λ − center| < radius."""
    target = _char_target(t)
    k = k0
    while True:
        z, _ = circle_nodes(complex(center), float(radius), k)
        G = discriminant_batch(spec, z, cache=cache) - target
        m = float(np.min(np.abs(G)))
        if m < min_abs:
            raise ContourError(
                f"contour |λ-{center}|={radius} passes within {m:.2e} of a root",
                min_abs=m,
            )
        try:
            return winding_number(G)
        except ContourError:
            if k >= kmax:
                raise
            k *= 2


def count_roots_in_rectangle(spec: PotentialSpec, t, re0, re1, im0, im1,
                             cache: MonodromyCache | None = None,
                             min_abs: float = CONTOUR_MIN_ABS,
                             density0: float = 8.0, max_doublings: int = 5) -> int:
    corners = [complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)]
    target = _char_target(t)
    density = density0
    for _ in range(max_doublings + 1):
        zs = []
        for a, b in zip(corners, corners[1:] + corners[:1]):
            npts = max(8, int(np.ceil(abs(b - a) * density)))
            zs.append(a + (b - a) * np.arange(npts) / npts)
        z = np.concatenate(zs)
        G = discriminant_batch(spec, z, cache=cache) - target
        m = float(np.min(np.abs(G)))
        if m < min_abs:
            raise ContourError("rectangle edge too close to a root", min_abs=m)
        try:
            return winding_number(G)
        except ContourError:
            density *= 2
    raise ContourError("rectangle winding did not stabilize")


def root_moment(spec: PotentialSpec, t, center, radius: float,
                tol: float = 1e-11) -> complex:
    """(2πi)⁻¹ ∮ λ F'(λ)/(F(λ)−2cos πt) dλ = sum of enclosed roots
    (with multiplicity)."""
    target = _char_target(t)

    def fn(z):
        F = discriminant_batch(spec, z)
        Fp = fprime_batch(spec, z)
        return z * Fp / (F - target)

    total = adaptive_circle_sum(fn, complex(center), float(radius), tol=tol)
    return complex(total / (2j * np.pi))


def _pair_from_moments(spec: PotentialSpec, t, center, radius: float):
    """Both roots of a two-root disk from centered contour moments.

    With w = λ − center, the first two moments give w₁ + w₂ and w₁² + w₂²,
    so the pair solves a quadratic. Centering keeps the tiny discriminant of
    a nearly double pair free of cancellation."""
    target = _char_target(t)
    center = complex(center)

    def fn(z):
        F = discriminant_batch(spec, z)
        Fp = fprime_batch(spec, z)
        g = Fp / (F - target)
        w = z - center
        return np.stack([w * g, w * w * g])

    m = adaptive_circle_sum(fn, center, float(radius), tol=1e-12) / (2j * np.pi)
    s, q = complex(m[0]), complex(m[1])
    root = np.sqrt(complex(2.0 * q - s * s))
    return center + (s + root) / 2.0, center + (s - root) / 2.0


def roots_in_disk(spec: PotentialSpec, t, center, radius: float,
                  depth: int = 0, max_depth: int = 9) -> list[tuple[complex, int]]:
    """All eigenvalues in a disk as (root, multiplicity), by recursive
    subdivision and moment centroids, Newton-polished where simple."""
    center = complex(center)
    try:
        m = count_roots_in_disk(spec, t, center, radius)
    except ContourError:
        if depth >= max_depth:
            raise
        return roots_in_disk(spec, t, center, radius * 1.13, depth + 1, max_depth)
    if m == 0:
        return []
    centroid = root_moment(spec, t, center, radius) / m
    if m == 1:
        lam, res, conv = newton_refine(spec, t, np.array([centroid]))
        if not conv[0]:
            raise SolverError(f"polish failed near {centroid}", trace=(centroid,))
        return [(complex(lam[0]), 1)]
    if m == 2:
        # the common case: split (or confirm) the pair from centered moments
        a, b = _pair_from_moments(spec, t, center, radius)
        if abs(a - b) < 1e-8:
            return [(_polish_multiple(spec, t, 0.5 * (a + b), 2), 2)]
        lam, _, conv = newton_refine(spec, t, np.array([a, b]))
        if conv.all() and abs(lam[0] - lam[1]) > 1e-8:
            return [(complex(lam[0]), 1), (complex(lam[1]), 1)]
    # try to separate: is everything concentrated at the centroid?
    if depth < max_depth:
        try:
            r_small = radius / 6.0
            if count_roots_in_disk(spec, t, centroid, r_small) == m:
                if r_small < 1e-7:
                    return [(_polish_multiple(spec, t, centroid, m), m)]
                return roots_in_disk(spec, t, centroid, r_small, depth + 1, max_depth)
        except ContourError:
            pass
        # quadrant subdivision with overlap, dedupe afterwards; sub-disks of
        # radius 0.75 r at offsets r/2 cover the whole disk (0.62 r left a
        # hole at the center, exactly where a symmetric pair's centroid sits)
        found: list[tuple[complex, int]] = []
        for da in (1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j):
            sub = center + da * radius / 2.0
            try:
                for root, mu in roots_in_disk(spec, t, sub, radius * 0.75, depth + 1, max_depth):
                    if all(abs(root - r0) > 1e-7 for r0, _ in found):
                        found.append((root, mu))
            except ContourError:
                continue
        if sum(mu for _, mu in found) == m:
            return found
    return [(_polish_multiple(spec, t, centroid, m), m)]


def _polish_multiple(spec: PotentialSpec, t, lam0: complex, m: int) -> complex:
    """Refine an m-fold root. For m = 2 the root is a simple zero of F', so
    Newton on F' (finite-difference second derivative) converges fast; higher
    m keeps the contour centroid, re-centered once on a smaller circle."""
    if m == 2:
        lam = complex(lam0)
        for _ in range(30):
            h = 1e-6 * max(1.0, abs(lam))
            fp = fprime_batch(spec, np.array([lam]))[0]
            fpp = (
                fprime_batch(spec, np.array([lam + h]))[0]
                - fprime_batch(spec, np.array([lam - h]))[0]
            ) / (2 * h)
            if abs(fpp) == 0:
                break
            step = fp / fpp
            lam -= step
            if abs(step) < 1e-13 * max(1.0, abs(lam)):
                break
        # F' also vanishes at critical points that are not double roots;
        # refuse to report one of those as an eigenvalue
        if abs(discriminant_batch(spec, np.array([lam]))[0] - _char_target(t)) > 1e-7:
            raise SolverError(
                f"F' zero at {lam} is not a double root at t={t}", trace=(lam0,)
            )
        return lam
    try:
        return root_moment(spec, t, lam0, 1e-3) / m
    except ContourError:
        return complex(lam0)


# ---------------------------------------------------------------------------
# single labeled eigenvalue


def solve_eigenvalue(spec: PotentialSpec, t, n: int, j: int, *,
                     allow_degenerate: bool = False,
                     localization: tuple[int, float] | None = None,
                     res_tol: float = RESIDUAL_TOL) -> BlochEigenvalue:
    """Eigenvalue labeled (n, j) at quasimomentum t.

    Newton from the asymptotic center 2n ± t with argument-principle fallback.
    If ``localization`` = (N_h, M_h) is supplied (see calibrate_localization)
    and |n| > N_h, the result must lie in |λ − center| ≤ max(M_h/|n|, 0.4).
    """
    _guard_check(t, allow_degenerate)
    center = asymptotic_center(n, j, t)
    lam, res, conv = newton_refine(spec, t, np.array([center]), res_tol=res_tol)
    lam0 = complex(lam[0])
    ok = bool(conv[0])
    if not ok or abs(lam0 - center) > 0.9:
        roots = roots_in_disk(spec, t, center, 0.45)
        if not roots:
            raise SolverError(
                f"no eigenvalue found near center {center} for (n={n}, j={j})",
                trace=(center, lam0),
            )
        lam0 = min((r for r, _ in roots), key=lambda r: abs(r - center))
        G = discriminant_batch(spec, np.array([lam0]))[0] - _char_target(t)
        res = np.array([abs(G)])
    mult = 1
    if localization is not None and abs(n) > localization[0]:
        rad = max(localization[1] / abs(n), 0.4)
        if abs(lam0 - center) > rad:
            raise LocalizationError(
                f"eigenvalue {lam0} outside localization disk of radius {rad:.3g} "
                f"around {center}"
            )
    return BlochEigenvalue(n=n, j=j, t=complex(t), lam=lam0,
                           residual=float(res[0]), multiplicity=mult)


# ---------------------------------------------------------------------------
# windows with homotopy labeling and completeness checks


def _window_labels(N: int) -> list[tuple[int, int]]:
    return [(n, j) for n in range(-N, N + 1) for j in (1, 2)]


def _window_starts(labels, t) -> np.ndarray:
    """Newton starting points. Labels whose asymptotic centers (nearly)
    coincide - the integer-t degeneracies - get opposite imaginary nudges so
    the iterates can split toward distinct roots."""
    centers = np.array([asymptotic_center(n, j, t) for n, j in labels])
    starts = centers.copy()
    for i, (n, j) in enumerate(labels):
        share = np.abs(centers - centers[i]) < 1e-3
        if np.sum(share) > 1:
            starts[i] = centers[i] + (0.3j if j == 1 else -0.3j)
    return starts


def _result_groups(lam, tol: float = 1e-6) -> list[list[int]]:
    groups: list[list[int]] = []
    used = np.zeros(len(lam), dtype=bool)
    for i in range(len(lam)):
        if used[i]:
            continue
        members = [i]
        used[i] = True
        for k in range(i + 1, len(lam)):
            if not used[k] and abs(lam[k] - lam[i]) < tol:
                members.append(k)
                used[k] = True
        groups.append(members)
    return groups


def _repair_clusters(spec, t, labels, lam) -> np.ndarray | None:
    """When several labels collapse onto one root, hunt the neighborhood for
    the missing eigenvalues and re-match greedily by center distance."""
    lam = lam.copy()
    changed = False
    for members in _result_groups(lam):
        g = len(members)
        if g == 1:
            continue
        centroid = complex(np.mean(lam[members]))
        spread = max(abs(lam[k] - centroid) for k in members)
        try:
            cnt = count_roots_in_disk(spec, t, centroid, max(4 * spread, 1e-3))
        except ContourError:
            return None
        if cnt >= g:
            continue
        try:
            slots = []
            for root, m in roots_in_disk(spec, t, centroid, 0.55):
                slots.extend([root] * m)
        except (ContourError, SolverError):
            return None
        if len(slots) < g:
            return None
        taken = [False] * len(slots)
        for k in members:
            c = asymptotic_center(labels[k][0], labels[k][1], t)
            best = min((i for i in range(len(slots)) if not taken[i]),
                       key=lambda i: abs(slots[i] - c))
            taken[best] = True
            lam[k] = slots[best]
            changed = True
    return lam if changed else None


def _rectangle_plan(t, N: int) -> tuple[float, int]:
    """Pick the vertical edge |Re λ| = R furthest from the asymptotic centers
    2n ± Re t and count how many centers (over all n) fall strictly inside.
    This is the expected argument-principle count for moderate potentials."""
    tr = complex(t).real
    fr = tr % 2.0
    d_odd = abs(fr - 1.0)
    d_even = min(fr, 2.0 - fr)
    R = (2 * N + 1.0) if d_odd >= d_even else (2 * N + 2.0)
    expected = 0
    for sgn in (+1.0, -1.0):
        lo = int(np.floor((-R - sgn * tr) / 2.0))
        hi = int(np.ceil((R - sgn * tr) / 2.0))
        expected += sum(1 for n in range(lo, hi + 1) if abs(2 * n + sgn * tr) < R)
    return R, expected


def _validate_window(spec, t, labels, lam, res, conv, res_tol):
    """Checks the Newton assignment and resolves coincident clusters.

    Newton stalls at ~sqrt(tol/F'') from a double root, so labels landing
    within 2e-4 of each other are re-solved from contour moments: a genuine
    double root is polished on F', a nearly degenerate simple pair is split
    exactly by the quadratic of its centered moments.

    Returns (lam, multiplicities) or None if the assignment is invalid.
    """
    if not np.all(conv):
        return None
    if np.any(res > res_tol * 10):
        return None
    lam = lam.copy()
    mult = [1] * len(labels)
    fp = fprime_batch(spec, lam)
    for members in _result_groups(lam, tol=2e-4):
        g = len(members)
        if g == 1:
            # a boundary label can sit on a double root whose partner label
            # is outside the window; small F' flags it for the same treatment
            k = members[0]
            if abs(fp[k]) < 1e-3:
                try:
                    cnt = count_roots_in_disk(spec, t, lam[k], 1e-3)
                except ContourError:
                    return None
                if cnt == 2:
                    a, b = _pair_from_moments(spec, t, lam[k], 1e-3)
                    if abs(a - b) < 1e-8:
                        try:
                            lam[k] = _polish_multiple(spec, t, lam[k], 2)
                        except SolverError:
                            return None
                        mult[k] = 2
                    else:
                        c = asymptotic_center(labels[k][0], labels[k][1], t)
                        lam[k] = a if abs(a - c) <= abs(b - c) else b
            continue
        centroid = complex(np.mean(lam[members]))
        spread = max(abs(lam[k] - centroid) for k in members)
        r_c = max(1e-3, 4.0 * spread)
        try:
            cnt = count_roots_in_disk(spec, t, centroid, r_c)
        except ContourError:
            return None
        if cnt != g:
            return None
        if g == 2:
            a, b = _pair_from_moments(spec, t, centroid, r_c)
            if abs(a - b) < 1e-8:
                try:
                    lam_star = _polish_multiple(spec, t, centroid, 2)
                except SolverError:
                    return None
                for k in members:
                    lam[k] = lam_star
                    mult[k] = 2
            else:
                k0, k1 = members
                if abs(lam[k0] - a) + abs(lam[k1] - b) > abs(lam[k0] - b) + abs(lam[k1] - a):
                    a, b = b, a
                ref, _, _ = newton_refine(spec, t, np.array([a, b]), max_iter=6)
                lam[k0], lam[k1] = complex(ref[0]), complex(ref[1])
        else:
            try:
                lam_star = _polish_multiple(spec, t, centroid, g)
            except SolverError:
                return None
            for k in members:
                lam[k] = lam_star
                mult[k] = g
    G = discriminant_batch(spec, lam) - _char_target(t)
    if np.any(np.abs(G) > res_tol * 10):
        return None
    return lam, mult


def spectrum_window(spec: PotentialSpec, t, N: int, *,
                    allow_degenerate: bool = False,
                    res_tol: float = RESIDUAL_TOL,
                    verify_count: bool = True) -> list[BlochEigenvalue]:
    """All eigenvalues λ_{n,j}(t) with |n| ≤ N, labeled by continuation from
    the zero potential. Completeness is certified by an argument-principle
    count over an enclosing rectangle."""
    _guard_check(t, allow_degenerate)
    t = complex(t)
    labels = _window_labels(N)
    starts = _window_starts(labels, t)

    def _solve_from(start_arr):
        lam, res, conv = newton_refine(spec, t, start_arr, res_tol=res_tol)
        resolved = _validate_window(spec, t, labels, lam, res, conv, res_tol)
        if resolved is None and np.all(conv):
            repaired = _repair_clusters(spec, t, labels, lam)
            if repaired is not None:
                lam, res, conv = newton_refine(spec, t, repaired, res_tol=res_tol)
                resolved = _validate_window(spec, t, labels, lam, res, conv, res_tol)
        return resolved

    resolved = _solve_from(starts)

    if resolved is None:
        for steps in (8, 16, 32, 64):
            s_grid = np.linspace(0.0, 1.0, steps + 1)[1:]
            cur = starts.copy()
            good = True
            for s in s_grid[:-1]:
                spec_s = scale_potential(spec, float(s))
                cur, _, conv = newton_refine(spec_s, t, cur, res_tol=res_tol)
                if not np.all(conv):
                    good = False
                    break
            if good:
                resolved = _solve_from(cur)
                if resolved is not None:
                    break
        if resolved is None:
            raise CompletenessError(
                f"could not assign {len(labels)} eigenvalue labels at t={t}"
            )
    lam, mult = resolved
    res = np.abs(discriminant_batch(spec, lam) - _char_target(t))

    if verify_count:
        R, expected = _rectangle_plan(t, N)
        ymax = abs(t.imag) + 1.0
        tries = 0
        while True:
            try:
                total = count_roots_in_rectangle(spec, t, -R, R, -ymax, ymax)
                break
            except ContourError:
                tries += 1
                ymax *= 1.37
                if tries > 4:
                    raise
        if total != expected:
            raise CompletenessError(
                f"window count mismatch at t={t}: rectangle holds {total} roots, "
                f"expected {expected}"
            )

    out = []
    for (n, j), l, r, m in zip(labels, lam, res, mult):
        out.append(BlochEigenvalue(n=n, j=j, t=t, lam=complex(l),
                                   residual=float(r), multiplicity=int(m)))
    return out


# ---------------------------------------------------------------------------
# multiplicity of a located eigenvalue


def multiplicity(spec: PotentialSpec, t, lam0, start_radius: float = 0.05,
                 res_tol: float = 1e-8) -> int:
    """Algebraic multiplicity by consistent counts over shrinking disks."""
    lam0 = complex(lam0)
    G = abs(discriminant_batch(spec, np.array([lam0]))[0] - _char_target(t))
    if G > res_tol:
        raise ValidationError(f"λ={lam0} is not an eigenvalue at t={t} (|G|={G:.2e})")
    prev = None
    r = start_radius
    while r > 1e-6:
        try:
            cnt = count_roots_in_disk(spec, t, lam0, r)
        except ContourError:
            r *= 0.61
            continue
        if prev is not None and cnt == prev and cnt >= 1:
            return cnt
        prev = cnt
        r *= 0.5
    raise SolverError(f"multiplicity did not stabilize at λ={lam0}, t={t}")


# ---------------------------------------------------------------------------
# branch tracking along a quasimomentum path


def track_branch(spec: PotentialSpec, t_path, n: int, j: int, *,
                 res_tol: float = RESIDUAL_TOL,
                 collision_window: float = 1e-2,
                 collision_resolution: float = 1e-6,
                 max_halvings: int = 12) -> list[BlochEigenvalue]:
    """Continue λ_{n,j} along t_path with nearest-predictor matching.

    Steps are halved automatically when the correction jumps; a genuine
    approach of a second eigenvalue inside ``collision_window`` raises
    CollisionError whose bracket localizes the closest approach to
    ``collision_resolution``.
    """
    path = [complex(tt) for tt in t_path]
    if len(path) < 1:
        return []
    out = [solve_eigenvalue(spec, path[0], n, j, res_tol=res_tol)]

    def gap_at(tt, lam_guess):
        lam, _, conv = newton_refine(spec, tt, np.array([lam_guess]), res_tol=res_tol)
        if not conv[0]:
            return None, None
        lam = complex(lam[0])
        try:
            cnt = count_roots_in_disk(spec, tt, lam, collision_window)
        except ContourError:
            return lam, 0.0
        if cnt <= 1:
            return lam, None
        if cnt == 2:
            mom = root_moment(spec, tt, lam, collision_window)
            other = mom - lam
            return lam, abs(other - lam)
        return lam, 0.0

    def advance(t_from, lam_from, t_to, depth=0):
        pred = lam_from
        lam, res, conv = newton_refine(spec, t_to, np.array([pred]), res_tol=res_tol)
        lam0 = complex(lam[0])
        if (not conv[0]) or abs(lam0 - pred) > max(0.35, 2.5 * abs(t_to - t_from)):
            if depth >= max_halvings:
                raise SolverError(
                    f"branch ({n},{j}) lost between t={t_from} and {t_to}",
                    trace=(lam_from, lam0),
                )
            mid = 0.5 * (t_from + t_to)
            lam_mid = advance(t_from, lam_from, mid, depth + 1)
            return advance(mid, lam_mid, t_to, depth + 1)
        _, gap = gap_at(t_to, lam0)
        if gap is not None and gap < collision_resolution * 10:
            lo, hi = t_from, t_to
            while abs(hi - lo) > collision_resolution:
                mid = 0.5 * (lo + hi)
                _, gmid = gap_at(mid, lam0)
                if gmid is not None and gmid < collision_resolution * 10:
                    hi = mid
                else:
                    lo = mid
            raise CollisionError(
                f"branches collide near t={hi} while tracking ({n},{j})",
                bracket=(lo, hi),
            )
        return lam0

    for t_prev, t_next in zip(path[:-1], path[1:]):
        lam_next = advance(t_prev, out[-1].lam, t_next)
        G = abs(discriminant_batch(spec, np.array([lam_next]))[0] - _char_target(t_next))
        out.append(BlochEigenvalue(n=n, j=j, t=t_next, lam=lam_next,
                                   residual=float(G), multiplicity=1))
    return out


# ---------------------------------------------------------------------------
# empirical localization constants


@lru_cache(maxsize=32)
def _calibrate(spec: PotentialSpec, h: float, n_probe: int) -> tuple[int, float]:
    dom = QuasimomentumDomain(h)
    # separated probes: the sibling center 2n−t is ≥ 0.6 away, so a disk of
    # radius 0.4 around each center must hold exactly one root
    probes_sep = [0.3 + 0.0j, 0.5 + 1.5j * h, 0.7 - 1.5j * h]
    probes_sep = [p for p in probes_sep if dom.contains_regular(p)]
    worst_fail = 0
    devs: dict[int, float] = {}
    for tt in probes_sep:
        for n_abs in range(1, n_probe + 1):
            for n in (n_abs, -n_abs):
                for jj in (1, 2):
                    center = asymptotic_center(n, jj, tt)
                    try:
                        cnt = count_roots_in_disk(spec, tt, center, 0.4)
                    except ContourError:
                        cnt = -1
                    if cnt != 1:
                        worst_fail = max(worst_fail, n_abs)
                        continue
                    root = root_moment(spec, tt, center, 0.4)
                    dev = abs(n) * abs(root - center)
                    devs[n_abs] = max(devs.get(n_abs, 0.0), float(dev))
    N_h = worst_fail
    if N_h >= n_probe - 2:
        raise LocalizationError(
            f"localization did not stabilize below n={n_probe}; potential too "
            "strong for the probed range"
        )
    # edge probes at distance h from a degenerate quasimomentum: the sibling
    # centers are only 2h apart, so both roots are taken from one pair disk
    # around their common integer and matched to centers by proximity
    for tt in (h + 0.0j, 1.0 - h + 0.0j):
        d = abs(tt.real - round(tt.real))
        pair_slots: dict[int, list[complex] | None] = {}
        for n_abs in range(max(1, N_h + 1), n_probe + 1):
            for n in (n_abs, -n_abs):
                for jj in (1, 2):
                    center = asymptotic_center(n, jj, tt)
                    P = int(round(center.real))
                    if P not in pair_slots:
                        try:
                            found = roots_in_disk(spec, tt, P, d + 0.42)
                            pair_slots[P] = [r for r, m in found for _ in range(m)]
                        except ContourError:
                            pair_slots[P] = None
                    slots = pair_slots[P]
                    if not slots:
                        continue
                    root = min(slots, key=lambda r: abs(r - center))
                    dev = abs(n) * abs(root - center)
                    devs[n_abs] = max(devs.get(n_abs, 0.0), float(dev))
    tail = [dv for na, dv in devs.items() if na > N_h]
    M_h = 1.5 * max(tail) if tail else 1.0
    return N_h, float(M_h)


def calibrate_localization(spec: PotentialSpec, h: float,
                           n_probe: int = 12) -> tuple[int, float]:
    """Empirical localization constants (N(h), M(h)).

    N(h) is the smallest N such that for |n| > N every center 2n ± t (over
    well separated probe quasimomenta in the strip) carries a clean one-root
    disk of radius 0.4. M(h) = 1.5 · max |n|·|λ − center| over the clean
    range, measured both at separated probes and at pair-resolved probes a
    distance h from the degenerate quasimomenta."""
    return _calibrate(spec, float(h), int(n_probe))
