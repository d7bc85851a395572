"""Command line front end: config ingestion, dispatch, structured output.

One JSON config file describes the potential, tolerances, and per-command
parameters.  Flags override config fields, config fields override
BLOCHDIRAC_* environment defaults, which override the built-in defaults.
Every output is stamped with a schema_version and the tolerance set that
produced it, and files are written atomically (temp file + rename).

Exit codes: 0 success, 2 config or argument rejection, 3 numeric failure,
4 I/O failure.  Failures print a machine-readable JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .bloch import QuasimomentumDomain, solve_eigenvalue, spectrum_window
from .eigensystem import inner, normalized_pair
from .errors import BlochDiracError, ValidationError
from .expansion import QUALITY, expand_reconstruct, gaussian_bump, hat_bump, raised_cosine
from .fundsol import discriminant_batch, fprime_batch, panel_grid_for, propagate
from .potential import (PERIOD, potential_from_config, potential_to_config,
                        zero_potential)
from .quadrature import panel_interpolate
from .singularities import scan_window

SCHEMA_VERSION = 1

_ENV_TOLS = {
    "integrator_rtol": ("BLOCHDIRAC_RTOL", 1e-12),
    "integrator_atol": ("BLOCHDIRAC_ATOL", 1e-12),
    "root_residual": ("BLOCHDIRAC_RES_TOL", 1e-10),
    "quadrature_tol": ("BLOCHDIRAC_QUAD_TOL", 1e-10),
}


def _default_tolerances() -> dict:
    out = {}
    for key, (env, fallback) in _ENV_TOLS.items():
        raw = os.environ.get(env)
        if raw is None:
            out[key] = fallback
            continue
        try:
            val = float(raw)
        except ValueError as exc:
            raise ValidationError(f"environment override {env}={raw!r} is not a number") from exc
        out[key] = val
    return out


def _resolve_tolerances(cfg: dict) -> dict:
    tols = _default_tolerances()
    for key, val in (cfg.get("tolerances") or {}).items():
        if key not in tols:
            raise ValidationError(f"unknown tolerance {key!r}; known: {sorted(tols)}")
        tols[key] = float(val)
    for key, val in tols.items():
        if not (val > 0.0):
            raise ValidationError(f"tolerance {key} must be positive, got {val}")
    return tols


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config root must be a JSON object")
    return data


def _spec_from(cfg: dict):
    pot = cfg.get("potential")
    if pot is None:
        return zero_potential()
    return potential_from_config(pot)


# ---------------------------------------------------------------------------
# small parsers for the colon-separated flag grammars


def _parse_lambda_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ValidationError(f"--lambda-grid wants re0:re1:n[:im], got {text!r}")
    try:
        re0, re1 = float(parts[0]), float(parts[1])
        n = int(parts[2])
        im = float(parts[3]) if len(parts) == 4 else 0.0
    except ValueError as exc:
        raise ValidationError(f"bad --lambda-grid {text!r}: {exc}") from exc
    if n < 1:
        raise ValidationError("--lambda-grid needs at least one point")
    return np.linspace(re0, re1, n) + 1j * im


def _parse_triplet(text: str, flag: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"{flag} wants a:b:n, got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ValidationError(f"bad {flag} {text!r}: {exc}") from exc
    if n < 2:
        raise ValidationError(f"{flag} needs at least two points")
    return a, b, n


def _parse_window(text: str) -> tuple[float, float, float, float]:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValidationError(f"--window wants re0:re1:im0:im1, got {text!r}")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise ValidationError(f"bad --window {text!r}: {exc}") from exc


def _parse_complex(text: str, flag: str) -> complex:
    parts = text.split(",")
    if len(parts) not in (1, 2):
        raise ValidationError(f"{flag} wants re[,im], got {text!r}")
    try:
        re = float(parts[0])
        im = float(parts[1]) if len(parts) == 2 else 0.0
    except ValueError as exc:
        raise ValidationError(f"bad {flag} {text!r}: {exc}") from exc
    return complex(re, im)


def _pick(flag_value, cfg_section: dict, key: str, default):
    """Flag > config > default."""
    if flag_value is not None:
        return flag_value
    if key in cfg_section:
        return cfg_section[key]
    return default


# ---------------------------------------------------------------------------
# output plumbing


def _g(x: float) -> str:
    return format(float(x), ".17g")


def _pair(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _csv_text(command: str, spec, tols: dict, header: list[str],
              rows: list[list[float]]) -> str:
    lines = [
        f"# blochdirac {command} schema_version={SCHEMA_VERSION}",
        "# tolerances: " + json.dumps(tols, sort_keys=True),
        "# potential: " + json.dumps(potential_to_config(spec), sort_keys=True),
        ",".join(header),
    ]
    for row in rows:
        lines.append(",".join(_g(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_text(command: str, spec, tols: dict, payload: dict) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "potential": potential_to_config(spec),
        "tolerances": tols,
    }
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def _write_atomic(path: str, text: str) -> None:
    target = os.path.abspath(path)
    directory = os.path.dirname(target) or "."
    fd, tmp = tempfile.mkstemp(prefix=".blochdirac-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _write_atomic(path, text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_discriminant(args, cfg: dict, spec, tols: dict) -> None:
    section = cfg.get("discriminant") or {}
    grid_text = _pick(args.lambda_grid, section, "lambda_grid", None)
    if grid_text is None:
        raise ValidationError("discriminant needs --lambda-grid re0:re1:n[:im]")
    lam = (_parse_lambda_grid(grid_text) if isinstance(grid_text, str)
           else np.linspace(grid_text[0], grid_text[1], int(grid_text[2]))
           + 1j * (grid_text[3] if len(grid_text) > 3 else 0.0))

    grid = panel_grid_for(spec, float(np.max(np.abs(lam))) + 1.0)
    batch = propagate(spec, lam, grid.nodes,
                      rtol=tols["integrator_rtol"], atol=tols["integrator_atol"])
    F = batch.Y_pi[:, 0, 0] + batch.Y_pi[:, 1, 1]
    Fp = fprime_batch(spec, lam, grid=grid, batch=batch)
    det = (batch.Y[..., 0, 0] * batch.Y[..., 1, 1]
           - batch.Y[..., 0, 1] * batch.Y[..., 1, 0])
    wr = np.max(np.abs(det - 1.0), axis=1)

    rows = [[float(l.real), float(l.imag), float(f.real), float(f.imag),
             float(fp.real), float(fp.imag), float(w)]
            for l, f, fp, w in zip(lam, F, Fp, wr)]
    header = ["lambda_re", "lambda_im", "F_re", "F_im", "Fp_re", "Fp_im",
              "wronskian_residual"]
    if args.format == "json":
        payload = {"samples": [dict(zip(header, row)) for row in rows]}
        _emit(_json_text("discriminant", spec, tols, payload), args.output)
    else:
        _emit(_csv_text("discriminant", spec, tols, header, rows), args.output)


def cmd_bands(args, cfg: dict, spec, tols: dict) -> None:
    section = cfg.get("bands") or {}
    tg = _pick(args.t_grid, section, "t_grid", None)
    if tg is None:
        raise ValidationError("bands needs --t-grid t0:t1:n")
    t0, t1, nt = _parse_triplet(tg, "--t-grid") if isinstance(tg, str) else (
        float(tg[0]), float(tg[1]), int(tg[2]))
    n_max = int(_pick(args.n_max, section, "n_max", 8))
    h = float(_pick(args.h, section, "h", 0.05))

    domain = QuasimomentumDomain(h)  # validates h in (0, 1/10)
    t_vals = np.linspace(t0, t1, nt)
    for t in t_vals:
        if not domain.contains_regular(complex(t)):
            raise ValidationError(
                f"t={t:g} lies outside D_h(0,1) for h={h:g}; band tracking "
                f"needs quasimomenta away from the degenerate centers")

    rows = []
    for t in t_vals:
        for ev in spectrum_window(spec, complex(t), n_max,
                                  res_tol=tols["root_residual"]):
            rows.append([float(ev.t.real), float(ev.t.imag), ev.n, ev.j,
                         float(ev.lam.real), float(ev.lam.imag),
                         float(ev.residual), ev.multiplicity])
    header = ["t_re", "t_im", "n", "j", "lambda_re", "lambda_im",
              "residual", "multiplicity"]
    if args.format == "json":
        payload = {"eigenvalues": [dict(zip(header, row)) for row in rows]}
        _emit(_json_text("bands", spec, tols, payload), args.output)
    else:
        _emit(_csv_text("bands", spec, tols, header, rows), args.output)


def cmd_modes(args, cfg: dict, spec, tols: dict) -> None:
    section = cfg.get("modes") or {}
    t_raw = _pick(args.t, section, "t", None)
    if t_raw is None:
        raise ValidationError("modes needs --t re[,im]")
    t = _parse_complex(t_raw, "--t") if isinstance(t_raw, str) else complex(t_raw[0], t_raw[1])
    n = int(_pick(args.n, section, "n", 0))
    j = int(_pick(args.j, section, "j", 1))
    m = int(_pick(args.samples, section, "samples", 129))
    if j not in (1, 2):
        raise ValidationError("--j must be 1 or 2")
    if m < 2:
        raise ValidationError("--samples must be at least 2")

    ev = solve_eigenvalue(spec, t, n, j, res_tol=tols["root_residual"])
    grid = panel_grid_for(spec, abs(ev.lam) + 3.0)
    triple = normalized_pair(spec, t, ev.lam, n, j, grid)
    xs = np.linspace(0.0, PERIOD, m)
    psi = panel_interpolate(grid, triple.psi.T, xs).T
    psi_star = panel_interpolate(grid, triple.psi_star.T, xs).T

    payload = {
        "label": {"n": n, "j": j, "t": _pair(t)},
        "eigenvalue": _pair(triple.lam),
        "alpha": _pair(triple.alpha),
        "x": [float(v) for v in xs],
        "psi": [[_pair(v) for v in row] for row in psi],
        "psi_star": [[_pair(v) for v in row] for row in psi_star],
        "diagnostics": {
            "root_residual": float(ev.residual),
            "eigen_residual": float(triple.residual),
            "adjoint_mismatch": float(triple.adjoint_mismatch),
            "multiplicity": ev.multiplicity,
        },
    }
    _emit(_json_text("modes", spec, tols, payload), args.output)


def cmd_singularities(args, cfg: dict, spec, tols: dict) -> None:
    section = cfg.get("singularities") or {}
    win = _pick(args.window, section, "window", None)
    if win is None:
        raise ValidationError("singularities needs --window re0:re1:im0:im1")
    re0, re1, im0, im1 = (_parse_window(win) if isinstance(win, str)
                          else tuple(float(v) for v in win))

    records = scan_window(spec, re0, re1, im0, im1)
    items = []
    for rec in records:
        items.append({
            "t0": _pair(rec.t0),
            "lambda0": _pair(rec.lambda0),
            "m": rec.m,
            "kind": rec.kind,
            "exponent_fit": rec.exponent_fit,
            "fit_residual": rec.fit_residual,
            "direction_dependent": rec.direction_dependent,
        })
    payload = {"window": [re0, re1, im0, im1], "records": items}
    _emit(_json_text("singularities", spec, tols, payload), args.output)


_BUMPS = {"raised_cosine": raised_cosine, "gaussian": gaussian_bump, "hat": hat_bump}


def _bump_from(section: dict, bump_flag: str | None):
    fcfg = dict(section.get("f") or {})
    if bump_flag is not None:
        a, b, _ = None, None, None
        parts = bump_flag.split(":")
        if len(parts) != 2:
            raise ValidationError(f"--bump wants a:b, got {bump_flag!r}")
        try:
            a, b = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValidationError(f"bad --bump {bump_flag!r}: {exc}") from exc
        fcfg.setdefault("kind", "raised_cosine")
        fcfg["a"], fcfg["b"] = a, b
    kind = fcfg.get("kind", "raised_cosine")
    if kind not in _BUMPS:
        raise ValidationError(f"unknown bump kind {kind!r}; choose from {sorted(_BUMPS)}")
    a = float(fcfg.get("a", 0.5))
    b = float(fcfg.get("b", 2.5))
    amp = fcfg.get("amplitude")
    if amp is None:
        amplitude = (1.0, 0.5)
    else:
        amplitude = tuple(complex(c[0], c[1]) for c in amp)
        if len(amplitude) != 2:
            raise ValidationError("f.amplitude wants two [re, im] pairs")
    return _BUMPS[kind](a, b, amplitude=amplitude)


def cmd_expand(args, cfg: dict, spec, tols: dict) -> None:
    section = cfg.get("expand") or {}
    h = float(_pick(args.h, section, "h", 0.05))
    n_max = int(_pick(args.n_max, section, "n_max", 32))
    grid3 = _pick(args.grid, section, "grid", (0.0, 3.0, 301))
    a, b, m = (_parse_triplet(grid3, "--grid") if isinstance(grid3, str)
               else (float(grid3[0]), float(grid3[1]), int(grid3[2])))
    quality = _pick(args.quality, section, "quality", "default")
    if quality not in QUALITY:
        raise ValidationError(f"unknown quality {quality!r}; choose from {tuple(QUALITY)}")
    nodes_scale = int(_pick(args.nodes_scale, section, "nodes_scale", 1))
    n_tail = int(_pick(args.n_tail, section, "n_tail", 8))
    workers = int(_pick(args.workers, cfg, "workers", 0))
    f = _bump_from(section, args.bump)

    eval_grid = np.linspace(a, b, m)
    report = expand_reconstruct(spec, f, h, n_max, eval_grid, n_tail=n_tail,
                                quality=quality, nodes_scale=nodes_scale,
                                workers=workers)
    payload = {"report": report.to_dict(include_samples=not args.no_samples)}
    _emit(_json_text("expand", spec, tols, payload), args.output)

    csv_path = args.csv
    if csv_path is None and args.output is not None:
        root, _ = os.path.splitext(args.output)
        csv_path = root + ".csv"
    if csv_path is not None:
        header = ["x", "coord", "f_re", "f_im", "frec_re", "frec_im"]
        rows = []
        for xi, fv, rv in zip(report.eval_x, report.f_samples, report.reconstruction):
            for coord in (0, 1):
                rows.append([float(xi), coord + 1,
                             float(fv[coord].real), float(fv[coord].imag),
                             float(rv[coord].real), float(rv[coord].imag)])
        _write_atomic(csv_path, _csv_text("expand", spec, tols, header, rows))


def cmd_selftest(args, cfg: dict, spec, tols: dict) -> None:
    """Zero-potential oracle suite; every check has a closed-form target."""
    del cfg, spec  # the suite always runs on the zero potential
    Z = zero_potential()
    checks: list[tuple[str, float, float]] = []

    lam = (np.linspace(-10.0, 10.0, 120)[:, None]
           + 1j * np.linspace(-0.5, 0.5, 5)[None, :]).ravel()
    grid = panel_grid_for(Z, 11.0)
    batch = propagate(Z, lam, grid.nodes)
    F = batch.Y_pi[:, 0, 0] + batch.Y_pi[:, 1, 1]
    checks.append(("discriminant vs 2cos(pi lambda)",
                   float(np.max(np.abs(F - 2.0 * np.cos(np.pi * lam)))), 1e-9))
    checks.append(("wronskian residual", batch.wronskian_residual(), 1e-10))

    Fp = fprime_batch(Z, lam, grid=grid, batch=batch)
    checks.append(("F' vs -2pi sin(pi lambda)",
                   float(np.max(np.abs(Fp + 2.0 * np.pi * np.sin(np.pi * lam)))), 1e-8))

    t = 0.31
    worst = 0.0
    for n in range(-3, 4):
        for j, want in ((1, 2 * n + t), (2, 2 * n - t)):
            ev = solve_eigenvalue(Z, t, n, j, res_tol=tols["root_residual"])
            worst = max(worst, abs(ev.lam - want))
    checks.append(("eigenvalue grid 2n+-t", worst, 1e-9))

    g6 = panel_grid_for(Z, 9.0)
    trips = [normalized_pair(Z, t, solve_eigenvalue(Z, t, n, j).lam, n, j, g6)
             for n in (-2, 0, 1) for j in (1, 2)]
    off = 0.0
    for i, a_ in enumerate(trips):
        for k, b_ in enumerate(trips):
            if i != k:
                off = max(off, abs(inner(g6, a_.psi, b_.psi_star)))
    checks.append(("biorthogonality off-diagonal", off, 1e-8))

    failed = [c for c in checks if not (c[1] < c[2])]
    lines = []
    for name, value, bound in checks:
        tag = "ok" if value < bound else "FAIL"
        lines.append(f"{tag:4s} {name}: {value:.3e} (< {bound:.0e})")
    text = "\n".join(lines) + "\n"
    _emit(text, args.output)
    if failed:
        raise BlochDiracError(f"{len(failed)} selftest check(s) out of tolerance")


# ---------------------------------------------------------------------------
# parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="blochdirac",
        description="Bloch spectra and spectral expansions of 1D Dirac "
                    "operators with complex periodic matrix potentials.")
    ap.add_argument("--config", help="JSON config file")
    sub = ap.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--output", help="write here (atomic); default stdout")

    p = sub.add_parser("discriminant", help="sample F and F' on a lambda grid")
    p.add_argument("--lambda-grid", help="re0:re1:n[:im]")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    common(p)

    p = sub.add_parser("bands", help="labeled eigenvalues over a quasimomentum grid")
    p.add_argument("--t-grid", help="t0:t1:n")
    p.add_argument("--n-max", type=int, help="band half-width N")
    p.add_argument("--h", type=float, help="domain half-width in (0, 1/10)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    common(p)

    p = sub.add_parser("modes", help="eigenfunction pair at one label")
    p.add_argument("--t", help="re[,im]")
    p.add_argument("--n", type=int)
    p.add_argument("--j", type=int, choices=(1, 2))
    p.add_argument("--samples", type=int, help="uniform sample count on [0, pi]")
    common(p)

    p = sub.add_parser("singularities", help="classify branch collisions in a lambda window")
    p.add_argument("--window", help="re0:re1:im0:im1")
    common(p)

    p = sub.add_parser("expand", help="spectral-expansion reconstruction of a bump")
    p.add_argument("--h", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--grid", help="a:b:m evaluation grid")
    p.add_argument("--quality", choices=tuple(QUALITY))
    p.add_argument("--nodes-scale", type=int)
    p.add_argument("--n-tail", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--bump", help="a:b support of the raised-cosine test bump")
    p.add_argument("--csv", help="also write per-coordinate samples CSV here")
    p.add_argument("--no-samples", action="store_true",
                   help="omit sample arrays from the JSON report")
    common(p)

    p = sub.add_parser("selftest", help="run the zero-potential oracle suite")
    common(p)

    return ap


_HANDLERS = {
    "discriminant": cmd_discriminant,
    "bands": cmd_bands,
    "modes": cmd_modes,
    "singularities": cmd_singularities,
    "expand": cmd_expand,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else {}
        command = args.command or cfg.get("command")
        if command is None:
            ap.print_help()
            return 2
        if command not in _HANDLERS:
            raise ValidationError(f"unknown command {command!r}")
        if args.command is None:
            # command came from the config; give the handler a namespace with
            # every flag unset so config values take over
            args = ap.parse_args([command])
            args.config = None
        spec = _spec_from(cfg)
        tols = _resolve_tolerances(cfg)
        if "output" in cfg and getattr(args, "output", None) is None:
            out = cfg["output"]
            args.output = out.get("path") if isinstance(out, dict) else out
        _HANDLERS[command](args, cfg, spec, tols)
        return 0
    except ValidationError as exc:
        _fail(2, exc)
        return 2
    except BlochDiracError as exc:
        _fail(3, exc)
        return 3
    except OSError as exc:
        _fail(4, exc)
        return 4


def _fail(code: int, exc: Exception) -> None:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc),
                     "exit_code": code}}
    sys.stderr.write(json.dumps(doc) + "\n")


if __name__ == "__main__":
    sys.exit(main())
