"""Complex π-periodic 2×2 matrix potentials Q(x) = [[p, q], [q, -p]].

Two spec kinds:

* ``fourier``: finite sums p(x) = Σ p_k e^{2ikx}, q(x) = Σ q_k e^{2ikx};
* ``piecewise``: piecewise-constant on [0, π) with breakpoints at exact
  rational multiples of π (stored as fractions, so panel alignment is exact).

Specs are immutable and hashable so downstream caches can key on them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError

__all__ = [
    "PERIOD",
    "PotentialSpec",
    "fourier_potential",
    "piecewise_potential",
    "zero_potential",
    "constant_potential",
    "scale_potential",
    "eval_potential",
    "adjoint_potential",
    "total_variation",
    "potential_from_config",
    "potential_to_config",
    "load_potential",
]

PERIOD = np.pi

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PotentialSpec:
    """Immutable potential description.

    kind == "fourier": ``p_harmonics``/``q_harmonics`` are ((k, coeff), ...).
    kind == "piecewise": ``pieces`` is ((a, b, p, q), ...) with a, b Fractions
    meaning the half-open interval [a·π, b·π); pieces must partition [0, 1).
    """

    kind: str
    p_harmonics: tuple = ()
    q_harmonics: tuple = ()
    pieces: tuple = ()

    def __post_init__(self):
        if self.kind == "fourier":
            for name, hs in (("p", self.p_harmonics), ("q", self.q_harmonics)):
                ks = [k for k, _ in hs]
                if len(ks) != len(set(ks)):
                    raise ValidationError(f"duplicate harmonic index in {name}")
                for k, c in hs:
                    if not isinstance(k, int):
                        raise ValidationError(f"harmonic index {k!r} is not an integer")
                    complex(c)
        elif self.kind == "piecewise":
            if not self.pieces:
                raise ValidationError("piecewise potential needs at least one piece")
            cursor = Fraction(0)
            for a, b, p, q in self.pieces:
                if not (isinstance(a, Fraction) and isinstance(b, Fraction)):
                    raise ValidationError("piece endpoints must be Fractions (multiples of π)")
                if a != cursor:
                    raise ValidationError(f"pieces must tile [0,1) contiguously; gap at {a}")
                if b <= a:
                    raise ValidationError("piece with non-positive length")
                complex(p), complex(q)
                cursor = b
            if cursor != 1:
                raise ValidationError(f"pieces must end at 1 (i.e. x=π), got {cursor}")
        else:
            raise ValidationError(f"unknown potential kind {self.kind!r}")

    # -- structure helpers ---------------------------------------------------

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Interior discontinuity locations in [0, π), as floats."""
        if self.kind != "piecewise":
            return ()
        return tuple(float(a) * PERIOD for a, _, _, _ in self.pieces[1:])

    def is_syntactically_constant(self) -> bool:
        """True when every stored harmonic has k == 0 (fourier) or there is a
        single piece (piecewise). Checked syntactically, never by coefficient
        values, so the propagation backend choice is reproducible from the
        spec alone."""
        if self.kind == "fourier":
            return all(k == 0 for k, _ in self.p_harmonics) and all(
                k == 0 for k, _ in self.q_harmonics
            )
        return len(self.pieces) == 1

    def constant_values(self) -> tuple[complex, complex]:
        if not self.is_syntactically_constant():
            raise ValidationError("potential is not constant")
        if self.kind == "piecewise":
            _, _, p, q = self.pieces[0]
            return complex(p), complex(q)
        p0 = sum((complex(c) for _, c in self.p_harmonics), 0j)
        q0 = sum((complex(c) for _, c in self.q_harmonics), 0j)
        return p0, q0

    # -- evaluation ----------------------------------------------------------

    def eval_p(self, x) -> np.ndarray:
        return self._eval_component(x, which="p")

    def eval_q(self, x) -> np.ndarray:
        return self._eval_component(x, which="q")

    def _eval_component(self, x, which: str) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xr = np.mod(x, PERIOD)
        out = np.zeros(xr.shape, dtype=complex)
        if self.kind == "fourier":
            hs = self.p_harmonics if which == "p" else self.q_harmonics
            for k, c in hs:
                out += complex(c) * np.exp(2j * k * xr)
            return out
        edges = np.array([float(a) * PERIOD for a, _, _, _ in self.pieces] + [PERIOD])
        vals = np.array(
            [complex(p) if which == "p" else complex(q) for _, _, p, q in self.pieces]
        )
        idx = np.clip(np.searchsorted(edges, xr, side="right") - 1, 0, len(vals) - 1)
        return vals[idx]


def fourier_potential(p=(), q=()) -> PotentialSpec:
    """p, q: iterables of (k, coeff)."""
    return PotentialSpec(
        kind="fourier",
        p_harmonics=tuple((int(k), complex(c)) for k, c in p),
        q_harmonics=tuple((int(k), complex(c)) for k, c in q),
    )


def piecewise_potential(pieces) -> PotentialSpec:
    """pieces: iterable of (a, b, p, q); a, b Fraction-like multiples of π."""
    norm = tuple(
        (Fraction(a), Fraction(b), complex(p), complex(q)) for a, b, p, q in pieces
    )
    return PotentialSpec(kind="piecewise", pieces=norm)


def zero_potential() -> PotentialSpec:
    return piecewise_potential([(0, 1, 0.0, 0.0)])


def constant_potential(p0, q0, kind: str = "piecewise") -> PotentialSpec:
    if kind == "piecewise":
        return piecewise_potential([(0, 1, p0, q0)])
    return fourier_potential(p=[(0, p0)], q=[(0, q0)])


def scale_potential(spec: PotentialSpec, s: complex) -> PotentialSpec:
    """s·Q, used by the homotopy indexer and parameter families."""
    if spec.kind == "fourier":
        return PotentialSpec(
            kind="fourier",
            p_harmonics=tuple((k, s * c) for k, c in spec.p_harmonics),
            q_harmonics=tuple((k, s * c) for k, c in spec.q_harmonics),
        )
    return PotentialSpec(
        kind="piecewise",
        pieces=tuple((a, b, s * p, s * q) for a, b, p, q in spec.pieces),
    )


def eval_potential(spec: PotentialSpec, x) -> np.ndarray:
    """Q(x) as a 2×2 (or (..., 2, 2)) complex array."""
    p = spec.eval_p(x)
    q = spec.eval_q(x)
    out = np.empty(np.shape(p) + (2, 2), dtype=complex)
    out[..., 0, 0] = p
    out[..., 0, 1] = q
    out[..., 1, 0] = q
    out[..., 1, 1] = -p
    return out


def adjoint_potential(spec: PotentialSpec) -> PotentialSpec:
    """Potential of the adjoint operator: entrywise conjugate of Q.

    For fourier kind, conj(Σ c_k e^{2ikx}) = Σ conj(c_k) e^{-2ikx}, so each
    harmonic (k, c) maps to (-k, conj(c)).
    """
    if spec.kind == "fourier":
        return PotentialSpec(
            kind="fourier",
            p_harmonics=tuple((-k, np.conj(c)) for k, c in spec.p_harmonics),
            q_harmonics=tuple((-k, np.conj(c)) for k, c in spec.q_harmonics),
        )
    return PotentialSpec(
        kind="piecewise",
        pieces=tuple((a, b, np.conj(p), np.conj(q)) for a, b, p, q in spec.pieces),
    )


def total_variation(spec: PotentialSpec, samples: int = 4096) -> float:
    """Total variation of p plus that of q over one period.

    Piecewise: exact jump sum including the wrap-around jump at π.
    Fourier: ∫|p'| + ∫|q'| by quadrature (the exact TV of a C¹ function).
    """
    if spec.kind == "piecewise":
        tv = 0.0
        for comp in (2, 3):  # p, q slots in the piece tuples
            vals = [piece[comp] for piece in spec.pieces]
            n = len(vals)
            tv += sum(abs(vals[(i + 1) % n] - vals[i]) for i in range(n)) if n > 1 else 0.0
        return float(tv)
    xs = np.linspace(0.0, PERIOD, samples + 1)
    tv = 0.0
    for hs in (spec.p_harmonics, spec.q_harmonics):
        dv = np.zeros(len(xs), dtype=complex)
        for k, c in hs:
            dv += complex(c) * 2j * k * np.exp(2j * k * xs)
        tv += float(np.trapezoid(np.abs(dv), xs))
    return float(tv)


# -- config (de)serialization ----------------------------------------------


def potential_from_config(data: dict) -> PotentialSpec:
    """Parse the JSON config layout.

    fourier:   {"kind": "fourier", "p": [[k, re, im], ...], "q": [...]}
    piecewise: {"kind": "piecewise",
                "pieces": [[a_num, a_den, b_num, b_den, p_re, p_im, q_re, q_im], ...]}
    """
    if not isinstance(data, dict):
        raise ValidationError("potential config must be an object")
    kind = data.get("kind")
    try:
        if kind == "fourier":
            def harm(rows):
                out = []
                for row in rows:
                    k, re, im = row
                    out.append((int(k), complex(float(re), float(im))))
                return out

            return fourier_potential(p=harm(data.get("p", [])), q=harm(data.get("q", [])))
        if kind == "piecewise":
            pieces = []
            for row in data.get("pieces", []):
                an, ad, bn, bd, pre, pim, qre, qim = row
                pieces.append(
                    (
                        Fraction(int(an), int(ad)),
                        Fraction(int(bn), int(bd)),
                        complex(float(pre), float(pim)),
                        complex(float(qre), float(qim)),
                    )
                )
            return piecewise_potential(pieces)
    except ValidationError:
        raise
    except Exception as exc:
        raise ValidationError(f"malformed potential config: {exc}") from exc
    raise ValidationError(f"unknown potential kind {kind!r}")


def potential_to_config(spec: PotentialSpec) -> dict:
    if spec.kind == "fourier":
        return {
            "kind": "fourier",
            "p": [[k, c.real, c.imag] for k, c in spec.p_harmonics],
            "q": [[k, c.real, c.imag] for k, c in spec.q_harmonics],
        }
    return {
        "kind": "piecewise",
        "pieces": [
            [
                a.numerator,
                a.denominator,
                b.numerator,
                b.denominator,
                complex(p).real,
                complex(p).imag,
                complex(q).real,
                complex(q).imag,
            ]
            for a, b, p, q in spec.pieces
        ],
    }


def load_potential(path: str) -> PotentialSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return potential_from_config(data.get("potential", data))
