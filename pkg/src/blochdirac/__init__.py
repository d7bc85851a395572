"""Bloch spectra and spectral expansions of one-dimensional Dirac operators
with complex pi-periodic matrix potentials.

The package computes fundamental solutions and the Hill discriminant,
labeled Bloch eigenvalues over the quasimomentum strip, normalized
eigenfunction pairs with their biorthogonality constants, spectral
singularities (branch collisions where the constants blow up), and the full
contour-integral reconstruction of compactly supported functions from their
Bloch coefficients.
"""

from .bloch import (BlochEigenvalue, QuasimomentumDomain, asymptotic_center,
                    calibrate_localization, multiplicity, newton_refine,
                    solve_eigenvalue, spectrum_window, track_branch)
from .eigensystem import (EigenTriple, alpha_at, eigen_residual,
                          eigenfunction, inner, normalized_pair, pairing,
                          resolvent_apply, resolvent_apply_batch,
                          total_projection, twisted_norm)
from .errors import (BlochDiracError, CollisionError, CompletenessError,
                     ContourError, DegenerateEigenvalueError,
                     IntegrationFailure, LocalizationError, NearSingularError,
                     ProbeFailure, SolverError, ValidationError)
from .expansion import (QUALITY, ExpansionReport, TestFunction, build_contour,
                        coefficient, convergence_study, expand_reconstruct,
                        fiber_residual, gaussian_bump, hat_bump, periodize,
                        raised_cosine, term_integral)
from .fundsol import (MonodromyCache, SolutionBatch, discriminant,
                      discriminant_batch, discriminant_derivative,
                      fprime_batch, monodromy, panel_grid_for, propagate)
from .potential import (PERIOD, PotentialSpec, adjoint_potential,
                        constant_potential, eval_potential, fourier_potential,
                        load_potential, piecewise_potential,
                        potential_from_config, potential_to_config,
                        scale_potential, total_variation, zero_potential)
from .quadrature import PanelGrid, build_panel_grid, panel_interpolate
from .singularities import (SingularityRecord, classify, critical_points,
                            exceptional_quasimomenta, fit_blowup_exponent,
                            scan_window)

__version__ = "0.1.0"

__all__ = [
    "PERIOD", "QUALITY", "__version__",
    "PotentialSpec", "fourier_potential", "piecewise_potential",
    "zero_potential", "constant_potential", "scale_potential",
    "eval_potential", "adjoint_potential", "total_variation",
    "potential_from_config", "potential_to_config", "load_potential",
    "SolutionBatch", "MonodromyCache", "propagate", "monodromy",
    "discriminant", "discriminant_batch", "discriminant_derivative",
    "fprime_batch", "panel_grid_for",
    "PanelGrid", "build_panel_grid", "panel_interpolate",
    "BlochEigenvalue", "QuasimomentumDomain", "asymptotic_center",
    "newton_refine", "solve_eigenvalue", "spectrum_window", "multiplicity",
    "track_branch", "calibrate_localization",
    "EigenTriple", "normalized_pair", "eigenfunction", "inner", "pairing",
    "twisted_norm", "alpha_at", "eigen_residual", "resolvent_apply",
    "resolvent_apply_batch", "total_projection",
    "SingularityRecord", "critical_points", "exceptional_quasimomenta",
    "classify", "scan_window", "fit_blowup_exponent",
    "TestFunction", "raised_cosine", "gaussian_bump", "hat_bump",
    "periodize", "coefficient", "fiber_residual", "term_integral",
    "build_contour", "expand_reconstruct", "convergence_study",
    "ExpansionReport",
    "BlochDiracError", "ValidationError", "IntegrationFailure",
    "ContourError", "LocalizationError", "SolverError", "CompletenessError",
    "DegenerateEigenvalueError", "NearSingularError", "CollisionError",
    "ProbeFailure",
]
