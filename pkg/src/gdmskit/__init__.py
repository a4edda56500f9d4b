"""Thermodynamic formalism and counting for conformal graph directed Markov systems."""

from .counting import BorelRegion, Coding, count_diameters, count_periodic, count_preimages, growth_rate
from .errors import (
    BudgetExceededError,
    GdmsError,
    InvalidGeometryError,
    InvalidInputError,
    LatticeDegenerateError,
    MustInduceError,
    NoConvergenceError,
    NotRegularError,
    NumericalInstabilityError,
    SingularMapError,
    SpectralError,
)
from .gdms import Gdms, detect_parabolic, is_D_generic, validate
from .parabolic import classify_finiteness, estimate_parabolic_index, induce, parabolic_profile
from .symbolic import Alphabet, IncidenceMatrix, admissible_words, is_admissible, periodic_words
from .thermo import PressureEvaluator, bowen_dimension, gibbs_measure, lyapunov, variance

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "BorelRegion",
    "BudgetExceededError",
    "Coding",
    "Gdms",
    "GdmsError",
    "IncidenceMatrix",
    "InvalidGeometryError",
    "InvalidInputError",
    "LatticeDegenerateError",
    "MustInduceError",
    "NoConvergenceError",
    "NotRegularError",
    "NumericalInstabilityError",
    "PressureEvaluator",
    "SingularMapError",
    "SpectralError",
    "admissible_words",
    "bowen_dimension",
    "classify_finiteness",
    "count_diameters",
    "count_periodic",
    "count_preimages",
    "detect_parabolic",
    "estimate_parabolic_index",
    "gibbs_measure",
    "growth_rate",
    "induce",
    "is_D_generic",
    "is_admissible",
    "lyapunov",
    "parabolic_profile",
    "periodic_words",
    "validate",
    "variance",
]
