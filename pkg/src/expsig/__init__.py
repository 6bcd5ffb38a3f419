"""Expected signatures of Gaussian processes with strictly regular Volterra kernels."""

from .combinatorics import compatible_pairings, enumerate_pairings, is_even_word
from .discrete_oracle import discrete_expected_word, dyadic_c_matrix, mc_signature_estimate
from .errors import NumericError, ResourceError, ShapeError, SingularityError
from .expected_signature import (
    brownian_expected_signature,
    canonical_In,
    cross_pairing_bound,
    expected_signature,
    expected_word_coefficient,
)
from .kernels import ExplicitF, FbmKernel, VolterraKernel, kernel_from_config
from .quadrature import QuadratureSettings, simplex_pairing_integral, unit_square_normalization
from .tensor_algebra import TensorSeries, signature_of_piecewise_linear, tensor_exp, tensor_mul

__version__ = "0.1.0"
