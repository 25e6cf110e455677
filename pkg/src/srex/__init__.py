"""srex: extremal dynamics of rank-2 sub-Riemannian structures.

Exact polynomial bracket calculus, abnormal feedback flows with Goh
monitoring, singularity classification of the trace-free bracket matrix,
rescaled polar phase analysis, and direct length minimization with corner
non-minimality tests.
"""

__version__ = "0.1.0"

from .poly import Poly, format_poly, parse_poly
from .vfield import BracketWord, PolyVecField, bracket_of_word, evaluate, lie_bracket
from .structures import (
    ControlSignal,
    Dilation,
    SRStructure,
    blowup_control,
    dilate,
    engel,
    flag_dimensions,
    free_nilpotent_frame,
    heisenberg,
    martinet,
    nilpotent_approximation,
    pushforward_rescaled,
)
from .extremals import (
    AbnormalTrajectory,
    AMatrix,
    ExtremalState,
    SingularityClass,
    abnormal_feedback_flow,
    a_matrix,
    bracket_function,
    classify_zero,
    feedback_vector,
    hamiltonian_lift,
    kernel_flow,
    limit_control_direction,
    normal_flow,
    planar_feedback_flow,
    sample_abnormal_covector,
)
from .phase import (
    ConjugationFrame,
    PhasePath,
    SwitchSequence,
    conjugation_frame,
    detect_dichotomy,
    excluded_elliptic_monitor,
    extract_switch_sequence,
    hyperbolic_asymptotics,
    rescale_time,
    simulate_elliptic_polar,
    simulate_polar,
    verify_estimates,
)
from .optimize import (
    DiscretizedControl,
    MinimizationResult,
    SignVerdict,
    constant_sign_check,
    corner_test,
    minimize_length,
    shoot,
    shoot_with_jacobian,
)

__all__ = [name for name in dir() if not name.startswith("_")]
