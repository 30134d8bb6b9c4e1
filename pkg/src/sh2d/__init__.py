"""Pattern-forming field dynamics with a nonlocal cubic term.

Simulation, bound checking, tangent-bundle exponents, and closed-form
attractor estimates for the fourth-order model

    u_t = mu u - (1 + lap)² u - u (G * u²)

and its local-cubic counterpart, on periodic or clamped rectangles.
"""

from .bench import BenchResult, direct_convolution, fit_slopes, run_bench
from .diagnostics import (
    BoundReport,
    absorbing_entry,
    check_decay,
    check_dissipativity,
    check_h2_bound,
    check_lemma1,
    envelope_crossing_time,
    window_constant,
)
from .dynamics import ModelParams, RhsBreakdown, Variant, linearized_apply, rhs, rhs_breakdown
from .fields import (
    BC,
    Field,
    Grid,
    NonFiniteFieldError,
    h2_seminorms,
    inner,
    l2_norm,
    laplacian,
    read_snapshot,
    write_snapshot,
)
from .kernels import (
    ConvMode,
    Kernel,
    constant,
    convolve_signed,
    cosine_bump,
    gaussian_floor,
    kernel_bounds,
    nonlocal_weight,
    sandwich_check,
)
from .lyapunov import (
    LyapunovReport,
    TangentBundle,
    evolve_tangent,
    exponents_and_ky,
    init_bundle,
    kaplan_yorke,
    trace_LQm,
    trace_lower_bound,
)
from .stepper import (
    BlowUpError,
    Scheme,
    StepperConfig,
    Trajectory,
    integrate,
    make_initial,
    make_stepper,
    step,
)
from .theory import (
    TheoryInputs,
    absorbing_radius,
    bound_local,
    bound_nonlocal,
    dimension_gap,
    poincare_lambda1,
    threshold_local,
    threshold_nonlocal,
)

__version__ = "0.1.0"
