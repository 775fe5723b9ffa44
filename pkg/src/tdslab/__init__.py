"""tdslab: numerical laboratory for a time-delay stability counter-example.

A four-channel delay system that is forward complete, locally exponentially
stable, and globally asymptotically stable, yet admits arbitrarily large
transients and arbitrarily slow convergence from a bounded ball of initial
histories.  The package constructs the adversarial initial states and
verifies every claimed property and failure at desk scale.
"""

from ._numba import NUMBA_ENABLED
from .construct import (
    ConstructOpts,
    EscapeCertificate,
    Lemma1Artifacts,
    SwitchingSignal,
    backward_extend,
    build_z10,
    build_z20_eps,
    calibrate_c,
    escape_search,
    lemma1_construct,
    mollify,
    pick_tau_M,
    uga_adversary,
)
from .integrate import (
    DenseTrajectory,
    EventSpec,
    StepControl,
    dde_integrate,
    integrate,
    integrate_until,
)
from .mat2 import A0, A1, Mat2, SymMat2, a_lambda, find_lambda_bar, hurwitz, lyapunov_solve, sym_eig_bounds
from .system import (
    ChannelSignal,
    HistoryFn,
    InitialState,
    Params,
    SolutionBundle,
    g,
    phi,
    simulate,
    simulate_dde,
    w_simulate,
    z_eval,
)
from .verify import (
    StabilityConstants,
    VerificationReport,
    check_brs_violation,
    check_gas,
    check_les,
    check_uga_violation,
    constants,
    cross_check,
    random_initial_state,
    wuga_metric,
)

__version__ = "0.1.0"
