"""Statistical certification of regions of attraction.

Projected Langevin sampling of the Lie derivative on Lyapunov level sets,
extreme-value (GEV) modelling of block maxima, and a bootstrap upper bound
on the worst-case derivative.
"""

__version__ = "0.1.0"

from .certifier import (  # noqa: E402
    CertificationResult,
    Decision,
    EvtConfig,
    SearchResult,
    binary_search_rho,
    certify_level,
    linearization_seed,
)
from .dynamics import (  # noqa: E402
    HurwitzSpec,
    LinearSystem,
    OdeSystem,
    eval_field,
    make_dense_hurwitz,
    make_linear,
    make_reversed_vdp,
    make_scalar_cubic,
)
from .evt import (  # noqa: E402
    GevParams,
    GEVEstimator,
    bootstrap_upper_ci,
    endpoint,
    fit_gev_mle,
    gev_cdf,
    ks_test,
)
from .lyapunov import (  # noqa: E402
    GramCandidate,
    LieDerivative,
    eval_v,
    eval_vdot,
    grad_v,
    grad_vdot,
    load_candidate,
    make_poly_dictionary,
    save_candidate,
)
from .oracle import eigen_exact_linear, grid_max_vdot, measure_kappa  # noqa: E402
from .sampler import PsgldConfig, collect_block_maxima, project_to_levelset, sample_uniform_on_levelset  # noqa: E402
from .synthesis import GramSynthesizer, SynthesisConfig, synthesize  # noqa: E402
