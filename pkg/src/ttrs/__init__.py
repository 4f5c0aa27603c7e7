"""Tensor-train density estimation from samples via recursive sketching."""

from .continuous import (
    BasisSet,
    CoeffTensors,
    ContinuousTT,
    estimate_coeff_marginals,
    fit_from_coeff_marginals,
    fourier_basis,
    gauss_legendre,
    l2_error_decomposition,
    load_continuous_tt,
    markov_to_coeff_tt,
    save_continuous_tt,
    tt_rs_continuous_markov,
)
from .empirical import (
    MarginalTensor,
    SampleSet,
    concat_samples,
    load_samples,
    marginal,
    save_samples,
    save_samples_csv,
    sketched_moment,
)
from .engine import (
    FitReport,
    SystemMatrices,
    TrimResult,
    fit_from_moments,
    form_system,
    select_ranks,
    solve_cores,
    trim,
    tt_rs,
    tt_s,
)
from .errors import (
    CapExceededError,
    ConfigError,
    DegenerateError,
    RankError,
    SampleFormatError,
    ShapeError,
    TTRSError,
)
from .markov import (
    ChainFactors,
    GinzburgLandauSpec,
    IsingSpec,
    MarkovSpec,
    chain_factors_to_markov,
    gl_chain_factors,
    gl_discretize,
    gl_energy,
    gl_grid,
    homogeneous_markov_spec,
    ising_coupling,
    ising_energy,
    ising_spec_to_markov,
    markov_spec_from_json,
    markov_spec_to_json,
    markov_to_tt,
    random_markov_spec,
    sample_ancestral,
    sample_from_tt,
    sample_gibbs,
    sample_mh_continuous,
    window_marginal,
)
from .sketching import (
    SketchPlan,
    dense_sketch_plan,
    gaussian_sketch_plan,
    markov_sketch_plan,
    plan_from_json,
    plan_to_json,
    run_sketching,
    run_sketching_tts,
)
from .tensor_core import (
    DEFAULT_DENSE_CAP,
    TensorTrain,
    fold,
    load_tt,
    save_tt,
    triple_norm,
    tt_contract_full,
    tt_eval,
    tt_from_json,
    tt_inner,
    tt_rel_l2_error,
    tt_to_json,
    unfold,
)
from .validation import (
    CoreDistanceResult,
    DiagnosticsReport,
    check_sample_complexity,
    compute_constants,
    concentration_bound,
    core_distance,
    exact_markov_fit,
    solve_cde_full,
)

__version__ = "0.1.0"
