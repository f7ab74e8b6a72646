"""maxsketch: distinct-count estimation for streams of unit-norm embeddings.

Maintains m running maxima of fixed Gaussian projections over a single
pass; the mean of the maxima is a scalar statistic that grows with the
number of distinct latent directions in the stream, and a data-independent
threshold grid (or a calibrated monotone readout) turns it into a count.
"""

from maxsketch._kernels import BACKEND as KERNEL_BACKEND
from maxsketch.errors import (
    BindingError,
    DimensionMismatchError,
    EmptySketchError,
    FormatError,
    GenerationError,
    GridSoundnessError,
    InvalidInputError,
    InvalidParameterError,
    MaxSketchError,
)
from maxsketch.estimator import (
    EstimatorParams,
    ThresholdGrid,
    band_lower,
    band_upper,
    build_grid,
    estimate,
    required_m,
)
from maxsketch.gaussmax import GaussianMaxTable, expected_max_iid
from maxsketch.readout import (
    CalibrationSample,
    MonotoneStepFn,
    apply_readout,
    learn_thresholds,
    pav_fit,
)
from maxsketch.sketch import (
    ProjectionSet,
    SketchState,
    create_projections,
    deserialize,
    merge,
    new_sketch,
    projections_from_matrix,
    serialize,
    statistic,
    update,
    update_batch,
)
from maxsketch.streamgen import (
    ClusterSpec,
    GeneratedStream,
    LatentCenters,
    generate_stream,
    make_centers,
    sample_observation,
    validate_clusterable,
)
from maxsketch.verify import (
    McReport,
    check_concentration,
    check_gap,
    check_perturbation,
    check_slepian,
    mc_expected_max,
)

__version__ = "0.1.0"
