"""Photoacoustic linear-array simulation and reconstruction toolkit."""

from .beamform import (
    DasConfig,
    DmasConfig,
    MvConfig,
    channel_gain_compensation,
    das,
    dmas,
    dmas_pair_sum,
    envelope,
    minimum_variance,
    mv_weights,
)
from .core import (
    AcquisitionParams,
    ArrayGeometry,
    DatasetRecord,
    DelayTensor,
    GridSpec,
    ImageGrid,
    RawFrame,
    ValidationError,
)
from .delay import DelayLut, LutCache, apply_lut, build_lut
from .estimators import (
    DasBeamformer,
    DelayTransform,
    DmasBeamformer,
    IstaReconstructor,
    KspaceReconstructor,
    MinimumVarianceBeamformer,
)
from .forward import (
    ForwardConfig,
    ImpulseResponse,
    NoPeakError,
    PhotoacousticOperator,
    adjoint,
    default_impulse_response,
    directivity,
    forward,
    identity_impulse_response,
    load_impulse_response,
    measure_impulse_response,
)
from .io import DatasetFormatError, read_dataset, write_dataset
from .metrics import (
    HankelSpec,
    SsimParams,
    batch_metrics,
    block_hankel,
    hankel_rank_profile,
    psnr,
    ssim,
)
from .phantoms import (
    AugmentSpec,
    generate_dataset,
    grayscale_and_scale,
    ingest_masks,
    synthesize_vessels,
)
from .solvers import (
    CsConfig,
    KspaceConfig,
    ista_reconstruct,
    ista_solve,
    kspace_forward_map,
    kspace_reconstruct,
    kz_of,
    soft_threshold,
    tv_prox,
    tv_value,
    wavelet_analysis,
    wavelet_synthesis,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
