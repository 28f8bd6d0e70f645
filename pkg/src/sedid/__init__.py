"""Detect diffusion-generated samples from the stepwise (t, delta)-error of a trained model."""
from .core import (
    AvgPoolEncoder, IdentityEncoder, LinearEncoder, NoiseProfile, ProfileBatch, StepConfig, f_theta,
    latent_t_error, phi, profile_batch, psi, reverse_chain, t_delta_error,
)
from .detectors import GREATER, LESS, ScoredSample, Threshold, baseline_score, calibrate, classify
from .errors import (
    DegenerateCalibration, FormatError, InvalidArgument, SamplerDiverged, SedidError, TrainingDiverged,
    UndefinedMetric, UndefinedTimestep,
)
from .foundation import Rng, archive_read, archive_write, gaussian, l2_sq
from .kernels import BACKEND
from .metrics import MetricsReport, auc, evaluate, roc_curve, tpr_at_fpr
from .noise_model import (
    ConstantPredictor, LinearPredictor, MlpPredictor, PointMassPredictor, TrainConfig, ddpm_train,
)
from .sampler import SamplerConfig, generate, sample_ancestral, sample_ddim
from .schedule import NoiseSchedule, forward_sample, linear_schedule

__version__ = "0.1.0"
