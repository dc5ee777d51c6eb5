"""Preference-steered denoising diffusion on toy densities."""

from .nn import (
    AdamwState,
    Mlp,
    NumericError,
    RngStream,
    adamw_step,
    make_adamw,
    make_mlp,
    mlp_backward,
    mlp_forward,
    mlp_params,
    rng_gaussian,
    warmup_lr,
)
from .ddpm import (
    DiffusionModel,
    NoiseSchedule,
    ddpm_step,
    make_diffusion_model,
    make_schedule,
    predict_eps,
    q_joint_pair,
    q_sample,
    sample_ddpm,
    timestep_embedding,
    train_ddpm,
)
from .classifier import (
    ClampSaturationWarning,
    NoisedTuple,
    PcLossConfig,
    PreferenceClassifier,
    log_score,
    log_score_grad,
    make_classifier,
    pc_loss,
    score,
    train_classifier,
)
from .guidance import (
    GuidanceConfig,
    SamplerTrace,
    TraceStep,
    constrained_sample,
    ddim_inverse_step,
    guided_step,
)
from .oracle import (
    DiscreteChain,
    DpoEquivalenceReport,
    QuadratureGrid,
    Theorem1Report,
    Theorem3Report,
    gaussian_on_grid,
    make_grid,
    random_chain,
    tilt_distribution,
    tilted_gaussian_1d,
    tilted_kernel_apply,
    tv_distance,
    verify_dpo_equivalence,
    verify_theorem1,
    verify_theorem3,
)
from .data import (
    GroundTruthReward,
    MixtureSpec,
    PreferencePairSet,
    ToyDataset,
    canonical_task,
    load_dataset_csv,
    load_pairs_csv,
    make_mixture,
    make_preference_pairs,
    preferred_mode_mass,
    save_dataset_csv,
    save_pairs_csv,
    task,
    win_rate,
)
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_classifier,
    load_diffusion,
    save_classifier,
    save_diffusion,
)
from .config import Config, load_config, parse_config_text

__version__ = "0.1.0"
