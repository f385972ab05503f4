from pydantic import BaseModel, Field, field_validator, model_validator
from typing import Optional, List, Literal, Dict, Any
from datetime import datetime


BAND_PRESETS: Dict[str, tuple] = {
    "standard": (5.0, 15.0),
    "plus_plus": (5.0, 18.0),
    "neonatal": (4.0, 30.0),
}


# SYNTHETIC ECG
class ArtifactSpec(BaseModel):
    kind: Literal['spike', 'zero', 'wander', 'noise']
    t_start: float = Field(ge=0)
    t_end: float
    amplitude_mv: float = 5.0

    @model_validator(mode='after')
    def check_window(self):
        if self.t_end <= self.t_start:
            raise ValueError("artifact window must have t_end > t_start")
        return self


class SynthParams(BaseModel):
    hr_bpm: float = Field(120.0, ge=60, le=240)
    hrv_sd: float = Field(0.01, ge=0)
    duration: float = Field(600.0, gt=0)
    fs: float = Field(256.0, gt=0)
    noise_sd: float = Field(0.01, ge=0)
    polarity: Literal['upright', 'inverted'] = 'upright'
    artifacts: List[ArtifactSpec] = []
    seed: int = 7


# QRS DETECTION
class DetectorConfig(BaseModel):
    band_low: float = Field(4.0, gt=0)
    band_high: float = 30.0
    filter_order: int = Field(2, ge=1)
    integration_window_ms: float = Field(150.0, gt=0)
    reset_timeout_s: float = Field(1.4, gt=0)
    zero_floor: float = Field(1e-12, ge=0)
    refractory_ms: float = Field(200.0, gt=0)
    searchback_window_ms: float = Field(100.0, gt=0)
    potential_window_ms: Optional[float] = None
    learning_period_s: float = Field(2.0, gt=0)
    twave_window_ms: float = 360.0
    rr_missed_factor: float = 1.66
    polarity_ratio: float = 1.2
    # enhancement switches
    polarity_check: bool = True
    threshold_reset: bool = True
    zero_skip: bool = True
    refine_source: Literal['bandpass', 'raw'] = 'bandpass'

    @model_validator(mode='after')
    def check_band(self):
        if not self.band_low < self.band_high:
            raise ValueError("band_low must be below band_high")
        return self

    @property
    def potential_window(self) -> float:
        return self.potential_window_ms if self.potential_window_ms is not None else 2 * self.searchback_window_ms

    @classmethod
    def enhanced(cls, **overrides) -> "DetectorConfig":
        return cls(**overrides)

    @classmethod
    def standard(cls, **overrides) -> "DetectorConfig":
        low, high = BAND_PRESETS["standard"]
        params = dict(band_low=low, band_high=high, polarity_check=False, threshold_reset=False,
                      zero_skip=False, refine_source='raw')
        params.update(overrides)
        return cls(**params)

    @classmethod
    def with_band(cls, band: str, **overrides) -> "DetectorConfig":
        if band not in BAND_PRESETS:
            raise ValueError(f"unknown band preset '{band}'")
        low, high = BAND_PRESETS[band]
        return cls(band_low=low, band_high=high, **overrides)


# PREPROCESSING
class PreprocessConfig(BaseModel):
    ma_window: int = Field(8, ge=1)
    mean_rule: Literal['local', 'global'] = 'local'
    max_rr_s: float = Field(4.0, gt=0)
    interp_fs: float = Field(256.0, gt=0)
    out_fs: float = Field(4.0, gt=0)
    window_s: float = Field(300.0, gt=0)
    overlap: float = Field(0.8, ge=0, lt=1)
    sd_max: float = Field(0.12, ge=0)
    min_windows: int = Field(10, ge=0)
    normalization: Literal['minmax', 'zscore'] = 'minmax'

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.out_fs))

    @property
    def stride_samples(self) -> int:
        return int(round(self.window_s * (1 - self.overlap) * self.out_fs))


# MODEL
class ConformerConfig(BaseModel):
    window_samples: int = Field(1200, ge=1)
    fs: float = Field(4.0, gt=0)
    patch_len_s: float = Field(25.0, gt=0)
    d_model: int = Field(144, ge=1)
    n_layers: int = Field(3, ge=1)
    n_heads: int = Field(8, ge=1)
    dw_kernel: int = 11
    ffn_expansion: int = Field(4, ge=1)
    conv_expansion: int = Field(2, ge=1)
    pos_mode: Literal['relative', 'fixed_sincos', 'none'] = 'relative'
    head: Literal['fcn', 'class_token', 'global_pool'] = 'fcn'
    fcn_kernel: int = 11
    fcn_channels: int = Field(2, ge=1)
    fcn_pool: int = Field(4, ge=1)
    dropout: float = Field(0.3, ge=0, lt=1)
    use_conv_module: bool = True
    use_half_ffn: bool = True
    n_classes: int = Field(2, ge=2)

    @field_validator('dw_kernel', 'fcn_kernel')
    @classmethod
    def odd_kernel(cls, value: int) -> int:
        if value < 1 or value % 2 == 0:
            raise ValueError("kernel size must be a positive odd integer")
        return value

    @model_validator(mode='after')
    def check_geometry(self):
        patch = self.patch_len_s * self.fs
        if abs(patch - round(patch)) > 1e-9 or round(patch) < 1:
            raise ValueError("patch_len_s * fs must be a whole number of samples")
        if self.window_samples % int(round(patch)) != 0:
            raise ValueError(f"window of {self.window_samples} samples is not divisible by patch of {int(round(patch))}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        return self

    @property
    def patch_samples(self) -> int:
        return int(round(self.patch_len_s * self.fs))

    @property
    def n_patches(self) -> int:
        return self.window_samples // self.patch_samples

    @property
    def n_tokens(self) -> int:
        return self.n_patches + (1 if self.head == 'class_token' else 0)


# TRAINING
class TrainConfig(BaseModel):
    epochs: int = Field(300, ge=1)
    batch_size: int = Field(64, ge=1)
    lr_max: float = Field(6e-5, gt=0)
    lr_min: float = Field(1e-6, ge=0)
    warmup_epochs: int = Field(50, ge=0)
    beta1: float = 0.85
    beta2: float = 0.998
    weight_decay: float = Field(0.1, ge=0)
    label_smoothing: float = Field(0.2, ge=0, lt=1)
    patience: int = Field(100, ge=1)
    eval_every: int = Field(1, ge=1)
    ma_window: int = Field(5, ge=1)
    val_fraction: float = Field(0.2, gt=0, lt=1)
    tie_label: Literal[0, 1] = 1
    dtype: Literal['float64', 'float32'] = 'float64'
    seed: int = 7

    @model_validator(mode='after')
    def check_lr(self):
        if self.lr_min > self.lr_max:
            raise ValueError("lr_min must not exceed lr_max")
        return self


# ATTENTION ANALYSIS
class AttnConfig(BaseModel):
    max_windows: Optional[int] = Field(None, ge=1)
    batch_size: int = Field(64, ge=1)
    figures: bool = True


class RunConfig(BaseModel):
    synth: SynthParams = SynthParams()
    detector: DetectorConfig = DetectorConfig()
    preprocess: PreprocessConfig = PreprocessConfig()
    model: ConformerConfig = ConformerConfig()
    train: TrainConfig = TrainConfig()
    attn: AttnConfig = AttnConfig()


# RUN MANIFEST
class RunManifest(BaseModel):
    command: str
    tool_version: str
    config: Dict[str, Any]
    seeds: Dict[str, int] = {}
    input_digests: Dict[str, str] = {}
    normalizer: Optional[Dict[str, Any]] = None
    deterministic: bool = False
    started_at: datetime
    finished_at: Optional[datetime] = None
    elapsed_s: Optional[float] = None
    extra: Dict[str, Any] = {}
