import numpy as np
import pytest

from src.app.ecg.synth import synth_ecg
from src.app.hr.pipeline import HrWindow
from src.app.schemas import ArtifactSpec, ConformerConfig, SynthParams


@pytest.fixture(scope="session")
def clean_corpus():
    return synth_ecg(SynthParams(duration=600.0, seed=7))


@pytest.fixture(scope="session")
def short_clean_corpus():
    return synth_ecg(SynthParams(duration=60.0, seed=11))


@pytest.fixture(scope="session")
def spike_corpus():
    params = SynthParams(duration=120.0, seed=3,
                         artifacts=[ArtifactSpec(kind='spike', t_start=30.0, t_end=30.5, amplitude_mv=5.0)])
    return synth_ecg(params)


@pytest.fixture(scope="session")
def zero_corpus():
    params = SynthParams(duration=120.0, seed=5, artifacts=[ArtifactSpec(kind='zero', t_start=60.0, t_end=70.0)])
    return synth_ecg(params)


@pytest.fixture
def tiny_cfg():
    """Small enough for finite-difference checks of the whole model."""
    return ConformerConfig(window_samples=8, fs=1.0, patch_len_s=2.0, d_model=4, n_layers=1, n_heads=2,
                           dw_kernel=3, fcn_kernel=3, fcn_pool=2, dropout=0.0)


@pytest.fixture
def toy_cfg():
    return ConformerConfig(window_samples=40, fs=4.0, patch_len_s=2.5, d_model=16, n_layers=1, n_heads=2,
                           dw_kernel=3, fcn_kernel=3, dropout=0.0)


def make_toy_windows(n_epochs_per_class: int, windows_per_epoch: int, length: int, seed: int,
                     prefix: str = "toy") -> list:
    """Variance-separated classes: class 0 is nearly flat, class 1 fluctuates strongly."""
    rng = np.random.default_rng(seed)
    windows = []
    for label, sd in ((0, 0.05), (1, 0.5)):
        for e in range(n_epochs_per_class):
            epoch = f"{prefix}{label}_h{e:03d}"
            for k in range(windows_per_epoch):
                windows.append(HrWindow(values=0.5 + rng.normal(0.0, sd, size=length), epoch_id=epoch,
                                        label=label, normalized=True, start_s=float(k)))
    return windows


@pytest.fixture
def toy_windows():
    return make_toy_windows
