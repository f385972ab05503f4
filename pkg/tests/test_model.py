from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from src.app.errors import ShapeError
from src.app.hr.pipeline import HrWindow
from src.app.model import HRVConformer, model_forward, model_param_count, patchify
from src.app.model.conformer import ConformerBlock
from src.app.model.hrvconformer import head_param_count
from src.app.nn import functional as F
from src.app.nn.gradcheck import gradcheck
from src.app.nn.tensor import Tensor
from src.app.schemas import ConformerConfig
from src.app.utils import load_run_config
from src.config import PRESETS_DIR

PRESETS = sorted(p.stem for p in Path(PRESETS_DIR).glob("*.json"))


class TestGeometry:
    def test_default_patching(self):
        cfg = ConformerConfig()
        assert (cfg.patch_samples, cfg.n_patches) == (100, 12)
        patches = patchify(np.arange(2 * 1200.0).reshape(2, 1200), cfg)
        assert patches.shape == (2, 12, 100)
        np.testing.assert_array_equal(patches[1, 3], np.arange(1200 + 300, 1200 + 400))

    def test_default_forward_shapes(self):
        model = HRVConformer(ConformerConfig()).eval()
        tokens = model.embed_patches(np.zeros((2, 1200)))
        assert tokens.shape == (2, 12, 144)
        out = model(np.random.default_rng(0).normal(size=(2, 1200)))
        assert out.logits.shape == (2, 2)
        assert out.attn_maps.shape == (3, 2, 8, 12, 12)
        np.testing.assert_allclose(out.probabilities().sum(axis=1), 1.0)

    def test_class_token_adds_one_row(self):
        model = HRVConformer(ConformerConfig(head='class_token')).eval()
        out = model(np.zeros(1200))
        assert out.attn_maps.shape == (3, 1, 8, 13, 13)
        np.testing.assert_allclose(out.attn_maps.sum(axis=-1), 1.0, atol=1e-6)

    def test_patchify_rejects_indivisible_window(self):
        with pytest.raises(ShapeError):
            patchify(np.zeros(1201), ConformerConfig())

    def test_wrong_window_length(self, toy_cfg):
        with pytest.raises(ShapeError):
            HRVConformer(toy_cfg)(np.zeros(41))

    def test_single_patch_rejected_by_fcn_head(self):
        cfg = ConformerConfig(window_samples=10, fs=1.0, patch_len_s=10.0, d_model=8, n_heads=2, n_layers=1)
        with pytest.raises(ShapeError):
            HRVConformer(cfg)

    def test_embedding_narrower_than_pool(self):
        cfg = ConformerConfig(window_samples=8, fs=1.0, patch_len_s=2.0, d_model=2, n_heads=1, n_layers=1,
                              fcn_pool=4, dw_kernel=3, fcn_kernel=3)
        with pytest.raises(ShapeError):
            HRVConformer(cfg)

    @pytest.mark.parametrize("overrides", [
        {"dw_kernel": 4},
        {"fcn_kernel": 0},
        {"patch_len_s": 7.0},
        {"d_model": 100},
        {"patch_len_s": 0.1},
    ])
    def test_invalid_config(self, overrides):
        with pytest.raises(ValidationError):
            ConformerConfig(**overrides)


class TestParameterCounts:
    @pytest.mark.parametrize("preset", PRESETS)
    def test_closed_form_matches_model(self, preset):
        cfg = load_run_config(preset=preset).model
        assert HRVConformer(cfg).num_parameters() == model_param_count(cfg)

    def test_transformer_preset_differs_only_in_block_modules(self):
        transformer = load_run_config(preset="transformer").model
        default = load_run_config(preset="default").model
        assert not transformer.use_conv_module and not transformer.use_half_ffn
        assert transformer.pos_mode == default.pos_mode == 'relative'
        assert transformer.model_copy(update={"use_conv_module": True, "use_half_ffn": True}) == default
        assert load_run_config(preset="pos_fixed").model.pos_mode == 'fixed_sincos'

    def test_ablations_shrink_the_model(self):
        full = model_param_count(ConformerConfig())
        assert model_param_count(ConformerConfig(use_conv_module=False)) < full
        assert model_param_count(ConformerConfig(use_half_ffn=False)) < full
        assert model_param_count(ConformerConfig(pos_mode='none')) < full

    def test_fcn_head_does_not_grow_with_width(self, toy_cfg):
        narrow = HRVConformer(toy_cfg).head.num_parameters()
        wide = HRVConformer(toy_cfg.model_copy(update={"d_model": 32})).head.num_parameters()
        assert narrow == wide == head_param_count(toy_cfg)

    def test_dense_heads_scale_with_width(self, toy_cfg):
        cfg = toy_cfg.model_copy(update={"head": "global_pool"})
        assert HRVConformer(cfg).head.num_parameters() == 16 * 2 + 2


class TestConformerBlock:
    def test_zeroed_block_reduces_to_layer_norm(self, toy_cfg):
        rng = np.random.default_rng(0)
        block = ConformerBlock(toy_cfg, rng, np.random.default_rng(1))
        for name, p in block.named_parameters():
            p.data = np.ones_like(p.data) if name.endswith("gamma") else np.zeros_like(p.data)

        x = rng.normal(size=(2, 4, 16))
        y, attn = block(Tensor(x))
        mu = x.mean(axis=-1, keepdims=True)
        expected = (x - mu) / np.sqrt(x.var(axis=-1, keepdims=True) + 1e-5)
        np.testing.assert_allclose(y.data, expected, atol=1e-12)
        np.testing.assert_allclose(attn.data, 0.25)

    @pytest.mark.parametrize("overrides", [
        {}, {"use_conv_module": False}, {"use_half_ffn": False},
        {"use_conv_module": False, "use_half_ffn": False, "pos_mode": "fixed_sincos"},
    ])
    def test_output_is_layer_normalized(self, toy_cfg, overrides):
        cfg = toy_cfg.model_copy(update=overrides)
        block = ConformerBlock(cfg, np.random.default_rng(0), np.random.default_rng(1))
        y, _ = block(Tensor(np.random.default_rng(2).normal(size=(2, 4, 16))))
        np.testing.assert_allclose(y.data.mean(axis=-1), 0.0, atol=1e-9)


class TestInference:
    def test_batch_matches_single_windows(self, toy_cfg):
        model = HRVConformer(toy_cfg, seed=5).eval()
        batch = np.random.default_rng(3).normal(size=(4, 40))
        together = model(batch).logits.data
        for i in range(4):
            np.testing.assert_allclose(model(batch[i]).logits.data[0], together[i], atol=1e-6)

    def test_attention_rows_are_stochastic(self, toy_cfg):
        model = HRVConformer(toy_cfg.model_copy(update={"n_layers": 2})).eval()
        maps = model(np.random.default_rng(4).normal(size=(3, 40))).attn_maps
        assert maps.shape == (2, 3, 2, 4, 4)
        np.testing.assert_allclose(maps.sum(axis=-1), 1.0, atol=1e-6)

    def test_model_forward_accepts_windows(self, toy_cfg):
        model = HRVConformer(toy_cfg).eval()
        ws = [HrWindow(values=np.full(40, 0.5), epoch_id="e", label=0) for _ in range(3)]
        assert model_forward(ws, model).logits.shape == (3, 2)

    def test_float32_model(self, toy_cfg):
        model = HRVConformer(toy_cfg).astype(np.float32).eval()
        out = model(np.zeros((2, 40)))
        assert out.logits.dtype == np.float32

    @pytest.mark.slow
    def test_whole_model_gradients(self, toy_cfg):
        model = HRVConformer(toy_cfg, seed=11).eval()
        params = model.parameters()
        x = np.random.default_rng(6).normal(size=(2, 40))
        targets = np.array([0, 1])

        def loss(*_):
            return F.cross_entropy(model(x).logits, targets, smoothing=0.2)
        assert gradcheck(loss, params, floor=1e-6) < 1e-4
