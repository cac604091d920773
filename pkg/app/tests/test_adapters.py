from dataclasses import replace

import numpy as np
import pytest

from app.core.errors import ShapeError, UnknownSourceError
from app.models.domain import TaskLanguagePair
from app.numcore.tensor import Tensor, backward
from app.providers.base import AdapterStack, AdapterWeights, adapter_forward, adapter_param_count
from app.providers.census import count_parameters, merge_censuses
from app.providers.static import StaticAdapterProvider, madx_forward, new_adapter


def weights(rng, hidden=4, bottleneck=2, bias=True):
    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    return AdapterWeights(
        D=t(hidden, bottleneck), U=t(bottleneck, hidden),
        d_bias=t(bottleneck) if bias else None, u_bias=t(hidden) if bias else None, layer=0,
    )


class TestAdapterForward:
    """Test suite for the bottleneck adapter."""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(0)

    def test_matches_closed_form(self, rng):
        w = weights(rng)
        z = rng.normal(size=(3, 4))
        out = adapter_forward(Tensor(z), w)
        expected = np.maximum(z @ w.D.data + w.d_bias.data, 0.0) @ w.U.data + w.u_bias.data + z
        np.testing.assert_allclose(out.data, expected)

    def test_zero_adapter_is_identity(self, rng):
        w = AdapterWeights(
            D=Tensor(np.zeros((4, 2))), U=Tensor(np.zeros((2, 4))),
            d_bias=Tensor(np.zeros(2)), u_bias=Tensor(np.zeros(4)), layer=0,
        )
        z = rng.normal(size=(2, 3, 4))
        np.testing.assert_array_equal(adapter_forward(Tensor(z), w).data, z)

    def test_hidden_mismatch(self, rng):
        with pytest.raises(ShapeError):
            adapter_forward(Tensor(np.ones((2, 5))), weights(rng))

    def test_gradients_flow_into_weights(self, rng):
        w = weights(rng)
        backward(adapter_forward(Tensor(rng.normal(size=(3, 4))), w).sum())
        assert all(t.grad is not None for t in w.named().values())

    @pytest.mark.parametrize("hidden,bottleneck,bias,expected", [
        (768, 256, True, 394_240),
        (768, 256, False, 393_216),
        (8, 3, True, 59),
    ])
    def test_param_count(self, hidden, bottleneck, bias, expected):
        assert adapter_param_count(hidden, bottleneck, bias) == expected

    def test_stack_uses_layer_weights(self, rng):
        stack = AdapterStack([weights(rng), weights(rng)])
        z = Tensor(rng.normal(size=(1, 4)))
        assert not np.allclose(stack.apply(0, z).data, stack.apply(1, z).data)

    def test_stack_names_carry_layer_and_part(self, rng):
        first, second = weights(rng), replace(weights(rng, bias=False), layer=1)
        named = AdapterStack([first, second]).named()
        assert set(named) == {"0.D", "0.U", "0.d_bias", "0.u_bias", "1.D", "1.U"}
        assert named["1.U"] is second.U


class TestStaticAdapters:
    """Test suite for independently trained language and task adapters."""

    @pytest.fixture
    def provider(self):
        provider = StaticAdapterProvider(4, 2, 3, 2, "en", np.random.default_rng(0))
        for language in ("en", "l1"):
            provider.add_language(language)
        provider.add_task("pos")
        return provider

    def test_new_adapter_starts_as_identity(self):
        w = new_adapter(np.random.default_rng(0), 4, 2, layer=1)
        z = np.random.default_rng(1).normal(size=(2, 4))
        np.testing.assert_array_equal(adapter_forward(Tensor(z), w).data, z)
        assert np.any(w.D.data != 0)

    def test_mlm_pair_gets_language_adapter_only(self, provider):
        stack = provider.adapters_for(TaskLanguagePair(task="mlm", language="l1"))
        assert stack.task is None
        assert stack.language is provider.language_adapters["l1"]

    def test_task_pair_stacks_both(self, provider):
        stack = provider.adapters_for(TaskLanguagePair(task="pos", language="l1"))
        assert stack.task is provider.task_adapters["pos"]
        z = Tensor(np.random.default_rng(2).normal(size=(2, 4)))
        np.testing.assert_allclose(stack.apply(1, z).data, madx_forward(z, stack, 1).data)

    def test_unknown_sources(self, provider):
        with pytest.raises(UnknownSourceError):
            provider.adapters_for(TaskLanguagePair(task="pos", language="xx"))
        with pytest.raises(UnknownSourceError):
            provider.adapters_for(TaskLanguagePair(task="ner", language="en"))

    def test_parameter_names(self, provider):
        names = set(provider.language_parameters("l1"))
        assert "adapter.mlm.l1.0.D" in names
        assert "adapter.mlm.en.0.D" not in names
        assert "adapter.pos.en.1.u_bias" in provider.task_parameters()

    def test_bound_stack_names(self, provider):
        named = provider.adapters_for(TaskLanguagePair(task="pos", language="l1")).named()
        assert named["language.0.D"] is provider.language_adapters["l1"][0].D
        assert named["task.1.u_bias"] is provider.task_adapters["pos"][1].u_bias
        assert len(named) == 2 * 2 * 4
        mlm = provider.adapters_for(TaskLanguagePair(task="mlm", language="en")).named()
        assert not any(name.startswith("task.") for name in mlm)

    def test_census(self, provider):
        census = count_parameters(provider)
        assert census.trainable["language_adapters"] == 2 * 2 * adapter_param_count(4, 3)
        assert census.trainable["task_adapters"] == 2 * adapter_param_count(4, 2)
        assert census.total_frozen == 0

    def test_merge_censuses(self, provider):
        census = count_parameters(provider)
        merged = merge_censuses(census, census)
        assert merged.total_trainable == 2 * census.total_trainable
