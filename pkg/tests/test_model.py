import numpy as np
import pytest

from nasaswin import functional as F
from nasaswin.errors import ConfigurationError, DimensionError
from nasaswin.model import (
    ChannelMerge,
    ModelConfig,
    NasaSwin,
    PatchMerging,
    channel_merge,
    effective_window,
    patch_merging,
)
from nasaswin.nn import SGD
from nasaswin.tensor import backward


@pytest.fixture(scope="module")
def model():
    return NasaSwin(seed=0)


@pytest.fixture(scope="module")
def batch():
    return np.random.default_rng(1).uniform(-1, 1, (5, 6, 32, 32))


def test_stage_shapes(model, batch):
    trace = []
    model.features(batch[:2], trace=trace)
    assert trace == [
        (1, (2, 64, 12), None),
        (2, (2, 16, 24), (2, 16, 24)),
        (3, (2, 4, 48), (2, 4, 48)),
        (4, (2, 1, 96), None),
    ]


def test_span_placement_is_configurable():
    trace = []
    NasaSwin(ModelConfig(nasa_span=(1, 4)), seed=0).features(np.zeros((1, 6, 32, 32)), trace=trace)
    assert all(noise is not None for _, _, noise in trace)
    trace = []
    NasaSwin(ModelConfig(nasa_span=(3, 3)), seed=0).features(np.zeros((1, 6, 32, 32)), trace=trace)
    assert [noise is not None for _, _, noise in trace] == [False, False, True, False]


def test_logits_shape_and_finite(model, batch):
    out = model(batch).data
    assert out.shape == (5, 2) and np.isfinite(out).all()


def test_identical_rows_give_identical_logits(model, batch):
    out = model(np.repeat(batch[:1], 3, axis=0)).data
    assert np.array_equal(out[0], out[1]) and np.array_equal(out[0], out[2])


def test_logits_independent_of_batch_order_and_size(model, batch):
    full = model(batch).data
    perm = [3, 1, 4, 0, 2]
    assert np.array_equal(model(batch[perm]).data, full[perm])
    singles = np.concatenate([model(batch[i : i + 1]).data for i in range(5)])
    assert np.array_equal(singles, full)


def test_same_seed_same_model(batch):
    a, b = NasaSwin(seed=4), NasaSwin(seed=4)
    assert all(np.array_equal(p, q) for p, q in zip(a.state_dict().values(), b.state_dict().values()))
    assert np.array_equal(a(batch).data, b(batch).data)


def test_main_branch_independent_of_span():
    full = NasaSwin(ModelConfig(nasa_span=(2, 3)), seed=3).state_dict()
    plain = NasaSwin(ModelConfig(nasa_span=None), seed=3).state_dict()
    for name, value in plain.items():
        assert np.array_equal(full[name], value), name


def test_branch_starts_as_copy_of_main(model):
    s = model.state_dict()
    for stage in (2, 3):
        k = stage - 2
        for suffix in ("norm1.weight", "mlp.fc1.weight", "mlp.fc2.bias", "attn.proj.weight"):
            assert np.array_equal(s[f"noise_stages.{k}.blocks.0.{suffix}"], s[f"stages.{stage - 1}.blocks.0.{suffix}"])
        qkv = s[f"stages.{stage - 1}.blocks.0.attn.qkv.weight"]
        dim = qkv.shape[0]
        assert np.array_equal(s[f"noise_stages.{k}.blocks.0.attn.value.weight"], qkv[:, 2 * dim :])
        assert np.array_equal(s[f"noise_stages.{k}.blocks.0.attn.mix_weight"], np.eye(qkv.shape[0] // 12))
    assert np.array_equal(s["noise_stages.1.downsample.reduction.weight"], s["stages.2.downsample.reduction.weight"])


def test_branch_names_and_ablation(model, batch):
    names = model.branch_parameter_names()
    assert names and all(n.startswith(("noise_stages.", "channel_merge.")) for n in names)
    assert NasaSwin(ModelConfig(nasa_span=None)).branch_parameter_names() == []
    assert not np.array_equal(model(batch, use_branch=False).data, model(batch).data)


def test_wrong_input_shape(model):
    with pytest.raises(ConfigurationError):
        model(np.zeros((1, 6, 64, 64)))
    with pytest.raises(ConfigurationError):
        model(np.zeros((1, 3, 32, 32)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"stage_dims": (12, 24, 48, 95)},
        {"heads": (1, 5, 4, 8)},
        {"input_hw": (48, 48)},
        {"nasa_span": (3, 2)},
        {"nasa_span": (0, 2)},
        {"stage_depths": (1, 0, 1, 1)},
        {"head_mix": "mean"},
        {"init": "xavier"},
        {"num_classes": 1},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        ModelConfig(**kwargs)


def test_config_dict_and_array_roundtrip():
    cfg = ModelConfig(nasa_span=None, head_mix="per_head", init="trunc_normal", window=2)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    assert ModelConfig.from_arrays(cfg.to_arrays()) == cfg


def test_effective_window():
    assert effective_window(8, 8, 4) == 4
    assert effective_window(2, 2, 4) == 2
    with pytest.raises(ConfigurationError):
        effective_window(6, 6, 4)


def test_channel_merge_oracle():
    rng = np.random.default_rng(2)
    p = ChannelMerge(4, rng)
    main, noise = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
    h = np.concatenate([main, noise], axis=-1) @ p.fc1.weight.data + p.fc1.bias.data
    expected = F.gelu(h).data @ p.fc2.weight.data + p.fc2.bias.data
    np.testing.assert_allclose(channel_merge(main, noise, p).data, expected, atol=1e-14)
    with pytest.raises(DimensionError):
        channel_merge(main, noise[:, :2], p)


def test_patch_merging_oracle():
    rng = np.random.default_rng(3)
    p = PatchMerging(2, rng)
    H = W = 4
    x = rng.standard_normal((1, H * W, 2))
    grid = x[0].reshape(H, W, 2)
    rows = []
    for i in range(0, H, 2):
        for j in range(0, W, 2):
            rows.append(np.concatenate([grid[i, j], grid[i + 1, j], grid[i, j + 1], grid[i + 1, j + 1]]))
    g = np.array(rows)
    mu, var = g.mean(-1, keepdims=True), g.var(-1, keepdims=True)
    normed = (g - mu) / np.sqrt(var + 1e-5) * p.norm.weight.data + p.norm.bias.data
    expected = normed @ p.reduction.weight.data + p.reduction.bias.data
    np.testing.assert_allclose(patch_merging(x, H, W, p).data[0], expected, atol=1e-12)
    with pytest.raises(DimensionError):
        patch_merging(np.zeros((1, 9, 2)), 3, 3, p)


def test_clone_is_independent(model):
    c = model.clone()
    c.head.weight.data += 1.0
    assert not np.array_equal(c.head.weight.data, model.head.weight.data)


def test_fifty_steps_cut_loss_by_ten_percent():
    rng = np.random.default_rng(5)
    x, y = rng.uniform(-1, 1, (8, 6, 32, 32)), np.arange(8) % 2
    m = NasaSwin(seed=0)
    opt = SGD(m.parameters(), lr=0.001)
    losses = []
    for _ in range(50):
        loss = F.cross_entropy(m(x), y)
        losses.append(loss.item())
        backward(loss)
        opt.step()
    assert losses[-1] <= 0.9 * losses[0]
