import numpy as np
import pytest

from sbdehaze import nn
from sbdehaze import tensor as T
from sbdehaze.bridge import BridgeSchedule
from sbdehaze.data import clear_scenes, synth_haze_dataset
from sbdehaze.errors import ContractError
from sbdehaze.nets import (GlobalDiscriminator, ImageGenerator, PatchDiscriminator, PointDiscriminator,
                           PointGenerator, generator_forward, global_discriminator_forward,
                           patch_discriminator_forward, time_features)
from sbdehaze.prompt import ToyEncoder


@pytest.fixture(scope="module")
def gen():
    return ImageGenerator(np.random.default_rng(0))


def test_generator_identity_at_init(gen, rng):
    x = rng.random((2, 3, 32, 32))
    for t in (0.0, 0.4, 0.8):
        out = generator_forward(x, t, gen, BridgeSchedule())
        assert out.shape == x.shape
        assert np.max(np.abs(out.data - x)) == 0.0


def test_point_generator_identity_at_init(rng):
    net = PointGenerator(np.random.default_rng(1))
    x = rng.standard_normal((7, 2))
    assert np.array_equal(net(x, 0.2).data, x)


def test_generator_parameter_budget(gen):
    assert gen.num_parameters() < 500_000
    assert PointGenerator(np.random.default_rng(0)).num_parameters() < 500_000


def test_generator_deterministic(rng):
    a = ImageGenerator(np.random.default_rng(3))
    b = ImageGenerator(np.random.default_rng(3))
    for p in a.parameters():
        p.data += 0.01  # move off the identity so the body matters
    for p in b.parameters():
        p.data += 0.01
    x = rng.random((1, 3, 16, 16))
    assert np.array_equal(a(x, 0.6).data, b(x, 0.6).data)
    assert np.array_equal(a(x, 0.6).data, a(x, 0.6).data)


def test_off_grid_time_rejected_in_training(gen, rng):
    x = rng.random((1, 3, 8, 8))
    with pytest.raises(ContractError):
        generator_forward(x, 0.5, gen, BridgeSchedule())
    with pytest.raises(ContractError):
        generator_forward(x, 1.5, gen)
    assert generator_forward(x, 0.5, gen).shape == x.shape


def test_time_features_smooth():
    f = time_features(np.linspace(0, 1, 101))
    assert f.shape == (101, 32)
    assert np.max(np.abs(np.diff(f, axis=0))) < 0.2


def test_patch_map_shape_and_finite(rng):
    net = PatchDiscriminator(np.random.default_rng(0))
    out = patch_discriminator_forward(rng.random((2, 3, 32, 32)), 0.2, net)
    assert out.shape == (2, 1, 4, 4)
    assert np.all(np.isfinite(out.data))


def test_patch_translation_covariance(rng):
    net = PatchDiscriminator(np.random.default_rng(0))
    x = rng.random((1, 3, 128, 128))
    shifted = np.roll(x, 8, axis=-1)
    a = net(x, 0.4).data[0, 0]
    b = net(shifted, 0.4).data[0, 0]
    assert a.shape == (16, 16)
    # cells whose receptive field avoids the image border and the wrap seam
    assert np.allclose(b[5:11, 6:11], a[5:11, 5:10], atol=1e-12)


def test_patch_constant_input_near_constant(rng):
    net = PatchDiscriminator(np.random.default_rng(0))
    out = net(np.full((1, 3, 64, 64), 0.5), 0.0).data[0, 0]
    interior = out[2:-2, 2:-2]
    assert np.ptp(interior) < 1e-12


def test_patch_time_conditioned(rng):
    net = PatchDiscriminator(np.random.default_rng(0))
    x = rng.random((1, 3, 32, 32))
    assert not np.allclose(net(x, 0.0).data, net(x, 0.8).data)


def test_global_disc_single_logit_and_frozen_encoder(rng):
    net = GlobalDiscriminator(np.random.default_rng(0))
    x = T.Tensor(rng.random((3, 3, 16, 16)), requires_grad=True)
    out = global_discriminator_forward(x, net)
    assert out.shape == (3,)
    T.sum(out).backward()
    assert all(p.grad is not None for p in net.parameters())
    names = [n for n, _ in net.named_parameters()]
    assert names and all(n.startswith("head") for n in names)


def test_global_disc_depends_only_on_encoding(rng):
    net = GlobalDiscriminator(np.random.default_rng(0))
    x = rng.random((2, 3, 16, 16))
    flipped = x[..., ::-1].copy()
    enc = ToyEncoder()
    assert np.allclose(enc.embed(x).data, enc.embed(flipped).data, atol=1e-12)
    assert np.allclose(net(x).data, net(flipped).data, atol=1e-12)


def test_global_head_separates_toy_embeddings():
    ds = synth_haze_dataset(clear_scenes(160, seed=5), seed=5, test_fraction=0.0)
    net = GlobalDiscriminator(np.random.default_rng(0))
    real, fake = ds.clear, ds.hazy
    opt = nn.Adam(net.parameters(), lr=5e-2)
    for _ in range(300):
        opt.zero_grad()
        loss = T.mean(T.square(net(real) - 1.0)) + T.mean(T.square(net(fake)))
        loss.backward()
        opt.step()
    with T.no_grad():
        acc = (np.mean(net(real).data > 0.5) + np.mean(net(fake).data < 0.5)) / 2
    assert acc > 0.95


def test_point_discriminator_shape(rng):
    net = PointDiscriminator(np.random.default_rng(0))
    out = net(rng.standard_normal((5, 2)), 0.6)
    assert out.shape == (5,) and np.all(np.isfinite(out.data))


def test_time_features_vary_slowly_between_grid_points():
    # adjacent training times 0.2 apart must stay close so off-grid queries interpolate
    grid = time_features(np.arange(5) / 5)
    assert np.max(np.abs(np.diff(grid, axis=0))) < 1.0
