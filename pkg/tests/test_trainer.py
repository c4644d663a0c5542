import math

import numpy as np
import pytest
from scipy import stats

from sbdehaze import nn
from sbdehaze import tensor as T
from sbdehaze.bridge import BridgeSchedule, roll_chain, substream
from sbdehaze.errors import ContractError
from sbdehaze.prompt import ToyEncoder, init_prompt
from sbdehaze.trainer import (EntropyCritic, LossWeights, TrainConfig, TrainState, adversarial_losses,
                              discriminator_loss, estimate_entropy, generator_adv_loss,
                              generator_components, infer, sample_time_index, sb_loss, total_loss,
                              train_step, transport_cost)


def small_image_state(seed=0, **kw):
    cfg = TrainConfig(mode="image", gen_width=4, disc_width=4, disc_blocks=2, critic_hidden=8,
                      nce_locations=16, seed=seed, **kw)
    enc = ToyEncoder()
    return TrainState(cfg, (3, 16, 16), prompt=init_prompt(enc.dim, seed), encoder=enc)


def image_batches(rng, n=4):
    return rng.uniform(0.3, 0.9, (n, 3, 16, 16)), rng.uniform(0.0, 1.0, (n, 3, 16, 16))


class ConstDisc:
    """Patch-style discriminator returning a fixed value."""

    def __init__(self, value):
        self.value = value

    def __call__(self, x, t):
        x = T.as_tensor(x)
        return x * 0.0 + self.value


# -- loss weights and total --------------------------------------------------------------

def test_loss_weights_defaults():
    w = LossWeights()
    assert w.as_dict() == {"sb": 1.0, "p": 1.0, "nce": 1.0, "phy": 0.5, "hfd": 0.5}
    with pytest.raises(ContractError):
        LossWeights(lambda_p=-1.0)


def test_total_loss_weighted_sum():
    comps = {k: T.Tensor(v) for k, v in zip(("adv", "sb", "p", "nce", "phy", "hfd"), (2, 1, 1, 1, 2, 2))}
    assert total_loss(comps, LossWeights()).data == 7.0
    assert total_loss(comps, LossWeights(0, 0, 0, 0, 0)).data == 2.0


def test_total_loss_gradient_is_linear(rng):
    x = T.Tensor(rng.standard_normal(5), requires_grad=True)
    comps = {"adv": T.sum(x * x), "sb": T.sum(T.tanh(x)), "phy": T.sum(T.exp(x))}
    w = LossWeights(lambda_sb=0.3, lambda_phy=2.0)
    total_loss(comps, w).backward()
    expected = 2 * x.data + 0.3 / np.cosh(x.data) ** 2 + 2.0 * np.exp(x.data)
    assert np.allclose(x.grad, expected, rtol=1e-12)


# -- sb loss and entropy -----------------------------------------------------------------

def test_sb_loss_special_cases(rng):
    critic = EntropyCritic(np.random.default_rng(0), 2, hidden=8)
    x, y = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    mse = np.mean((x - y) ** 2)
    assert np.isclose(sb_loss(x, y, 0.4, 0.0, critic).data, mse)
    assert np.isclose(sb_loss(x, y, 1.0, 0.5, critic).data, mse)
    assert sb_loss(x, x, 0.2, 0.0, critic).data == 0.0
    h = estimate_entropy(x, y, critic).data
    assert np.isclose(sb_loss(x, y, 0.2, 0.01, critic).data, mse - 2 * 0.01 * 0.8 * h)
    assert transport_cost(x, y).data == pytest.approx(mse)


def test_entropy_identical_pairs_zero(rng):
    critic = EntropyCritic(np.random.default_rng(0), 2, hidden=8)
    x = np.tile(rng.standard_normal((1, 2)), (8, 1))
    assert abs(estimate_entropy(x, x, critic).data) < 1e-12


def test_entropy_batch_too_small(rng):
    critic = EntropyCritic(np.random.default_rng(0), 2, hidden=8)
    with pytest.raises(ContractError):
        estimate_entropy(np.zeros((1, 2)), np.zeros((1, 2)), critic)


def test_entropy_bound_ceiling_and_training():
    rng = np.random.default_rng(2)
    critic = EntropyCritic(np.random.default_rng(0), 2, hidden=32)
    opt = nn.Adam(critic.parameters(), lr=1e-2)
    batch = 32
    for _ in range(300):
        x = rng.standard_normal((batch, 2))
        y = x + 0.1 * rng.standard_normal((batch, 2))
        opt.zero_grad()
        bound = estimate_entropy(x, y, critic)
        assert bound.data <= math.log(batch) + 1e-12
        (-bound).backward()
        opt.step()
    x = rng.standard_normal((batch, 2))
    assert estimate_entropy(x, x + 0.1 * rng.standard_normal((batch, 2)), critic).data > 1.0


# -- adversarial -------------------------------------------------------------------------

def test_adversarial_perfect_cases(rng):
    real, fake = rng.random((2, 3, 8, 8)), rng.random((2, 3, 8, 8))
    assert discriminator_loss(real, fake, 0.0, [_Split(real)]).data == 0.0
    assert generator_adv_loss(fake, 0.0, [ConstDisc(1.0)]).data == 0.0
    g, d = adversarial_losses(real, fake, 0.0, [ConstDisc(0.5)])
    assert np.isclose(g.data, 0.25) and np.isclose(d.data, 0.25)


class _Split:
    """Outputs 1 on the given real batch and 0 elsewhere."""

    def __init__(self, real):
        self.real = real

    def __call__(self, x, t):
        x = T.as_tensor(x)
        return x * 0.0 + float(np.array_equal(x.data, self.real))


def test_discriminator_step_reduces_d_loss(rng):
    state = small_image_state()
    real, fake = rng.random((4, 3, 16, 16)), rng.random((4, 3, 16, 16))
    before = discriminator_loss(real, fake, 0.2, state.discs)
    state.opt_d.zero_grad()
    before.backward()
    state.opt_d.step()
    assert discriminator_loss(real, fake, 0.2, state.discs).data < before.data


def test_discriminator_loss_detaches_fake(rng):
    state = small_image_state()
    fake = T.Tensor(rng.random((2, 3, 16, 16)), requires_grad=True)
    discriminator_loss(rng.random((2, 3, 16, 16)), fake, 0.0, state.discs).backward()
    assert fake.grad is None


# -- time sampling and rollout -----------------------------------------------------------

def test_time_index_uniform_chi_square():
    n = 5
    counts = np.zeros(n)
    for step in range(10_000):
        counts[sample_time_index(n, substream(0, step, 0))] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_rollout_carries_no_gradient(rng):
    state = small_image_state()
    x0 = rng.random((2, 3, 16, 16))
    out = roll_chain(x0, state.generator, 3, BridgeSchedule(), rng)
    assert isinstance(out, np.ndarray)
    assert all(p.grad is None for p in state.generator.parameters())


# -- train step --------------------------------------------------------------------------

def test_train_step_deterministic(rng):
    hazy, clear = image_batches(rng)
    logs = []
    params = []
    for _ in range(2):
        state = small_image_state(seed=4)
        logs.append([train_step(state, hazy, clear) for _ in range(2)])
        params.append([p.data.copy() for p in state.generator.parameters()])
    assert logs[0] == logs[1]
    assert all(np.array_equal(a, b) for a, b in zip(*params))


def test_train_step_log_fields(rng):
    state = small_image_state()
    log = train_step(state, *image_batches(rng))
    assert set(log) == {"step", "i", "adv", "sb", "p", "nce", "phy", "hfd", "total", "d_loss", "entropy"}
    assert log["step"] == 1 and 0 <= log["i"] < 5
    assert all(np.isfinite(v) for k, v in log.items() if k != "entropy")


def test_total_equals_weighted_parts(rng):
    state = small_image_state()
    hazy, _ = image_batches(rng)
    x1_pred = state.generator(hazy, 0.0)
    comps, _ = generator_components(state, hazy, hazy, x1_pred, 0.0, 0)
    assert set(comps) == {"adv", "sb", "p", "nce", "phy", "hfd"}
    manual = comps["adv"].data + sum(w * comps[k].data for k, w in state.cfg.weights.as_dict().items())
    assert np.isclose(total_loss(comps, state.cfg.weights).data, manual, rtol=1e-14)


def test_checkpoint_round_trip_same_next_step(rng, tmp_path):
    hazy, clear = image_batches(rng)
    a = small_image_state(seed=9)
    train_step(a, hazy, clear)
    path = tmp_path / "s.sbck"
    a.save(path)
    with pytest.raises(ContractError):
        small_image_state(seed=123).load(path)
    b = small_image_state(seed=9)
    for p in b.generator.parameters():
        p.data += 1.0
    b.load(path)
    assert b.step == a.step
    assert np.array_equal(b.prompt.vector, a.prompt.vector)
    la, lb = train_step(a, hazy, clear), train_step(b, hazy, clear)
    assert la == lb
    for p, q in zip(a.generator.parameters(), b.generator.parameters()):
        assert np.array_equal(p.data, q.data)


def test_two_steps_reduce_generator_loss():
    rng = np.random.default_rng(0)
    cfg = TrainConfig(mode="points", lr=1e-2, critic_hidden=8, hidden=32)
    state = TrainState(cfg)
    x0 = rng.standard_normal((64, 2))
    x1 = rng.standard_normal((64, 2)) + 4.0
    comps0, _ = generator_components(state, x0, x0, state.generator(x0, 0.0), 0.0, 0)
    for _ in range(2):
        state.opt_g.zero_grad()
        comps, _ = generator_components(state, x0, x0, state.generator(x0, 0.0), 0.0, 0)
        total_loss(comps, cfg.weights).backward()
        state.opt_g.step()
    comps2, _ = generator_components(state, x0, x0, state.generator(x0, 0.0), 0.0, 0)
    assert total_loss(comps2, cfg.weights).data < total_loss(comps0, cfg.weights).data


# -- inference ---------------------------------------------------------------------------

def test_infer_single_step_is_one_call(rng):
    state = small_image_state()
    for p in state.generator.parameters():
        p.data += 0.01
    x = rng.random((2, 3, 16, 16))
    with T.no_grad():
        direct = state.generator(x, 0.0).data
    assert np.array_equal(infer(x, 1, state), direct)


def test_infer_zero_tau_deterministic(rng):
    state = small_image_state()
    for p in state.generator.parameters():
        p.data += 0.01
    x = rng.random((1, 3, 16, 16))
    sched = BridgeSchedule(5, 0.0) if _zero_tau_allowed() else None
    if sched is None:
        pytest.skip("schedule rejects tau = 0")
    assert np.array_equal(infer(x, 5, state, sched, seed=1), infer(x, 5, state, sched, seed=2))


def _zero_tau_allowed():
    try:
        BridgeSchedule(5, 0.0)
    except Exception:
        return False
    return True


def test_infer_rejects_zero_nfe(rng):
    with pytest.raises(ContractError):
        infer(rng.random((1, 3, 16, 16)), 0, small_image_state())


def test_infer_points_shape(rng):
    state = TrainState(TrainConfig(mode="points", hidden=16, critic_hidden=8))
    x = rng.standard_normal((10, 2))
    for nfe in (1, 3, 5):
        assert infer(x, nfe, state).shape == (10, 2)
