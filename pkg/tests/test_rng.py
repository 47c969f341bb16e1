import numpy as np
import pytest

from ri2d.rng import DEFAULT_SEED, RngSeed, draw_u64

MASK = (1 << 64) - 1


def xoshiro_reference(state, count):
    s = [int(v) for v in state]
    rotl = lambda x, k: ((x << k) | (x >> (64 - k))) & MASK
    out = []
    for _ in range(count):
        out.append(rotl((s[1] * 5) & MASK, 7) * 9 & MASK)
        t = (s[1] << 17) & MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out


def test_xoshiro_known_first_output():
    state = np.array([1, 2, 3, 4], dtype=np.uint64)
    assert int(draw_u64(state, 1)[0]) == 11520


@pytest.mark.parametrize("seed", [0, 1, DEFAULT_SEED, 2**64 - 1])
def test_xoshiro_matches_reference(seed):
    state = RngSeed(seed).jit_state(3)
    ref = xoshiro_reference(state.copy(), 1000)
    assert [int(v) for v in draw_u64(state, 1000)] == ref


def test_streams_are_reproducible_and_distinct():
    a = RngSeed(7, 1)
    assert np.array_equal(a.jit_state(0), RngSeed(7, 1).jit_state(0))
    states = {tuple(RngSeed(7, s).jit_state(c)) for s in range(3) for c in range(3)}
    assert len(states) == 9
    assert a.generator(2).random() == RngSeed(7, 1).generator(2).random()
    assert a.generator(2).random() != a.generator(3).random()


def test_seed_range_and_env(monkeypatch):
    with pytest.raises(ValueError):
        RngSeed(-1)
    with pytest.raises(ValueError):
        RngSeed(2**64)
    monkeypatch.setenv("RI2D_SEED", "0x10")
    assert RngSeed.from_env().seed == 16
    monkeypatch.delenv("RI2D_SEED")
    assert RngSeed.from_env().seed == DEFAULT_SEED


def test_uniform_bits_are_balanced():
    x = draw_u64(RngSeed(5).jit_state(), 20000)
    bits = np.unpackbits(x.view(np.uint8))
    assert abs(bits.mean() - 0.5) < 4 * 0.5 / np.sqrt(bits.size)
