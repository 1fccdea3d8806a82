import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pseudofake import autodiff as ad
from pseudofake import model as md
from pseudofake.autodiff import ShapeError, Tensor


def clip(seed=0, n=1000):
    return np.random.default_rng(seed).uniform(-1, 1, n)


class TestForward:
    @pytest.mark.parametrize("seed", range(5))
    def test_probabilities_sum_to_one(self, seed):
        p = md.forward(md.init_model(seed), clip(seed))
        assert abs(p.p_real + p.p_fake - 1) <= 1e-12
        assert 0 <= p.p_real <= 1 and 0 <= p.p_fake <= 1

    def test_zero_final_layer_is_ambiguous(self):
        m = md.init_model(3)
        m["fc2_w"].values[:] = 0
        m["fc2_b"].values[:] = 0
        p = md.forward(m, clip())
        assert (p.p_real, p.p_fake) == (0.5, 0.5)

    def test_too_short(self):
        with pytest.raises(ShapeError, match=str(md.MIN_LENGTH)):
            md.forward(md.init_model(0), np.zeros(md.MIN_LENGTH - 1))

    def test_minimum_length_accepted(self):
        md.forward(md.init_model(0), clip(n=md.MIN_LENGTH))

    def test_rejects_2d(self):
        with pytest.raises(ShapeError):
            md.forward(md.init_model(0), np.zeros((2, 400)))

    def test_pure(self):
        m = md.init_model(1)
        before = m.flat_parameters().copy()
        x = clip()
        a, b = md.forward(m, x), md.forward(m, x.copy())
        assert a == b
        assert m.flat_parameters().tobytes() == before.tobytes()

    def test_batch_order_irrelevant(self):
        m = md.init_model(2)
        xs = [clip(i) for i in range(4)]
        forward = [md.forward(m, x) for x in xs]
        backward = [md.forward(m, x) for x in reversed(xs)][::-1]
        assert forward == backward

    def test_bit_identical_across_processes(self):
        code = ("import numpy as np; from pseudofake import model as md; "
                "x = np.random.default_rng(0).uniform(-1, 1, 800); "
                "p = md.forward(md.init_model(42), x); print(repr(p.p_real), repr(p.logits))")
        outs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
                for _ in range(2)]
        assert outs[0] == outs[1] and outs[0]

    def test_input_gradient_vanishes_at_target(self):
        m = md.init_model(4)
        m["fc2_w"].values[:] = 0
        m["fc2_b"].values[:] = 0
        x = Tensor(clip(), requires_grad=True)
        with ad.Tape() as tape:
            loss = ad.cross_entropy(md.probabilities(m, x, track_params=False), (0.5, 0.5))
        tape.backward(loss)
        assert not x.grad.any()

    def test_front_end_definition(self):
        x = clip(n=300)
        h = ad.conv1d(Tensor(x[None]), Tensor(md.FRONT_END), 1).values
        np.testing.assert_array_equal(h[0], x[1:])
        np.testing.assert_allclose(h[1], md.PREEMPHASIS_GAIN * (x[1:] - md.PREEMPHASIS * x[:-1]), atol=1e-15)


class TestScore:
    def test_examples(self):
        assert md.detection_score((2.0, 2.0)) == 0.0
        assert md.detection_score((3.0, 1.0)) == 2.0

    def test_pair_uses_logits(self):
        p = md.forward(md.init_model(0), clip())
        assert md.detection_score(p) == p.logits[0] - p.logits[1]

    def test_monotone_in_p_real(self):
        grid = np.linspace(-20, 20, 401)
        pairs = [md.PredictionPair(*ad.softmax(Tensor([z, 0.0])).values) for z in grid]
        pairs.sort(key=lambda p: p.p_real)
        scores = [md.detection_score(p) for p in pairs]
        assert all(b > a for a, b in zip(scores, scores[1:]))


class TestInit:
    def test_deterministic(self):
        assert md.init_model(9).flat_parameters().tobytes() == md.init_model(9).flat_parameters().tobytes()

    def test_seeds_differ(self):
        assert not np.array_equal(md.init_model(1).flat_parameters(), md.init_model(2).flat_parameters())

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**63 - 1))
    def test_bounds(self, seed):
        m = md.init_model(seed)
        for (name, shape, fan_in), p in zip(md.LAYOUT, m.params):
            a = np.sqrt(1 / fan_in)
            assert p.shape == shape
            assert np.all(np.abs(p.values) < a), name


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = md.init_model(5)
        m.params[0].values += 0.125
        m.epoch = 17
        path = md.save_checkpoint(m, tmp_path / "ck.bin")
        back = md.load_checkpoint(path)
        assert back.flat_parameters().tobytes() == m.flat_parameters().tobytes()
        assert (back.seed, back.epoch) == (5, 17)

    def test_byte_layout(self, tmp_path):
        import json
        import struct
        m = md.init_model(0)
        data = md.save_checkpoint(m, tmp_path / "ck.bin").read_bytes()
        assert data[:4] == md.CHECKPOINT_MAGIC
        (n,) = struct.unpack("<I", data[4:8])
        header = json.loads(data[8:8 + n])
        assert header["architecture"] == md.ARCHITECTURE
        assert len(data) - 8 - n == 8 * m.n_parameters
        np.testing.assert_array_equal(np.frombuffer(data[8 + n:], "<f8"), m.flat_parameters())

    def test_rejects_foreign_file(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"nope")
        with pytest.raises(ValueError):
            md.load_checkpoint(p)

    def test_rejects_wrong_size(self):
        with pytest.raises(ShapeError):
            md.init_model(0).load_flat(np.zeros(3))
