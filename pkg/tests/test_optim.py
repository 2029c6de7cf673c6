import numpy as np
import pytest

from lexigan.autodiff import Tensor
from lexigan.errors import ValidationError
from lexigan.optim import Adam, RMSProp


def param(v):
    t = Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
    return t


class TestAdam:
    def test_first_step_hand_evaluation(self):
        # m_hat/sqrt(v_hat) == g/|g| on step one, so the move is ~lr*sign(g)
        p = param([0.0])
        opt = Adam({"p": p}, lr=1e-4)
        p.grad = np.array([0.1])
        opt.step()
        m_hat = 0.1 * 0.1 / (1 - 0.9)
        v_hat = 0.001 * 0.1 ** 2 / (1 - 0.999)
        want = -1e-4 * m_hat / (np.sqrt(v_hat) + 1e-8)
        assert np.allclose(p.data, [want], rtol=0, atol=1e-18)
        assert abs(p.data[0] + 1e-4) < 1e-8  # ~ -lr * sign(g)

    def test_zero_gradient_no_move(self):
        p = param([1.0, -2.0])
        opt = Adam({"p": p})
        p.grad = np.zeros(2)
        opt.step()
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_equal_gradients_equal_updates(self):
        a, b = param([1.0]), param([1.0])
        opt = Adam({"a": a, "b": b})
        a.grad = np.array([0.37])
        b.grad = np.array([0.37])
        opt.step()
        assert np.array_equal(a.data, b.data)

    def test_scale_zero_matches_true_zero_gradient(self):
        # a lambda-weighted step with weight 0 must equal a zero-gradient step,
        # including the momentum carried over from earlier steps
        a, b = param([1.0]), param([1.0])
        oa, ob = Adam({"p": a}), Adam({"p": b})
        a.grad = np.array([0.5])
        b.grad = np.array([0.5])
        oa.step()
        ob.step()
        a.grad = np.array([123.0])
        b.grad = np.array([0.0])
        oa.step(grad_scale=0.0)
        ob.step()
        assert np.array_equal(a.data, b.data)
        assert np.array_equal(oa.m["p"], ob.m["p"])

    def test_counter_and_slots(self):
        p = param(np.ones((2, 3)))
        opt = Adam({"p": p})
        assert opt.m["p"].shape == (2, 3) and opt.v["p"].shape == (2, 3)
        assert opt.t == 0
        p.grad = np.ones((2, 3))
        opt.step()
        opt.step()
        assert opt.t == 2

    def test_shape_mismatch(self):
        p = param([1.0, 2.0])
        opt = Adam({"p": p})
        p.grad = np.ones(3)
        with pytest.raises(ValidationError, match="shape"):
            opt.step()


class TestRMSProp:
    def test_first_step_hand_evaluation(self):
        p = param([0.0])
        opt = RMSProp({"p": p}, lr=1e-4)
        p.grad = np.array([1.0])
        opt.step()
        want = -1e-4 / np.sqrt(0.1 + 1e-10)
        assert np.allclose(p.data, [want], rtol=0, atol=1e-18)
        assert abs(p.data[0] - (-3.162e-4)) < 1e-6

    def test_zero_gradient_no_move(self):
        p = param([4.0])
        opt = RMSProp({"p": p})
        p.grad = np.zeros(1)
        opt.step()
        assert np.array_equal(p.data, [4.0])

    def test_update_opposes_gradient(self):
        rng = np.random.default_rng(0)
        p = param(rng.standard_normal(16))
        opt = RMSProp({"p": p})
        for _ in range(5):
            g = rng.standard_normal(16)
            g[g == 0] = 1.0
            before = p.data.copy()
            p.grad = g
            opt.step()
            moved = p.data - before
            assert np.all(np.sign(moved) == -np.sign(g))

    def test_shape_mismatch(self):
        p = param([1.0])
        opt = RMSProp({"p": p})
        p.grad = np.ones(2)
        with pytest.raises(ValidationError, match="shape"):
            opt.step()
