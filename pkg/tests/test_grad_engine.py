import numpy as np
import pytest

from auxfdiv import grad_engine as ge
from auxfdiv.errors import ContractViolation, DomainError
from auxfdiv.grad_engine import ParameterSet, Tape


def grads_of(fn, **values):
    ps = ParameterSet(values)
    with Tape() as tape:
        out = fn(*(ps.leaf(k) for k in values))
    return out.value, tape.backward(out)


class TestBackward:
    def test_square_sum(self):
        val, g = grads_of(lambda x: ge.tsum(ge.square(x)), x=[3.0])
        assert val == 9.0
        np.testing.assert_allclose(g["x"], [6.0])

    def test_logsumexp_of_zeros(self):
        val, g = grads_of(lambda x: ge.logsumexp(x), x=[0.0, 0.0])
        np.testing.assert_allclose(val, np.log(2.0))
        np.testing.assert_allclose(g["x"], [0.5, 0.5])

    def test_fan_out_accumulates(self):
        _, g = grads_of(lambda x: ge.tsum(x * x + x), x=[2.0, -1.0])
        np.testing.assert_allclose(g["x"], [5.0, -1.0])

    def test_unreached_param_gets_zero(self):
        ps = ParameterSet({"a": [1.0], "b": [2.0, 3.0]})
        with Tape() as tape:
            ps.leaf("b")
            out = ge.tsum(ps.leaf("a") * 2.0)
        g = tape.backward(out)
        np.testing.assert_array_equal(g["b"], [0.0, 0.0])
        np.testing.assert_array_equal(g["a"], [2.0])

    def test_backward_needs_scalar(self):
        with Tape() as tape:
            x = tape.param("x", np.ones(3))
            with pytest.raises(ContractViolation):
                tape.backward(x * 2.0)

    def test_take_scatters_gradient(self):
        _, g = grads_of(lambda a: ge.tsum(ge.take(a, [0, 0, 2])), a=np.ones((3, 2)))
        np.testing.assert_array_equal(g["a"], [[2, 2], [0, 0], [1, 1]])


class TestContracts:
    def test_matmul_shape_mismatch(self):
        with Tape() as tape:
            a = tape.constant(np.ones((2, 3)))
            with pytest.raises(ContractViolation):
                ge.matmul(a, np.ones((2, 3)))

    def test_log_of_nonpositive(self):
        with Tape() as tape:
            with pytest.raises((DomainError, ContractViolation)):
                ge.log(tape.constant(np.array([1.0, 0.0])))

    def test_overflow_names_node(self):
        with Tape() as tape:
            with pytest.raises(DomainError, match="node"):
                ge.exp(tape.constant(np.array([1000.0])))

    def test_unknown_op(self):
        with Tape() as tape:
            with pytest.raises(ContractViolation):
                tape.record("conv2d", [tape.constant(1.0)])


class TestReplay:
    def test_replay_with_new_params_matches_fresh_tape(self):
        ps = ParameterSet({"w": [[0.5, -0.2], [0.1, 0.3]]})
        x = np.array([[1.0, 2.0]])
        with Tape() as tape:
            out = ge.tsum(ge.softplus(ge.matmul(x, ps.leaf("w"))))
        new = {"w": np.array([[1.0, 0.0], [0.0, 1.0]])}
        replayed = tape.replay(new)[out.index]
        np.testing.assert_allclose(replayed, np.sum(np.logaddexp(0, x @ new["w"])))


class TestParameterSet:
    def test_roles_and_disjointness(self):
        theta = ParameterSet({"g.w": [1.0]}, role="theta")
        phi = ParameterSet({"e.w": [1.0]}, role="phi")
        assert ge.disjoint_roles(theta, phi)
        assert not ge.disjoint_roles(theta, ParameterSet({"g.w": [0.0]}, role="phi"))
        with pytest.raises(ContractViolation):
            ParameterSet(role="psi")

    def test_arrays_are_replaced_not_mutated(self):
        ps = ParameterSet({"w": [1.0, 2.0]})
        before = ps["w"]
        ps["w"] = ps["w"] + 1.0
        np.testing.assert_array_equal(before, [1.0, 2.0])

    def test_merged_rejects_duplicates(self):
        a = ParameterSet({"w": [1.0]})
        with pytest.raises(ContractViolation):
            a.merged(ParameterSet({"w": [2.0]}))


class TestGradientCheck:
    def test_composite_loss(self, rng):
        ps = ParameterSet({"w": rng.normal(size=(3, 2)), "b": rng.normal(size=2)})
        x = rng.normal(size=(5, 3))

        def loss(p):
            h = ge.bias_add(ge.matmul(x, p.leaf("w")), p.leaf("b"))
            return ge.logsumexp(ge.reshape(h, (10,))) + ge.tmean(ge.square(ge.clip(h, -5, 5)))

        assert ge.gradient_check(loss, ps) <= 1e-7

    def test_sqdist(self, rng):
        ps = ParameterSet({"a": rng.normal(size=(4, 3))})
        b = rng.normal(size=(6, 3))
        assert ge.gradient_check(lambda p: ge.tsum(ge.sqdist(p.leaf("a"), b)), ps) <= 1e-8

    def test_eps_must_be_positive(self):
        with pytest.raises(ContractViolation):
            ge.gradient_check(lambda p: ge.tsum(p.leaf("w")), ParameterSet({"w": [1.0]}), 0.0)
