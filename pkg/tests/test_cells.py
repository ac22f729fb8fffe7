"""Recurrent cell step functions: gate algebra, boundedness, gradients."""

import math

import numpy as np
import pytest

from rnic import cells, tensor as T
from rnic.errors import ConfigurationError
from rnic.tensor import Tensor

from conftest import max_rel_err, numeric_gradient


def zero_params(cell):
    for _, p in cell.named_params():
        p.data[...] = 0.0


def make_cell(kind, rng, dtype=np.float64, in_depth=2, depth=4, kernel=3, stride=1, hidden_kernel=1):
    return cells.build_cell(kind, rng, in_depth, depth, kernel, stride, hidden_kernel, dtype)


class TestConvLstm:
    def test_zero_weights_zero_state(self, rng):
        cell = make_cell(cells.LSTM, rng)
        zero_params(cell)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        out, state = cell(x, cell.zero_state(1, 3, 3))
        np.testing.assert_array_equal(out.data, 0.0)
        np.testing.assert_array_equal(state.c.data, 0.0)

    def test_zero_weights_prior_cell_one(self, rng):
        # f = i = o = 0.5, j = 0, so c' = 0.5 and h' = 0.5 * tanh(0.5).
        cell = make_cell(cells.LSTM, rng)
        zero_params(cell)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        st = cell.zero_state(1, 3, 3)
        st.c.data[...] = 1.0
        out, state = cell(x, st)
        np.testing.assert_allclose(state.c.data, 0.5, rtol=1e-12)
        np.testing.assert_allclose(out.data, 0.5 * math.tanh(0.5), rtol=1e-12)

    def test_output_bounded(self, rng):
        cell = make_cell(cells.LSTM, rng)
        for _, p in cell.named_params():
            p.data *= 5.0
        x = Tensor(rng.standard_normal((1, 4, 4, 2)) * 10.0)
        st = cell.zero_state(1, 4, 4)
        for _ in range(5):
            out, st = cell(x, st)
        assert np.all(np.abs(out.data) < 1.0)

    def test_state_shape_mismatch_raises(self, rng):
        cell = make_cell(cells.LSTM, rng, stride=2)
        x = Tensor(rng.standard_normal((1, 4, 4, 2)))
        with pytest.raises(ConfigurationError):
            cell(x, cell.zero_state(1, 4, 4))  # should be 2x2 after stride


class TestAssocConvLstm:
    def test_bound_magnitude_values(self):
        re, im = cells.bound_magnitude(Tensor(np.array([3.0, 0.3])), Tensor(np.array([4.0, 0.0])))
        np.testing.assert_allclose(re.data, [0.6, 0.3], rtol=1e-9)
        np.testing.assert_allclose(im.data, [0.8, 0.0], rtol=1e-9)

    def test_zero_everything_gives_zero_output(self, rng):
        cell = make_cell(cells.ASSOCIATIVE_LSTM, rng)
        zero_params(cell)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        out, state = cell(x, cell.zero_state(1, 3, 3))
        np.testing.assert_array_equal(out.data, 0.0)
        np.testing.assert_array_equal(state.c_re.data, 0.0)

    def test_output_depth_is_nominal(self, rng):
        cell = make_cell(cells.ASSOCIATIVE_LSTM, rng, depth=6)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        out, _ = cell(x, cell.zero_state(1, 3, 3))
        assert out.data.shape[-1] == 6
        assert cell.dc == 3

    def test_complex_magnitude_bounded(self, rng):
        cell = make_cell(cells.ASSOCIATIVE_LSTM, rng)
        for _, p in cell.named_params():
            p.data *= 8.0
        x = Tensor(rng.standard_normal((1, 4, 4, 2)) * 4.0)
        st = cell.zero_state(1, 4, 4)
        for _ in range(4):
            out, st = cell(x, st)
        dc = cell.dc
        re, im = out.data[..., :dc], out.data[..., dc:]
        assert np.all(np.sqrt(re**2 + im**2) <= 1.0 + 1e-9)

    def test_odd_depth_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            make_cell(cells.ASSOCIATIVE_LSTM, rng, depth=5)


class TestConvGru:
    def test_zero_weights_halves_state(self, rng):
        cell = make_cell(cells.GRU, rng)
        zero_params(cell)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        st = cell.zero_state(1, 3, 3)
        st.h.data[...] = rng.standard_normal(st.h.data.shape)
        out, _ = cell(x, st)
        np.testing.assert_allclose(out.data, 0.5 * st.h.data, rtol=1e-12)

    def test_zero_state_zero_weights_stays_zero(self, rng):
        cell = make_cell(cells.GRU, rng)
        zero_params(cell)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        out, _ = cell(x, cell.zero_state(1, 3, 3))
        np.testing.assert_array_equal(out.data, 0.0)


class TestResidualConvGru:
    def test_zeroed_projections_match_plain_gru(self, rng):
        gru = make_cell(cells.GRU, rng)
        rgru = make_cell(cells.RESIDUAL_GRU, rng)
        for (_, src), (_, dst) in zip(gru.named_params(), rgru.named_params()):
            dst.data[...] = src.data
        rgru.w_hres.data[...] = 0.0
        rgru.w_ox.data[...] = 0.0
        x = Tensor(rng.standard_normal((1, 4, 4, 2)))
        st_a, st_b = gru.zero_state(1, 4, 4), rgru.zero_state(1, 4, 4)
        st_a.h.data[...] = st_b.h.data[...] = rng.standard_normal(st_a.h.data.shape)
        out_a, new_a = gru(x, st_a)
        out_b, new_b = rgru(x, st_b)
        assert np.array_equal(out_a.data, out_b.data)
        assert np.array_equal(new_a.h.data, new_b.h.data)

    def test_identity_state_projection_value(self, rng):
        # zero GRU weights and unit state: blend gives 0.5, shortcut adds 0.1.
        cell = make_cell(cells.RESIDUAL_GRU, rng, in_depth=2, depth=4)
        zero_params(cell)
        eye = np.zeros_like(cell.w_hres.data)
        eye[0, 0] = np.eye(4)
        cell.w_hres.data[...] = eye
        x = Tensor(np.zeros((1, 3, 3, 2)))
        st = cell.zero_state(1, 3, 3)
        st.h.data[...] = 1.0
        out, state = cell(x, st)
        np.testing.assert_allclose(state.h.data, 0.6, rtol=1e-12)
        np.testing.assert_allclose(out.data, 0.6, rtol=1e-12)

    def test_output_differs_from_state_with_input_projection(self, rng):
        cell = make_cell(cells.RESIDUAL_GRU, rng)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        out, state = cell(x, cell.zero_state(1, 3, 3))
        assert not np.allclose(out.data, state.h.data)


class TestAllCells:
    @pytest.mark.parametrize("kind", cells.CELL_KINDS)
    def test_step_is_pure_and_deterministic(self, kind, rng):
        cell = make_cell(kind, rng)
        x = Tensor(rng.standard_normal((1, 3, 3, 2)))
        st = cell.zero_state(1, 3, 3)
        out1, _ = cell(x, st)
        out2, _ = cell(x, st)
        assert np.array_equal(out1.data, out2.data)

    @pytest.mark.parametrize("kind", cells.CELL_KINDS)
    def test_state_propagation_not_degenerate(self, kind, rng):
        cell = make_cell(kind, rng)
        xs = [Tensor(rng.standard_normal((1, 3, 3, 2))) for _ in range(3)]
        st = cell.zero_state(1, 3, 3)
        for x in xs:
            out_persisted, st = cell(x, st)
        out_reset, _ = cell(xs[-1], cell.zero_state(1, 3, 3))
        assert not np.allclose(out_persisted.data, out_reset.data)

    @pytest.mark.parametrize("kind", cells.CELL_KINDS)
    def test_gradients_vs_finite_differences(self, kind):
        rng = np.random.default_rng(hash(kind) % 2**31)
        cell = make_cell(kind, rng, stride=2)
        x = rng.standard_normal((1, 4, 4, 2)) * 0.5
        names, params = zip(*cell.named_params())
        st0 = cell.zero_state(1, 2, 2)
        proj = None

        def run():
            out, state = cell(Tensor(x), st0)
            out2, _ = cell(Tensor(x * 0.5), state)  # second step exercises state path
            return out2

        proj = rng.standard_normal(run().data.shape)

        def forward():
            return float((run().data * proj).sum())

        loss = T.tensor_sum(T.mul(run(), Tensor(proj)))
        loss.backward()
        numeric = numeric_gradient(forward, [p.data for p in params])
        for name, p, ng in zip(names, params, numeric):
            assert max_rel_err(p.grad, ng) < 1e-4, f"{kind}.{name}"
