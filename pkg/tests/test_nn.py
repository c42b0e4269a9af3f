import pytest
import numpy as np
import scipy.sparse as sp

from nn import functional as F
from nn.checkpoint import load_checkpoint, save_checkpoint
from nn.layers import Conv1dReadout, Dense, GRUCell, GraphConv, MLPHead, layer_rng
from nn.optim import Adam, AdamState, PlateauScheduler, adam_step
from nn.tensor import Tensor
from utils.errors import DatasetFormatError, NonDifferentiableError, NonFiniteError, ShapeError, TemplinkError

TOLERANCE = 1e-4


def _projected(out: Tensor, seed: int = 0) -> Tensor:
    """Scalar ``sum(out * R)`` for a fixed random ``R``."""
    weights = np.random.default_rng(seed).normal(size=out.shape)
    return F.reduce_sum(F.mul(out, Tensor(weights)))


def _param(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _ring_adjacency(n: int) -> sp.csr_matrix:
    rows = np.arange(n)
    cols = (rows + 1) % n
    upper = sp.csr_matrix((np.ones(n), (np.minimum(rows, cols), np.maximum(rows, cols))), shape=(n, n))
    return sp.csr_matrix(upper + upper.T)


@pytest.mark.nn
class TestGradients:
    """Analytic gradients against central differences, five random shapes per op."""

    @pytest.mark.parametrize("rows, d_in, d_out", [(4, 3, 2), (1, 5, 1), (6, 2, 4), (3, 7, 3), (2, 1, 5)])
    def test_dense(self, rows, d_in, d_out):
        """Dense layer with tanh."""
        rng = np.random.default_rng(rows * 100 + d_in * 10 + d_out)
        x, w, b = _param(rng, rows, d_in), _param(rng, d_in, d_out), _param(rng, d_out)
        assert F.gradient_check(lambda: _projected(F.dense_forward(x, w, b, "tanh")), [x, w, b]) < TOLERANCE

    @pytest.mark.parametrize(
        "batch, steps, d_in, hidden", [(2, 5, 3, 4), (1, 1, 2, 2), (3, 4, 1, 5), (2, 7, 4, 3), (4, 2, 3, 1)]
    )
    def test_gru_sequence(self, batch, steps, d_in, hidden):
        """GRU unrolled over several steps."""
        cell = GRUCell(d_in, hidden, layer_rng(batch + steps))
        sequence = np.random.default_rng(steps).normal(size=(batch, steps, d_in))
        assert F.gradient_check(lambda: _projected(cell.run(sequence)), cell.parameters()) < TOLERANCE

    @pytest.mark.parametrize("weighted", [False, True])
    @pytest.mark.parametrize("ring, d_in, d_out", [(5, 3, 2), (3, 1, 4), (8, 4, 3), (4, 2, 2), (6, 5, 1)])
    def test_graph_conv(self, weighted, ring, d_in, d_out):
        """Mean aggregation, with and without edge weights, plus an isolated node."""
        rng = np.random.default_rng(ring * 10 + d_in)
        adjacency = sp.block_diag([_ring_adjacency(ring), sp.csr_matrix((1, 1))]).tocsr()
        edges = sp.triu(adjacency).nnz
        weights = rng.uniform(0.1, 1.0, size=edges) if weighted else None
        h, w = _param(rng, ring + 1, d_in), _param(rng, d_in, d_out)
        fn = lambda: _projected(F.graph_conv(h, adjacency, w, weights, "tanh"))
        assert F.gradient_check(fn, [h, w]) < TOLERANCE

    @pytest.mark.parametrize(
        "sizes, d, k, width, channels",
        [((4, 3), 3, 4, 2, 4), ((2,), 2, 3, 1, 2), ((5, 1, 6), 2, 3, 3, 3), ((3, 3), 4, 2, 2, 1), ((7,), 1, 5, 2, 5)],
    )
    def test_sort_pool_and_conv1d(self, sizes, d, k, width, channels):
        """Sort pooling with padding feeding the 1-D readout."""
        rng = np.random.default_rng(sum(sizes) + d * k)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        h = _param(rng, int(offsets[-1]), d)
        weight, bias = _param(rng, channels, width * d), _param(rng, channels)

        def fn():
            rows = F.sort_pool(h, k, offsets)
            return _projected(F.conv1d_readout(rows, weight, bias, k=k, width=width))

        assert F.gradient_check(fn, [h, weight, bias]) < TOLERANCE

    @pytest.mark.parametrize("sizes, d", [((3, 2), 2), ((2,), 1), ((4, 5, 2), 3), ((2, 2, 2, 2), 4), ((6,), 5)])
    def test_two_node_pool(self, sizes, d):
        """Target-row concatenation per graph."""
        rng = np.random.default_rng(len(sizes) * 10 + d)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        h = _param(rng, int(offsets[-1]), d)
        fn = lambda: _projected(F.two_node_pool(h, offsets))
        assert F.gradient_check(fn, [h]) < TOLERANCE

    @pytest.mark.parametrize("size", [1, 2, 6, 11, 30])
    def test_bce_with_logits(self, size):
        """Loss gradient for mixed labels."""
        rng = np.random.default_rng(size)
        logits = _param(rng, size)
        labels = rng.integers(0, 2, size=size)
        assert F.gradient_check(lambda: F.bce_with_logits(logits, labels), [logits]) < TOLERANCE

    @pytest.mark.parametrize(
        "rows, d_in, hidden", [(3, 4, (5, 3)), (1, 2, (2,)), (5, 3, (4, 4)), (2, 6, ()), (4, 1, (3, 2, 2))]
    )
    def test_mlp_head(self, rows, d_in, hidden):
        """Hidden tanh layers then the scalar logit."""
        head = MLPHead(d_in, hidden, layer_rng(rows), act="tanh")
        head.out.weight.data = np.random.default_rng(rows).normal(size=head.out.weight.shape)
        x = np.random.default_rng(d_in).normal(size=(rows, d_in))
        assert F.gradient_check(lambda: _projected(head(x)), head.parameters()) < TOLERANCE


@pytest.mark.nn
class TestOps:
    """Forward values of ops and layers."""

    def test_gru_with_zero_parameters_halves_state(self):
        """Zero weights give z = r = 1/2 and a zero candidate, so h' = h / 2."""
        cell = GRUCell(2, 3, layer_rng(1))
        for p in cell.parameters():
            p.data = np.zeros_like(p.data)
        out = cell(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 3))))
        np.testing.assert_allclose(out.data, np.full((1, 3), 0.5))
        assert not cell.run(np.ones((2, 4, 2))).data.any()

    def test_propagation_matrix_rows(self):
        """Unweighted rows average neighbours; isolated nodes keep themselves."""
        adjacency = sp.block_diag([_ring_adjacency(4), sp.csr_matrix((1, 1))]).tocsr()
        operator = F.propagation_matrix(adjacency).toarray()
        np.testing.assert_allclose(operator.sum(axis=1), np.ones(5))
        assert operator[4, 4] == 1.0
        assert operator[0, 1] == 0.5
        with pytest.raises(ShapeError):
            F.propagation_matrix(adjacency, np.ones(2))

    def test_sort_pool_order_and_padding(self):
        """Rows sort by last channel descending, ties by the channel to the left; short graphs pad."""
        values = np.array([[1.0, 3.0], [2.0, 3.0], [0.0, 5.0]])
        assert F.sort_pool_index(values, 4).tolist() == [2, 1, 0, -1]
        pooled = F.sort_pool(Tensor(values), 4)
        assert not pooled.data[3].any()

    def test_sort_pool_ignores_row_order(self):
        """Permuting rows inside each graph leaves the pooled rows unchanged, duplicates included."""
        rng = np.random.default_rng(12)
        for _ in range(20):
            sizes = rng.integers(1, 8, size=3)
            offsets = np.concatenate([[0], np.cumsum(sizes)])
            values = rng.integers(0, 3, size=(int(offsets[-1]), 2)).astype(np.float64)
            order = np.concatenate([lo + rng.permutation(hi - lo) for lo, hi in zip(offsets[:-1], offsets[1:])])
            expected = F.sort_pool(Tensor(values), 4, offsets).data
            np.testing.assert_array_equal(F.sort_pool(Tensor(values[order]), 4, offsets).data, expected)

    def test_two_node_pool_rows(self):
        """The first two rows of each graph are concatenated."""
        h = Tensor(np.arange(10.0).reshape(5, 2))
        out = F.two_node_pool(h, np.array([0, 3, 5]))
        assert out.data.tolist() == [[0, 1, 2, 3], [6, 7, 8, 9]]
        with pytest.raises(ShapeError):
            F.two_node_pool(h, np.array([0, 1, 5]))

    def test_dense_shape_mismatch(self):
        """A dense input with the wrong width raises ShapeError."""
        layer = Dense(3, 2, layer_rng(0))
        with pytest.raises(ShapeError):
            layer(np.ones((2, 4)))

    def test_conv1d_kernel_must_fit(self):
        """A kernel wider than K is rejected at construction."""
        with pytest.raises(ShapeError):
            Conv1dReadout(3, 2, k=2, rng=layer_rng(0), width=3)

    def test_graph_conv_layer_matches_function(self):
        """The layer applies the prepared operator with its own weight."""
        adjacency = _ring_adjacency(4)
        layer = GraphConv(2, 3, layer_rng(3), act="identity")
        h = np.random.default_rng(0).normal(size=(4, 2))
        expected = F.graph_conv(h, adjacency, layer.weight)
        np.testing.assert_allclose(layer(h, F.propagation_matrix(adjacency)).data, expected.data)


@pytest.mark.nn
class TestErrors:
    """Non-finite and non-differentiable paths."""

    def test_debug_mode_flags_non_finite(self, debug_tensors):
        """With checks on, an op producing Inf raises."""
        with pytest.raises(NonFiniteError):
            F.add(Tensor([np.inf]), 1.0)

    def test_floor_is_not_differentiable(self):
        """Backward through floor raises."""
        p = Tensor([1.5, 2.5], requires_grad=True)
        with pytest.raises(NonDifferentiableError):
            F.reduce_sum(F.floor(p)).backward()

    def test_backward_needs_seed_for_vectors(self):
        """A non-scalar output needs an explicit seed gradient."""
        p = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError):
            F.mul(p, 2.0).backward()


@pytest.mark.nn
class TestOptimizer:
    """Adam and the plateau schedule."""

    def test_first_adam_step_moves_by_lr(self):
        """Bias correction makes the first step lr * sign(grad)."""
        param = np.array([1.0, -1.0, 0.5])
        grad = np.array([2.0, -3.0, 0.1])
        state = AdamState(np.zeros(3), np.zeros(3))
        new, state = adam_step(param, grad, state, lr=0.1)
        np.testing.assert_allclose(new, param - 0.1 * np.sign(grad), atol=1e-6)
        assert state.step == 1

    def test_adam_rejects_non_finite(self):
        """NaN gradients raise NonFiniteError."""
        with pytest.raises(NonFiniteError):
            adam_step(np.zeros(2), np.array([np.nan, 0.0]), AdamState(np.zeros(2), np.zeros(2)), lr=0.1)

    def test_adam_reduces_quadratic(self):
        """A few steps on sum(p^2) shrink the parameter."""
        p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
        optimizer = Adam([p], lr=0.1)
        for _ in range(50):
            optimizer.zero_grad()
            F.reduce_sum(F.mul(p, p)).backward()
            optimizer.step()
        assert np.abs(p.data).max() < 1.0

    def test_plateau_halves_rate(self):
        """After patience + 1 stalled epochs the rate is halved."""
        optimizer = Adam([Tensor(np.zeros(1), requires_grad=True)], lr=0.01)
        scheduler = PlateauScheduler(optimizer, factor=0.5, patience=1)
        assert not scheduler.step(0.5)
        assert not scheduler.step(0.4)
        assert scheduler.step(0.4)
        assert optimizer.lr == pytest.approx(0.005)


@pytest.mark.nn
class TestCheckpoint:
    """Parameter archives."""

    def test_round_trip_keeps_order_values_and_meta(self, tmp_path):
        """Saved state loads back exactly and in order; two saves of one state hold equal content."""
        head = MLPHead(3, (4,), layer_rng(1))
        a = save_checkpoint(tmp_path / "a.ckpt", head.state_dict(), {"variant": "SEAL", "input_dim": 7})
        b = save_checkpoint(tmp_path / "b" / "b.ckpt", head.state_dict(), {"input_dim": 7, "variant": "SEAL"})
        assert a.suffix == ".ckpt" and a.exists()
        state, meta = load_checkpoint(a)
        again, meta_again = load_checkpoint(b)
        assert meta == meta_again == {"variant": "SEAL", "input_dim": "7"}
        assert list(state) == list(head.state_dict()) == list(again)
        for name, value in head.state_dict().items():
            assert np.array_equal(state[name], value)
            assert np.array_equal(again[name], value)
        other = MLPHead(3, (4,), layer_rng(2))
        other.load_state_dict(state)
        for name, value in other.state_dict().items():
            assert np.array_equal(value, head.state_dict()[name])

    def test_bad_files_rejected(self, tmp_path):
        """Wrong magic and truncated archives are format errors."""
        path = save_checkpoint(tmp_path / "m.ckpt", {"w": np.ones((2, 2))})
        (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + path.read_bytes())
        with pytest.raises(DatasetFormatError):
            load_checkpoint(tmp_path / "bad.ckpt")
        (tmp_path / "short.ckpt").write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DatasetFormatError):
            load_checkpoint(tmp_path / "short.ckpt")

    def test_corrupt_bytes_raise_domain_error(self, tmp_path):
        """A damaged first byte or damaged values surface as DatasetFormatError, never a raw parser error."""
        path = save_checkpoint(tmp_path / "m.ckpt", {"w": np.ones((2, 2))}, {"variant": "SEAL"})
        blob = bytearray(path.read_bytes())

        head = bytearray(blob)
        head[0] ^= 0xFF
        (tmp_path / "head.ckpt").write_bytes(bytes(head))
        with pytest.raises(TemplinkError) as info:
            load_checkpoint(tmp_path / "head.ckpt")
        assert isinstance(info.value, DatasetFormatError)

        values = bytearray(blob)
        one = np.float64(1.0).tobytes()
        at = bytes(values).index(one)
        values[at + 7] ^= 0x01
        (tmp_path / "values.ckpt").write_bytes(bytes(values))
        with pytest.raises(DatasetFormatError):
            load_checkpoint(tmp_path / "values.ckpt")

    def test_foreign_archive_rejected(self, tmp_path):
        """An npz archive without the checkpoint magic is not a checkpoint."""
        path = tmp_path / "other.ckpt"
        with open(path, "wb") as handle:
            np.savez(handle, w=np.ones(3))
        with pytest.raises(DatasetFormatError):
            load_checkpoint(path)

    def test_state_mismatch_rejected(self):
        """Loading a state with a missing entry raises ShapeError."""
        head = MLPHead(3, (4,), layer_rng(1))
        state = head.state_dict()
        state.popitem()
        with pytest.raises(ShapeError):
            head.load_state_dict(state)
