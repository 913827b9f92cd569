import numpy as np
import pytest

from gambo.nets import (
    AdamState,
    CheckpointError,
    Mlp,
    adam_init,
    adam_step,
    clip_weights,
    lipschitz_upper_bound,
    load_mlp,
    mlp_batched_forward,
    mlp_batched_forward_and_input_grads,
    mlp_forward,
    mlp_init,
    mlp_input_grad,
    mlp_param_grads,
    save_mlp,
    scale_output,
    train_surrogate,
)
from gambo.tasks import OfflineDataset


def make_dataset(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return OfflineDataset(
        designs=X,
        raw_designs=X,
        scores=y,
        x_mean=np.zeros(X.shape[1]),
        x_std=np.ones(X.shape[1]),
        y_mean=float(y.mean()),
        y_std=max(float(y.std()), 1e-8),
    )


def affine_net(w, b):
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    return Mlp([w.shape[1], 1], [w], [np.array([float(b)])])


def randomized(dims, seed):
    net = mlp_init(dims, seed=seed)
    rng = np.random.default_rng(seed + 999)
    for lw in net.weights:
        lw += 0.2 * rng.standard_normal(lw.shape)
    for lb in net.biases:
        lb += 0.2 * rng.standard_normal(lb.shape)
    return net


class TestInit:
    def test_shapes(self):
        net = mlp_init([2, 8, 8, 1], seed=0)
        assert [w.shape for w in net.weights] == [(8, 2), (8, 8), (1, 8)]
        assert [b.shape for b in net.biases] == [(8,), (8,), (1,)]

    def test_deterministic(self):
        a = mlp_init([2, 8, 8, 1], seed=0)
        b = mlp_init([2, 8, 8, 1], seed=0)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_seed_changes_weights(self):
        a = mlp_init([2, 8, 1], seed=0)
        b = mlp_init([2, 8, 1], seed=1)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            mlp_init([2], seed=0)
        with pytest.raises(ValueError):
            mlp_init([2, 0, 1], seed=0)
        with pytest.raises(ValueError):
            mlp_init([2, 4, 3], seed=0)  # output dim must be 1

    def test_biases_zero(self):
        net = mlp_init([3, 5, 1], seed=4)
        for b in net.biases:
            assert np.all(b == 0)


class TestForward:
    def test_zero_net(self):
        net = mlp_init([3, 4, 1], seed=0)
        for w in net.weights:
            w[:] = 0.0
        assert mlp_forward(net, [1.0, -2.0, 0.5]) == 0.0

    def test_affine(self):
        net = affine_net([1.0, 2.0], 0.5)
        assert mlp_forward(net, [1.0, 1.0]) == pytest.approx(3.5, abs=1e-15)

    def test_two_hidden_matches_manual_recompute(self):
        net = randomized([2, 3, 2, 1], seed=11)
        z = np.array([0.3, -0.7])
        h = z
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            pre = w @ h + b
            if l < net.n_layers - 1:
                h = np.array([p if p > 0 else net.slope * p for p in pre])
            else:
                h = pre
        assert mlp_forward(net, z) == pytest.approx(float(h[0]), rel=1e-14)

    def test_dimension_mismatch(self):
        net = mlp_init([2, 4, 1], seed=0)
        with pytest.raises(ValueError):
            mlp_forward(net, [1.0, 2.0, 3.0])


class TestInputGrad:
    def test_affine_grad_is_w(self):
        net = affine_net([1.5, -2.0], 3.0)
        for z in ([0.0, 0.0], [4.0, -1.0]):
            assert np.allclose(mlp_input_grad(net, z), [1.5, -2.0], atol=1e-15)

    def test_zero_net_zero_grad(self):
        net = mlp_init([4, 6, 1], seed=0)
        for w in net.weights:
            w[:] = 0.0
        assert np.all(mlp_input_grad(net, np.ones(4)) == 0.0)

    def test_finite_differences(self):
        # central differences at h=1e-4, away from activation kinks
        rng = np.random.default_rng(5)
        h = 1e-4
        checked = 0
        while checked < 10:
            net = randomized([3, 6, 5, 1], seed=int(rng.integers(1000)))
            z = 2.0 * rng.standard_normal(3)
            _, _, pres = _preactivations(net, z)
            if min(abs(p) for p in pres) < 1e-2:
                continue
            g = mlp_input_grad(net, z)
            fd = np.array(
                [
                    (mlp_forward(net, _bump(z, i, h)) - mlp_forward(net, _bump(z, i, -h))) / (2 * h)
                    for i in range(3)
                ]
            )
            rel = np.abs(fd - g).max() / max(np.abs(g).max(), 1e-8)
            assert rel < 1e-4
            checked += 1


def _bump(z, i, h):
    out = np.array(z)
    out[i] += h
    return out


def _preactivations(net, z):
    h = np.asarray(z, dtype=np.float64)
    pres = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = w @ h + b
        if l < net.n_layers - 1:
            pres.extend(pre.tolist())
            h = np.where(pre > 0, pre, net.slope * pre)
        else:
            h = pre
    return None, None, pres


class TestBatched:
    def test_single_row_matches_scalar(self):
        net = randomized([3, 5, 1], seed=2)
        z = np.array([0.1, 0.2, -0.3])
        vals, grads = mlp_batched_forward_and_input_grads(net, z[None, :])
        assert vals[0] == mlp_forward(net, z)
        assert np.array_equal(grads[0], mlp_input_grad(net, z))

    def test_affine_rows_equal_w(self):
        net = affine_net([2.0, -1.0, 0.5], 0.0)
        Z = np.random.default_rng(0).standard_normal((3, 3))
        _, grads = mlp_batched_forward_and_input_grads(net, Z)
        assert np.allclose(grads, np.tile([2.0, -1.0, 0.5], (3, 1)), atol=1e-15)

    def test_rows_match_per_sample_calls_exactly(self):
        net = randomized([4, 7, 6, 1], seed=9)
        Z = np.random.default_rng(1).standard_normal((5, 4))
        vals, grads = mlp_batched_forward_and_input_grads(net, Z)
        for i in range(5):
            assert vals[i] == mlp_forward(net, Z[i])
            assert np.array_equal(grads[i], mlp_input_grad(net, Z[i]))


class TestParamGrads:
    def test_matches_finite_differences(self):
        net = randomized([2, 4, 1], seed=3)
        Z = np.random.default_rng(2).standard_normal((6, 2))
        dout = np.random.default_rng(3).standard_normal(6)
        dws, dbs = mlp_param_grads(net, Z, dout)
        h = 1e-6

        def objective(n):
            return float(dout @ mlp_batched_forward(n, Z))

        for l in range(net.n_layers):
            w = net.weights[l]
            i, j = w.shape[0] // 2, w.shape[1] // 2
            bumped = net.copy()
            bumped.weights[l][i, j] += h
            fd = (objective(bumped) - objective(net)) / h
            assert fd == pytest.approx(dws[l][i, j], rel=1e-4, abs=1e-7)


class TestTrainSurrogate:
    def test_linear_target_low_mse(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((200, 2))
        y = 2.0 * X[:, 0] + 1.0
        ds = make_dataset(X, y)
        net, mse = train_surrogate(ds, hidden=(64, 64), epochs=100, batch_size=32, seed=0)
        X_new = rng.standard_normal((200, 2))
        y_new = (2.0 * X_new[:, 0] + 1.0 - ds.y_mean) / ds.y_std
        held_out = float(np.mean((mlp_batched_forward(net, X_new) - y_new) ** 2))
        assert held_out < 1e-2

    def test_zero_epochs_returns_init(self):
        X = np.random.default_rng(0).standard_normal((10, 3))
        ds = make_dataset(X, X[:, 0])
        net, _ = train_surrogate(ds, hidden=(8,), epochs=0, seed=7)
        ref = mlp_init([3, 8, 1], seed=7)
        for a, b in zip(net.weights, ref.weights):
            assert np.array_equal(a, b)

    def test_constant_targets(self):
        X = np.random.default_rng(1).standard_normal((64, 2))
        c = 3.25
        ds = make_dataset(X, np.full(64, c))
        net, _ = train_surrogate(ds, hidden=(16,), epochs=50, seed=1)
        preds = mlp_batched_forward(net, X) * ds.y_std + ds.y_mean
        assert np.abs(preds - c).mean() < 0.05

    def test_deterministic(self):
        X = np.random.default_rng(2).standard_normal((50, 2))
        ds = make_dataset(X, X[:, 0] - X[:, 1])
        a, _ = train_surrogate(ds, hidden=(16, 16), epochs=5, seed=3)
        b, _ = train_surrogate(ds, hidden=(16, 16), epochs=5, seed=3)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_empty_dataset(self):
        with pytest.raises(Exception):
            ds = make_dataset(np.zeros((0, 2)), np.zeros(0))
            train_surrogate(ds)


class TestClip:
    def test_in_range_unchanged(self):
        net = mlp_init([2, 4, 1], seed=0)
        for w in net.weights:
            w *= 1e-3
        clipped = clip_weights(net, 0.01)
        for a, b in zip(net.weights, clipped.weights):
            assert np.array_equal(a, b)

    def test_clamps_to_paper_interval(self):
        net = affine_net([0.5, -0.7], 0.2)
        clipped = clip_weights(net, 0.01)
        assert np.array_equal(clipped.weights[0], [[0.01, -0.01]])
        assert clipped.biases[0][0] == 0.01

    def test_idempotent(self):
        net = randomized([3, 5, 1], seed=8)
        once = clip_weights(net, 0.01)
        twice = clip_weights(once, 0.01)
        for a, b in zip(once.weights, twice.weights):
            assert np.array_equal(a, b)

    def test_invalid_bound(self):
        with pytest.raises(ValueError):
            clip_weights(mlp_init([2, 1], seed=0), 0.0)


class TestLipschitz:
    def test_affine(self):
        net = affine_net([3.0, 4.0], 1.0)
        assert lipschitz_upper_bound(net) == pytest.approx(5.0, rel=1e-12)

    def test_zero_net(self):
        net = mlp_init([2, 4, 1], seed=0)
        for w in net.weights:
            w[:] = 0.0
        assert lipschitz_upper_bound(net) == 0.0

    def test_bounds_sampled_ratios(self):
        net = clip_weights(randomized([2, 8, 1], seed=6), 0.01)
        k = lipschitz_upper_bound(net)
        rng = np.random.default_rng(0)
        z1 = rng.standard_normal((1000, 2)) * 3
        z2 = rng.standard_normal((1000, 2)) * 3
        f1 = mlp_batched_forward(net, z1)
        f2 = mlp_batched_forward(net, z2)
        ratios = np.abs(f1 - f2) / np.linalg.norm(z1 - z2, axis=1)
        assert k >= ratios.max() - 1e-12

    def test_clip_safety(self):
        net = clip_weights(randomized([3, 12, 3, 1], seed=10), 0.01)
        k = lipschitz_upper_bound(net)
        assert np.isfinite(k)
        for w in net.weights:
            assert np.all(np.abs(w) <= 0.01)

    def test_scale_output(self):
        net = randomized([2, 6, 1], seed=12)
        k = lipschitz_upper_bound(net)
        scaled = scale_output(net, 1.0 / k)
        assert lipschitz_upper_bound(scaled) == pytest.approx(1.0, rel=1e-12)
        z = np.array([0.4, -0.2])
        assert mlp_forward(scaled, z) == pytest.approx(mlp_forward(net, z) / k, rel=1e-12)


class TestAdam:
    def test_state_shapes(self):
        net = mlp_init([2, 4, 1], seed=0)
        st = adam_init(net)
        assert isinstance(st, AdamState)
        for m, w in zip(st.m_w, net.weights):
            assert m.shape == w.shape
        assert st.step == 0

    def test_descends_quadratic(self):
        net = affine_net([0.0, 0.0], 0.0)
        st = adam_init(net, lr=0.05)
        Z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        target = np.array([1.0, 2.0, 3.0])
        for _ in range(500):
            resid = mlp_batched_forward(net, Z) - target
            dws, dbs = mlp_param_grads(net, Z, 2 * resid / 3)
            adam_step(net, dws, dbs, st)
        assert np.allclose(net.weights[0], [[1.0, 2.0]], atol=1e-2)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = randomized([3, 7, 4, 1], seed=13)
        path = tmp_path / "net.npz"
        save_mlp(net, path)
        loaded = load_mlp(path)
        assert loaded.layer_dims == net.layer_dims
        assert loaded.slope == net.slope
        for a, b in zip(net.weights + net.biases, loaded.weights + loaded.biases):
            assert np.array_equal(a, b)

    def test_corrupted_file_raises(self, tmp_path):
        net = mlp_init([2, 4, 1], seed=0)
        path = tmp_path / "net.npz"
        save_mlp(net, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_mlp(path)

    def test_garbage_file_raises(self, tmp_path):
        path = tmp_path / "junk.npz"
        path.write_text("not a checkpoint")
        with pytest.raises(CheckpointError):
            load_mlp(path)
