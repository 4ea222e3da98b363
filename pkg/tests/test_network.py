import numpy as np
import pytest
import torch

from nniqs.baselines import upscale_grid
from nniqs.dataset import Sample, cell_centers, pack
from nniqs.network import (
    MINIATURE,
    ImplicitField,
    LatentGrid,
    NetworkConfig,
    QueryError,
    encode,
    ensemble_weights,
    predict_grid,
    query,
    query_points,
)
from nniqs.training import (
    CheckpointError,
    TrainingConfig,
    batch_loss,
    load_checkpoint,
    save_checkpoint,
    train,
)

SMALL = NetworkConfig(latent_dim=6, n_resblocks=2, hidden=(16, 16), dtype="float64")


def passthrough(z, offset, cell):
    return z[..., 0]


def value_latent(values, t_chart=None, mu_chart=None):
    v = torch.as_tensor(np.asarray(values, float))
    h, w = v.shape
    t_chart = cell_centers(h) if t_chart is None else t_chart
    mu_chart = cell_centers(w) if mu_chart is None else mu_chart
    return LatentGrid(v[None, None], torch.as_tensor(t_chart, dtype=torch.float64),
                      torch.as_tensor(mu_chart, dtype=torch.float64))


def rand_input(h, w, seed=0):
    return pack(np.random.default_rng(seed).uniform(0.4, 0.6, (h, w)))


def test_latent_shape_and_determinism():
    model = ImplicitField(SMALL, seed=1)
    x = rand_input(7, 5)
    a, b = encode(model, x), encode(model, x)
    assert a.features.shape == (1, 6, 7, 5)
    assert torch.equal(a.features, b.features)
    with pytest.raises(ValueError):
        encode(model, np.zeros((7, 5, 2)))


def test_zero_encoder_gives_zero_latents():
    model = ImplicitField(SMALL, seed=1)
    with torch.no_grad():
        for p in model.encoder.parameters():
            p.zero_()
    assert torch.count_nonzero(encode(model, rand_input(6, 6)).features) == 0


def test_zeroed_placeholder_path_invariance():
    model = ImplicitField(SMALL, seed=2)
    with torch.no_grad():
        model.encoder.head.weight[:, 1:] = 0
    x = rand_input(6, 6)
    y = x.copy()
    y[..., 1:] = 0.37
    assert torch.equal(encode(model, x).features, encode(model, y).features)


def test_same_seed_same_parameters():
    a, b = ImplicitField(SMALL, seed=4), ImplicitField(SMALL, seed=4)
    for p, q in zip(a.parameters(), b.parameters()):
        assert torch.equal(p, q)
    for name, p in a.named_parameters():
        if name.endswith("bias"):
            assert torch.count_nonzero(p) == 0
        else:
            bound = 1 / np.sqrt(np.prod(p.shape[1:]))
            assert float(p.detach().abs().max()) <= bound


def test_default_architecture_parameter_count():
    model = ImplicitField(NetworkConfig(), seed=0)
    d = 64
    conv = lambda cin, cout: cin * cout * 9 + cout  # noqa: E731
    enc = conv(3, d) + 16 * conv(d, d) + conv(d, d)
    dec = (d + 4) * 256 + 256 + 4 * (256 * 256 + 256) + 256 + 1
    assert sum(p.numel() for p in model.parameters()) == enc + dec


def _weights_at(chart_t, chart_mu, x):
    lat = value_latent(np.zeros((len(chart_t), len(chart_mu))), chart_t, chart_mu)
    coords = torch.as_tensor(np.asarray(x, float)).reshape(1, -1, 2)
    return ensemble_weights(lat, coords)


def test_weights_cell_center_and_corner():
    chart = cell_centers(4)
    _, w, _ = _weights_at(chart, chart, [0.0, 0.0])
    np.testing.assert_allclose(w.numpy().ravel(), [0.25] * 4, atol=1e-15)
    corner, w, off = _weights_at(chart, chart, [chart[1], chart[2]])
    w = w.numpy().ravel()
    assert sorted(w.tolist()) == [0.0, 0.0, 0.0, 1.0]
    hit = int(np.argmax(w))
    assert int(corner.ravel()[hit]) == 1 * 4 + 2
    assert np.all(off.numpy()[0, 0, hit] == 0)


def test_weights_partition_of_unity():
    rng = np.random.default_rng(0)
    chart_t = np.sort(rng.uniform(-1, 1, 9))
    chart_mu = cell_centers(6)
    x = rng.uniform(-1, 1, (1000, 2))
    _, w, _ = _weights_at(chart_t, chart_mu, x)
    w = w.numpy()
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(-1), 1.0, atol=1e-14)


def test_degenerate_chart_rejected():
    with pytest.raises(QueryError):
        value_latent(np.zeros((1, 3)))
    with pytest.raises(QueryError):
        value_latent(np.zeros((3, 3)), t_chart=[0.0, 0.0, 0.5])


def test_passthrough_decoder_is_bilinear():
    rng = np.random.default_rng(5)
    values = rng.uniform(0.3, 0.7, (7, 9))
    t_chart, mu_chart = np.sort(rng.uniform(-1, 1, 7)), cell_centers(9)
    lat = value_latent(values, t_chart, mu_chart)
    x = np.column_stack([rng.uniform(t_chart[0], t_chart[-1], 1000),
                         rng.uniform(mu_chart[0], mu_chart[-1], 1000)])
    coords = torch.as_tensor(x)[None]
    got = query_points(lat, coords, torch.zeros_like(coords), passthrough)[0].numpy()
    for k in range(0, 1000, 97):
        ref = upscale_grid(values, t_chart, mu_chart, "bilinear", [x[k, 0]], [x[k, 1]])[0, 0]
        assert abs(got[k] - ref) < 1e-12


def test_clamped_outside_hull():
    values = np.arange(16.0).reshape(4, 4)
    lat = value_latent(values)
    coords = torch.tensor([[[-1.0, -1.0], [1.0, 1.0], [-0.99, 0.25]]], dtype=torch.float64)
    got = query_points(lat, coords, torch.zeros_like(coords), passthrough)[0].numpy()
    np.testing.assert_allclose(got, [0.0, 15.0, 2.0], atol=1e-14)


def test_predict_grid_on_latent_nodes_is_corner_exact():
    model = ImplicitField(SMALL, seed=3)
    lat = encode(model, rand_input(5, 5, seed=1))
    chart = cell_centers(5)
    grid = predict_grid(model, lat, chart, chart, (0.4, 0.4))
    feats = lat.features[0].permute(1, 2, 0)
    scale = torch.tensor([5.0, 5.0], dtype=torch.float64)
    with torch.no_grad():
        direct = model.decoder(feats, torch.zeros(5, 5, 2, dtype=torch.float64),
                               torch.full((5, 5, 2), 0.4, dtype=torch.float64) * scale).numpy()
    np.testing.assert_allclose(grid, direct, rtol=0, atol=1e-14)


def test_predict_grid_is_order_invariant():
    model = ImplicitField(SMALL, seed=3)
    lat = encode(model, rand_input(6, 6, seed=2))
    t = np.linspace(-0.9, 0.9, 11)
    mu = np.linspace(-0.8, 0.85, 7)
    grid = predict_grid(model, lat, t, mu, (0.1, 0.1))
    perm = np.random.default_rng(0).permutation(11)
    np.testing.assert_array_equal(predict_grid(model, lat, t[perm], mu, (0.1, 0.1)), grid[perm])
    assert query(model, lat, (t[3], mu[2]), (0.1, 0.1)) == pytest.approx(grid[3, 2], abs=1e-15)


def _mini_sample(seed=0, side=4, ratio=2):
    rng = np.random.default_rng(seed)
    m = side * ratio
    return Sample(
        input=rand_input(side, side, seed),
        input_coords=(cell_centers(side), cell_centers(side)),
        target_coords=(cell_centers(m), cell_centers(m)),
        target_values=rng.uniform(0.05, 0.95, (m, m)),
        cell=(2 / m, 2 / m),
        ratio=ratio,
    )


def fd_certification_case(seed=4):
    """Miniature net plus one 4x4 ratio-1 pair.

    Targets are kept away from the predictions (~0.5) so the L1 kink is never
    inside the stencil; at this seed no ReLU pre-activation crosses zero
    within +-1e-4 either.
    """
    model = ImplicitField(MINIATURE, seed=seed)
    sample = _mini_sample(seed, side=4, ratio=1)
    rng = np.random.default_rng(seed)
    low, high = rng.uniform(0.05, 0.3, (4, 4)), rng.uniform(0.7, 0.95, (4, 4))
    sample.target_values = np.where(rng.random((4, 4)) < 0.5, low, high)
    return model, [sample]


def max_fd_relative_error(model, samples, h=1e-4):
    loss = batch_loss(model, samples)
    model.zero_grad()
    loss.backward()
    worst = 0.0
    with torch.no_grad():
        for p in model.parameters():
            flat, grad = p.view(-1), p.grad.view(-1)
            for i in range(flat.numel()):
                keep = flat[i].item()
                flat[i] = keep + h
                up = float(batch_loss(model, samples))
                flat[i] = keep - h
                down = float(batch_loss(model, samples))
                flat[i] = keep
                fd, ad = (up - down) / (2 * h), float(grad[i])
                denom = max(abs(fd), abs(ad))
                if denom > 1e-9:
                    worst = max(worst, abs(fd - ad) / denom)
                else:
                    assert abs(fd - ad) < 1e-12
    return worst


def test_gradient_matches_finite_differences():
    model, samples = fd_certification_case()
    assert max_fd_relative_error(model, samples) < 1e-4


def test_gradient_step_descends():
    model = ImplicitField(MINIATURE, seed=12)
    sample = [_mini_sample(3)]
    loss = batch_loss(model, sample)
    model.zero_grad()
    loss.backward()
    sq = sum(float((p.grad**2).sum()) for p in model.parameters())
    eps = 1e-6
    with torch.no_grad():
        for p in model.parameters():
            p -= eps * p.grad
        after = float(batch_loss(model, sample))
    change = after - float(loss)
    assert change == pytest.approx(-eps * sq, rel=1e-3)


def test_checkpoint_round_trip(tmp_path):
    model = ImplicitField(SMALL, seed=6)
    path = tmp_path / "m.iqs"
    save_checkpoint(model, path, {"epoch": 3})
    back, meta = load_checkpoint(path)
    assert meta == {"epoch": 3}
    x = rand_input(6, 6)
    t = np.linspace(-0.9, 0.9, 13)
    a = predict_grid(model, encode(model, x), t, t, (0.1, 0.1))
    b = predict_grid(back, encode(back, x), t, t, (0.1, 0.1))
    assert np.array_equal(a, b)
    assert path.read_bytes()[:4] == b"IQS1"


def test_checkpoint_round_trip_float32(tmp_path):
    cfg = NetworkConfig(latent_dim=5, n_resblocks=1, hidden=(8,), dtype="float32")
    model = ImplicitField(cfg, seed=6)
    save_checkpoint(model, tmp_path / "m.iqs")
    back, _ = load_checkpoint(tmp_path / "m.iqs")
    for p, q in zip(model.parameters(), back.parameters()):
        assert p.dtype == q.dtype and torch.equal(p, q)


def test_checkpoint_rejects_mismatches(tmp_path):
    model = ImplicitField(SMALL, seed=6)
    path = tmp_path / "m.iqs"
    save_checkpoint(model, path)
    other = NetworkConfig(latent_dim=8, n_resblocks=2, hidden=(16, 16), dtype="float64")
    with pytest.raises(CheckpointError):
        load_checkpoint(path, expected=other)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XQS1"
    (tmp_path / "bad.iqs").write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.iqs")
    # header claims a different D than the stored tensors
    raw = path.read_bytes().replace(b'"latent_dim": 6', b'"latent_dim": 7')
    (tmp_path / "d.iqs").write_bytes(raw)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "d.iqs")
    (tmp_path / "short.iqs").write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.iqs")
