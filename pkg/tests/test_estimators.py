import numpy as np
import pytest

from proxmmr import estimators, kernels, nn, scm
from proxmmr.errors import ConfigError, DomainError
from proxmmr.estimators import (
    TrainConfig,
    default_train_config,
    estimator_from_json,
    estimator_to_json,
    fit,
    fit_2sls,
    fit_ls,
    fit_network,
    predict_curve,
)
from proxmmr.kernels import KernelConfig
from proxmmr.nn import MlpConfig
from proxmmr.scm import DemandConfig, EstimatorView, demand_sample
from proxmmr.tensor import Rng


def _linear_view(n=200, seed=4, coefs=(2.0, 3.0, 1.0), noise=0.0):
    rng = Rng(seed)
    a = rng.normal(0, 1, (n, 1))
    w = rng.normal(0, 1, (n, 1))
    z = rng.normal(0, 1, (n, 2))
    c0, ca, cw = coefs
    y = c0 + ca * a + cw * w + noise * rng.normal(0, 1, (n, 1))
    return EstimatorView(a, w, z, y)


def test_ls_recovers_exact_linear_model():
    est = fit_ls(_linear_view())
    coef = est.coef.ravel()
    assert np.abs(coef - np.array([2.0, 3.0, 1.0])).max() < 1e-6


def test_ls_constant_outcome():
    view = _linear_view(coefs=(5.0, 0.0, 0.0))
    est = fit_ls(view)
    pred = est.predict(np.array([[7.0]]), np.array([[-2.0]]))
    assert abs(pred[0, 0] - 5.0) < 1e-6


def test_ls_qf_recovers_quadratic():
    rng = Rng(11)
    a = rng.normal(0, 1, (300, 1))
    w = rng.normal(0, 1, (300, 1))
    view = EstimatorView(a, w, rng.normal(0, 1, (300, 2)), a * a)
    est = fit_ls(view, quadratic=True)
    grid = np.array([[-1.0], [0.0], [2.0]])
    pred = est.predict(grid, np.zeros((3, 1)))
    assert np.abs(pred - grid ** 2).max() < 1e-6


def test_2sls_recovers_linear_scm():
    # W = 1 + 0.5 A + Z b + noise-free; Y = 2 + A + 3 W exactly.
    rng = Rng(21)
    n = 400
    a = rng.normal(0, 1, (n, 1))
    z = rng.normal(0, 1, (n, 2))
    w = 1.0 + 0.5 * a + z @ np.array([[1.0], [-0.5]])
    y = 2.0 + a + 3.0 * w
    est = fit_2sls(EstimatorView(a, w, z, y))
    coef = est.coef.ravel()
    assert np.abs(coef - np.array([2.0, 1.0, 3.0])).max() < 1e-6


def test_2sls_stage1_r2_in_unit_interval():
    est = fit_2sls(demand_sample(DemandConfig(n=500, seed=2)).estimator_view())
    (r2,) = est.diagnostics["stage1_r2"]
    assert 0.0 <= r2 <= 1.0


def test_2sls_rejects_tiny_sample():
    with pytest.raises(DomainError):
        fit_2sls(_linear_view(n=3))


def test_linear_methods_reject_overrides():
    with pytest.raises(ConfigError):
        default_train_config("demand", "ls", overrides={"epochs": 5})


def test_unknown_method_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(method="ridge")


def test_default_config_tables():
    u = default_train_config("demand", "nmmr-u", seed=3)
    assert (u.mlp.depth, u.mlp.width, u.lr, u.l2) == (4, 80, 3e-3, 3e-6)
    v = default_train_config("demand", "nmmr-v")
    assert v.mlp.depth == 3
    naive = default_train_config("demand", "naive")
    assert naive.mlp.depth == 2
    assert naive.mlp.input_dim == 1
    s = default_train_config("sprite", "nmmr-v", side=16)
    assert s.mlp.input_dim == 2 * 16 * 16
    assert s.batched_loss and s.l2 == 3e-7
    assert default_train_config("sprite", "naive", side=16).mlp.input_dim == 256


def _small_net(method, seed=0, epochs=200, batch_size=1000, lr=3e-2,
               l2=0.0, depth=2, width=16, batched=False):
    return TrainConfig(
        method=method, lr=lr, l2=l2, epochs=epochs, batch_size=batch_size,
        mlp=MlpConfig(1 if method == "naive" else 2, depth, width, seed=seed),
        kernel=KernelConfig(), seed=seed, batched_loss=batched,
    )


def test_naive_learns_noiseless_linear_map():
    # The naive net regresses on the treatment alone.
    view = _linear_view(n=300, coefs=(0.5, 2.0, 0.0))
    est = fit_network(view, _small_net("naive", epochs=400), "demand")
    pred = est.predict(view.a, view.w)
    assert float(np.mean((pred - view.y) ** 2)) < 1e-2


def test_naive_prediction_ignores_proxy():
    view = _linear_view(n=100, coefs=(0.5, 2.0, 0.0))
    est = fit_network(view, _small_net("naive", epochs=20), "demand")
    a = np.array([[1.0], [2.0]])
    assert np.array_equal(est.predict(a, np.zeros((2, 1))),
                          est.predict(a, np.full((2, 1), 9.0)))


def test_nmmr_loss_beats_zero_model():
    view = demand_sample(DemandConfig(n=200, seed=6)).estimator_view()
    scale = float(view.y.std())
    norm = EstimatorView(view.a, view.w, view.z, view.y / scale)
    est = fit_network(norm, _small_net("nmmr-v", epochs=300, lr=1e-2), "demand")
    K = kernels.rbf_matrix(kernels.kernel_features(norm, "demand"))
    zero_model = kernels.v_statistic(norm.y, K)
    r = norm.y - est.predict(norm.a, norm.w)
    assert kernels.v_statistic(r, K) < zero_model


def test_huge_l2_shrinks_weights():
    view = _linear_view(n=100)
    est = fit_network(view, _small_net("nmmr-v", epochs=250, l2=1e6), "demand")
    wnorm = max(np.abs(w).max() for w, _ in est.model.layers)
    assert wnorm < 1e-2


def test_u_and_v_losses_differ_only_through_diagonal():
    # With an identity-like diagonal removed, a one-step gradient under U
    # equals the V gradient minus the diagonal term's contribution.
    view = demand_sample(DemandConfig(n=50, seed=13)).estimator_view()
    K = kernels.rbf_matrix(kernels.kernel_features(view, "demand"))
    n = view.n
    r = view.y - view.y.mean()
    lhs = n * n * kernels.v_statistic(r, K)
    rhs = n * (n - 1) * kernels.u_statistic(r, K) + float(
        (r.ravel() ** 2 * np.diag(K)).sum()
    )
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_fit_is_bit_reproducible():
    view = demand_sample(DemandConfig(n=120, seed=9)).estimator_view()
    cfg = _small_net("nmmr-u", seed=5, epochs=30)
    a = fit_network(view, cfg, "demand")
    b = fit_network(view, cfg, "demand")
    for (wa, ba), (wb, bb) in zip(a.model.layers, b.model.layers):
        assert np.array_equal(wa, wb)
        assert np.array_equal(ba, bb)
    assert a.diagnostics["trace"] == b.diagnostics["trace"]


def test_estimator_never_reads_latents():
    d = demand_sample(DemandConfig(n=150, seed=14))
    clean = d.estimator_view()
    poisoned = EstimatorView(clean.a, clean.w, clean.z, clean.y)
    cfg = _small_net("nmmr-v", seed=1, epochs=20)
    a = fit_network(clean, cfg, "demand")
    b = fit_network(poisoned, cfg, "demand")
    for (wa, _), (wb, _) in zip(a.model.layers, b.model.layers):
        assert np.array_equal(wa, wb)


def test_trace_final_entry_recomputes_under_frozen_params():
    view = demand_sample(DemandConfig(n=80, seed=3)).estimator_view()
    cfg = _small_net("nmmr-v", epochs=15)
    est = fit_network(view, cfg, "demand")
    trace = est.diagnostics["trace"]
    assert len(trace) == 15 + 1
    idx = est.diagnostics["final_batch"]
    from proxmmr.autodiff import Tape

    tape = Tape()
    inputs = np.hstack([view.a, view.w])
    feats = kernels.kernel_features(view, "demand")
    loss, _ = estimators._network_loss(
        tape, est.model, inputs[idx], view.y[idx], cfg, features=feats[idx]
    )
    assert abs(tape.value(loss)[0, 0] - trace[-1]) <= 1e-10


def test_minibatch_trace_length():
    view = demand_sample(DemandConfig(n=100, seed=5)).estimator_view()
    cfg = _small_net("nmmr-v", epochs=4, batch_size=32)
    est = fit_network(view, cfg, "demand")
    # ceil(100/32) = 4 batches per epoch, plus the final frozen-model entry
    assert len(est.diagnostics["trace"]) == 4 * 4 + 1


def test_batched_loss_training_matches_materialized():
    view = demand_sample(DemandConfig(n=90, seed=7)).estimator_view()
    a = fit_network(view, _small_net("nmmr-v", epochs=25), "demand")
    b = fit_network(
        view,
        _small_net("nmmr-v", epochs=25, batched=True),
        "demand",
    )
    for (wa, _), (wb, _) in zip(a.model.layers, b.model.layers):
        assert np.abs(wa - wb).max() < 1e-9
    assert np.abs(np.array(a.diagnostics["trace"])
                  - np.array(b.diagnostics["trace"])).max() < 1e-12


def test_predict_curve_constant_model():
    est = fit_ls(_linear_view(coefs=(4.0, 0.0, 0.0)))
    grid = np.array([[0.0], [1.0]])
    curve = predict_curve(est, grid, Rng(3).normal(0, 1, (50, 1)))
    assert np.abs(curve - 4.0).max() < 1e-6


def test_predict_curve_averages_over_heldout():
    # y = w exactly, so the curve equals the held-out mean at every a.
    view = _linear_view(coefs=(0.0, 0.0, 1.0))
    est = fit_ls(view)
    heldout = Rng(8).normal(2.0, 1.0, (200, 1))
    curve = predict_curve(est, np.array([[10.0], [20.0]]), heldout)
    assert np.abs(curve - heldout.mean()).max() < 1e-6


def test_predict_curve_rejects_empty_heldout():
    est = fit_ls(_linear_view())
    with pytest.raises(DomainError):
        predict_curve(est, np.array([[1.0]]), np.zeros((0, 1)))


def test_fit_dispatch():
    view = _linear_view()
    assert fit(view, default_train_config("demand", "ls")).method == "ls"
    assert fit(view, default_train_config("demand", "ls-qf")).method == "ls-qf"
    assert fit(view, default_train_config("demand", "2sls")).method == "2sls"


def test_estimator_json_round_trip_linear():
    est = fit_ls(_linear_view(), quadratic=True)
    clone = estimator_from_json(estimator_to_json(est))
    a = np.array([[1.5]])
    w = np.array([[-0.5]])
    assert np.array_equal(est.predict(a, w), clone.predict(a, w))


def test_estimator_json_round_trip_network():
    view = _linear_view(n=60)
    est = fit_network(view, _small_net("naive", epochs=5), "demand")
    clone = estimator_from_json(estimator_to_json(est))
    x = Rng(9).normal(0, 1, (4, 1))
    assert np.array_equal(est.predict(x, x), clone.predict(x, x))
    assert clone.method == "naive"


def test_network_gradient_against_finite_differences():
    # End-to-end: d(V-statistic + l2)/dtheta checks out numerically.
    from helpers import central_diff_grad, rel_err
    from proxmmr.autodiff import Tape

    view = demand_sample(DemandConfig(n=30, seed=18)).estimator_view()
    cfg = _small_net("nmmr-v", l2=0.1, depth=2, width=6)
    model = nn.init_mlp(cfg.mlp)
    inputs = np.hstack([view.a, view.w])
    feats = kernels.kernel_features(view, "demand")
    K = kernels.rbf_matrix(feats)

    tape = Tape()
    loss, pids = estimators._network_loss(
        tape, model, inputs, view.y, cfg, features=feats
    )
    tape.backward(loss)

    params = model.parameters()
    for i, pid in enumerate(pids):
        def f():
            r = view.y - nn.forward_ref(model, inputs)
            pen = sum(float((w * w).sum()) for w in params[0::2])
            return kernels.v_statistic(r, K) + 0.1 * pen

        numeric = central_diff_grad(f, params[i])
        denom = max(np.abs(numeric).max(), 1e-8)
        assert rel_err(tape.grad(pid), numeric) <= 1e-5 or \
            np.abs(tape.grad(pid) - numeric).max() / denom <= 1e-5
