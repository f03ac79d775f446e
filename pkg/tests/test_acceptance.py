"""End-to-end acceptance criteria A1-A11.

Each test carries ``@pytest.mark.acceptance("Ak")``; the conftest summary
prints one PASS/FAIL line per criterion. Wall-clock budgets are asserted
alongside the numerical checks.
"""

import time

import numpy as np
import pytest

from conftest import tiny_config, to_float64
from utlo.autodiff import Tensor, backward, gradcheck, no_grad, ops
from utlo.autodiff.gradcheck import numeric_gradient
from utlo.data import (
    Dataset,
    SyntheticWorldSpec,
    balanced_profile,
    generate_synthetic_dataset,
    make_exponential_profile,
    sample_indices,
    sampler_weights,
)
from utlo.gan import TrainState, UTLOConfig, UTLOModel, checkpoint_load, checkpoint_save, train_step
from utlo.gan.losses import loss_conditional, loss_total, loss_unconditional, real_low
from utlo.gan.train import state_records
from utlo.harness import ExperimentConfig, build_dataset, save_config
from utlo.harness.cli import main
from utlo.harness.study import desk_config, run_study
from utlo.metrics import LabeledImages, compute_report, frechet_distance, gaussian_fit, get_embedder, kid_mmd
from utlo.metrics.stats import GaussianStats

STUDY_BUDGET_S = 3600.0


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def u(rng, *shape):
    return rng.uniform(-1, 1, size=shape)


# -- A1 -----------------------------------------------------------------------

@pytest.mark.acceptance("A1")
def test_a1_long_tail_totals():
    with Timer() as t:
        rho100 = make_exponential_profile(10, 5000, 100)
        rho50 = make_exponential_profile(10, 5000, 50)
    assert rho100.total == 12406
    assert rho50.total == 13996
    assert t.elapsed < 1.0


# -- A2 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def rho100_labels_only():
    # labels are all the sampler looks at; 1x1 images keep this cheap
    profile = make_exponential_profile(10, 5000, 100)
    labels = np.repeat(np.arange(10), profile.class_counts)
    images = np.zeros((len(labels), 3, 1, 1), np.uint8)
    return Dataset(images, labels, profile, seed=0)


@pytest.mark.acceptance("A2")
@pytest.mark.parametrize("beta", [0.0, 0.35, 0.5, 1.0])
def test_a2_sampler_law(rho100_labels_only, beta):
    ds = rho100_labels_only
    draws = 100_000
    with Timer() as t:
        idx = sample_indices(ds, sampler_weights(ds.profile, beta), draws, np.random.default_rng(11))
    counts = np.asarray(ds.profile.class_counts, np.float64)
    mass = counts ** (1.0 - beta)
    p = mass / mass.sum()
    freq = np.bincount(ds.labels[idx], minlength=10)
    sigma = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(freq - draws * p) <= 3 * sigma), (freq, draws * p)
    if beta == 1.0:
        np.testing.assert_allclose(p, 0.1)
    if beta == 0.0:
        np.testing.assert_allclose(p, counts / counts.sum())
    assert t.elapsed < 10.0 / 4


# -- A3 -----------------------------------------------------------------------

def _weighted(t, w):
    return ops.sum(ops.mul(t, Tensor(w)))


def _op_cases():
    rng = np.random.default_rng(0)
    away_from_zero = rng.choice([-1, 1], size=(3, 4)) * rng.uniform(0.1, 1.0, size=(3, 4))
    cases = {
        "add": (lambda a, b: _weighted(ops.add(a, b), W1), [u(rng, 3, 4), u(rng, 1, 4)]),
        "sub": (lambda a, b: _weighted(ops.sub(a, b), W1), [u(rng, 3, 4), u(rng, 3, 1)]),
        "mul": (lambda a, b: _weighted(ops.mul(a, b), W1), [u(rng, 3, 4), u(rng, 3, 4)]),
        "scale": (lambda a: _weighted(ops.scale(a, -1.7), W1), [u(rng, 3, 4)]),
        "leaky_relu": (lambda a: _weighted(ops.leaky_relu(a), W1), [away_from_zero]),
        "tanh": (lambda a: _weighted(ops.tanh(a), W1), [u(rng, 3, 4)]),
        "softplus": (lambda a: _weighted(ops.softplus(a), W1), [3 * u(rng, 3, 4)]),
        "sum_axis": (lambda a: _weighted(ops.sum(a, axis=1, keepdims=True), W3), [u(rng, 3, 4)]),
        "mean_axis": (lambda a: _weighted(ops.mean(a, axis=0), W4), [u(rng, 3, 4)]),
        "reshape": (lambda a: _weighted(ops.reshape(a, (4, 3)), W1.T.copy()), [u(rng, 3, 4)]),
        "concat": (lambda a, b: _weighted(ops.concat([a, b], axis=0), W6), [u(rng, 3, 4), u(rng, 3, 4)]),
        "index_rows": (lambda a: _weighted(ops.index_rows(a, np.array([2, 0, 2])), W1), [u(rng, 3, 4)]),
        "index_cols": (lambda a: _weighted(ops.index_cols(a, 1, 3), W1[:, :2].copy()), [u(rng, 3, 4)]),
        "transpose": (lambda a: _weighted(ops.transpose(a), W1.T.copy()), [u(rng, 3, 4)]),
        "matmul": (lambda a, b: _weighted(ops.matmul(a, b), W1), [u(rng, 3, 5), u(rng, 5, 4)]),
        "linear": (lambda x, wt, b: _weighted(ops.linear(x, wt, b), W1), [u(rng, 3, 5), u(rng, 4, 5), u(rng, 4)]),
        "embedding": (lambda t: _weighted(ops.embedding(t, np.array([1, 3, 1])), W1), [u(rng, 5, 4)]),
        "logsumexp": (lambda a: _weighted(ops.logsumexp(a), W3[:, 0].copy()), [A34]),
        "conv2d_s1p1": (lambda x, k: _weighted(ops.conv2d(x, k, 1, 1), WC1), [u(rng, 2, 3, 5, 5), u(rng, 4, 3, 3, 3)]),
        "conv2d_s2p1": (lambda x, k: _weighted(ops.conv2d(x, k, 2, 1), WC2), [u(rng, 2, 3, 7, 7), u(rng, 4, 3, 3, 3)]),
        "conv2d_1x1": (lambda x, k: _weighted(ops.conv2d(x, k), WC3), [u(rng, 2, 3, 5, 5), u(rng, 4, 3, 1, 1)]),
        "upsample": (lambda x: _weighted(ops.upsample_nearest(x), WU), [u(rng, 2, 3, 4, 4)]),
        "avg_pool": (lambda x: _weighted(ops.avg_pool2d(x), WP), [u(rng, 2, 3, 4, 4)]),
    }
    return cases


_r = np.random.default_rng(1)
W1 = u(_r, 3, 4)
W3 = u(_r, 3, 1)
W4 = u(_r, 4)
W6 = u(_r, 6, 4)
A34 = u(_r, 3, 4)
WC1 = u(_r, 2, 4, 5, 5)
WC2 = u(_r, 2, 4, 4, 4)
WC3 = u(_r, 2, 4, 5, 5)
WU = u(_r, 2, 3, 8, 8)
WP = u(_r, 2, 3, 2, 2)
OP_CASES = _op_cases()


@pytest.mark.acceptance("A3")
@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_a3_op_gradients(name):
    fn, arrays = OP_CASES[name]
    res = gradcheck(fn, arrays)
    assert res.ok(1e-3), (name, res)


def _composite_params_check(model, real, labels, z, which, params, per_param=3, seed=0):
    """Analytic vs central-difference gradient at a few entries of every parameter."""
    def loss_value():
        l_c = loss_conditional(model, real, labels, z)
        l_uc = loss_unconditional(model, real_low(model, real), z)
        return loss_total(l_c, l_uc, 1.0)[which]

    for p in model.all_parameters():
        p.zero_grad()
    backward(loss_value())
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = rng.choice(p.data.size, size=min(per_param, p.data.size), replace=False)
        indices = [np.unravel_index(int(i), p.shape) for i in flat]
        orig_tensor = p.tensor

        def fn(t, p=p):
            p.tensor = t
            with no_grad():
                return loss_value()

        numeric = numeric_gradient(fn, [orig_tensor.data], 0, h=1e-6, indices=indices)
        p.tensor = orig_tensor
        for idx in indices:
            a, n = analytic[idx], numeric[idx]
            worst = max(worst, abs(a - n) / max(abs(a), abs(n), 1e-3))
    return worst


@pytest.fixture(scope="module")
def composite_setup():
    cfg = tiny_config()
    model = UTLOModel(cfg, seed=1)
    to_float64(model)
    ds = generate_synthetic_dataset(SyntheticWorldSpec(image_size=16, num_classes=4),
                                    make_exponential_profile(4, 20, 10), seed=2)
    rng = np.random.default_rng(5)
    idx = rng.choice(len(ds), 2, replace=False)
    z = rng.standard_normal((2, cfg.z_dim))
    return model, ds.as_float(idx).astype(np.float64), ds.labels[idx], z


@pytest.mark.acceptance("A3")
def test_a3_composite_discriminator_objective(composite_setup):
    model, real, labels, z = composite_setup
    with Timer() as t:
        worst = _composite_params_check(model, real, labels, z, 0, model.d_parameters())
    assert worst <= 1e-3
    assert t.elapsed < 60


@pytest.mark.acceptance("A3")
def test_a3_composite_generator_objective(composite_setup):
    model, real, labels, z = composite_setup
    with Timer() as t:
        worst = _composite_params_check(model, real, labels, z, 1, model.g_parameters())
    assert worst <= 1e-3
    assert t.elapsed < 60


# -- A4 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def default_model():
    return UTLOModel(UTLOConfig(), seed=0)


@pytest.mark.acceptance("A4")
def test_a4_low_output_label_blind(default_model):
    model = default_model
    rng = np.random.default_rng(0)
    z = rng.standard_normal((100, model.cfg.z_dim)).astype(np.float32)
    y1 = rng.integers(0, 10, 100)
    y2 = (y1 + rng.integers(1, 10, 100)) % 10
    assert np.all(y1 != y2)
    with Timer() as t, no_grad():
        _, low1 = model.generate(z, y1)
        _, low2 = model.generate(z, y2)
    assert low1.data.tobytes() == low2.data.tobytes()
    assert t.elapsed < 30


@pytest.mark.acceptance("A4")
def test_a4_gradient_routing(default_model):
    model = default_model
    rng = np.random.default_rng(1)
    ds = generate_synthetic_dataset(SyntheticWorldSpec(), make_exponential_profile(10, 10, 4), seed=1)
    idx = rng.choice(len(ds), 4, replace=False)
    real, labels = ds.as_float(idx), ds.labels[idx]
    z = rng.standard_normal((4, model.cfg.z_dim)).astype(np.float32)
    shared = model.discriminator.shared_parameters()
    tables = [model.g_store["G_map.class_embed"], model.d_store["D.class_embed"]]

    for p in model.all_parameters():
        p.zero_grad()
    d_uc, g_uc = loss_unconditional(model, real_low(model, real), z)
    backward(ops.add(d_uc, g_uc))
    assert all(tab.grad is None or not tab.grad.any() for tab in tables)
    assert all(p.grad is not None and np.abs(p.grad).max() > 0 for p in shared)

    for p in model.all_parameters():
        p.zero_grad()
    backward(loss_conditional(model, real, labels, z)[0])
    assert all(p.grad is not None and np.abs(p.grad).max() > 0 for p in shared)


# -- A5 -----------------------------------------------------------------------

@pytest.mark.acceptance("A5")
def test_a5_objective_weighting(default_model):
    model = default_model
    rng = np.random.default_rng(2)
    real = rng.uniform(-1, 1, (4, 3, 32, 32)).astype(np.float32)
    labels = rng.integers(0, 10, 4)
    z = rng.standard_normal((4, model.cfg.z_dim)).astype(np.float32)
    with no_grad():
        l_c = loss_conditional(model, real, labels, z)
        l_uc = loss_unconditional(model, real_low(model, real), z)
        for k in range(2):
            at0 = loss_total(l_c, l_uc, 0.0)[k]
            assert at0.data.tobytes() == l_c[k].data.tobytes()
            mid = float(loss_total(l_c, l_uc, 0.5)[k].data)
            ends = (float(at0.data) + float(loss_total(l_c, l_uc, 1.0)[k].data)) / 2
            assert abs(mid - ends) <= 1e-6


# -- A6 -----------------------------------------------------------------------

def _spd(rng, dim):
    a = rng.standard_normal((dim, dim))
    return a @ a.T / dim + 0.1 * np.eye(dim)


@pytest.mark.acceptance("A6")
def test_a6_frechet_oracle():
    with Timer() as t:
        one_d = frechet_distance(GaussianStats(np.array([0.0]), np.array([[1.0]]), 2),
                                 GaussianStats(np.array([3.0]), np.array([[1.0]]), 2))
        assert abs(one_d - 9.0) <= 1e-9

        rng = np.random.default_rng(0)
        ca, cb = _spd(rng, 16), _spd(rng, 16)
        ma, mb = rng.standard_normal(16), rng.standard_normal(16)
        # independent oracle: tr sqrt(AB) from the eigenvalues of AB
        tr_sqrt = np.sum(np.sqrt(np.clip(np.linalg.eigvals(ca @ cb).real, 0, None)))
        oracle = np.sum((ma - mb) ** 2) + np.trace(ca) + np.trace(cb) - 2 * tr_sqrt
        got = frechet_distance(GaussianStats(ma, ca, 100), GaussianStats(mb, cb, 100))
        assert abs(got - oracle) <= 1e-4 * abs(oracle)

        x = rng.standard_normal((500, 16))
        assert frechet_distance(gaussian_fit(x), gaussian_fit(x)) <= 1e-6
    assert t.elapsed < 10


# -- A7 -----------------------------------------------------------------------

def _brute_mmd(x, y):
    d = x.shape[1]
    k = lambda a, b: (a @ b / d + 1.0) ** 3  # noqa: E731
    m, n = len(x), len(y)
    kxx = sum(k(x[i], x[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    kyy = sum(k(y[i], y[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    kxy = sum(k(x[i], y[j]) for i in range(m) for j in range(n)) / (m * n)
    return kxx + kyy - 2 * kxy


@pytest.mark.acceptance("A7")
def test_a7_kid_unbiased_and_hand_value():
    with Timer() as t:
        x, y = np.zeros((2, 1)), np.ones((2, 1))
        assert kid_mmd(x, y, block=2) == _brute_mmd(x, y) == 7.0
        rng = np.random.default_rng(7)
        values = [kid_mmd(rng.standard_normal((200, 16)), rng.standard_normal((200, 16)), block=100)
                  for _ in range(50)]
        se = np.std(values, ddof=1) / np.sqrt(len(values))
        assert abs(np.mean(values)) <= 2 * se
    assert t.elapsed < 30


# -- A8 -----------------------------------------------------------------------

@pytest.mark.acceptance("A8")
def test_a8_few_shot_protocol():
    emb = get_embedder("random-conv")
    with Timer() as t:
        real = generate_synthetic_dataset(SyntheticWorldSpec(), balanced_profile(200, 10, {6, 7, 8, 9}), seed=3)
        noise = np.random.default_rng(0).normal(0, 0.1, real.images.shape).astype(np.float32)
        gen = LabeledImages(np.clip(real.as_float() + noise, -1, 1), real.labels)
        rep = compute_report(gen, real, range(10), emb)
        assert abs(rep.fid_fs - rep.fid) <= 1e-6
        assert len(set(rep.fs_real_counts.values())) == 1

        tail = generate_synthetic_dataset(SyntheticWorldSpec(), make_exponential_profile(10, 200, 20), seed=4)
        gen = LabeledImages(tail.as_float(), tail.labels)
        rep = compute_report(gen, tail, tail.profile.few_shot_classes, emb, kid_block=2)
        assert len(set(rep.fs_real_counts.values())) == 1
        assert rep.fs_real_counts == {c: min(tail.profile.class_counts[c] for c in rep.few_shot_classes)
                                      for c in rep.few_shot_classes}
    assert t.elapsed < 30


# -- A9 / A10 -----------------------------------------------------------------

@pytest.fixture(scope="session")
def desk_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_study")
    return run_study(desk_config(), [0, 1, 2], out, log=lambda *a: print(*a, flush=True))


@pytest.mark.acceptance("A9")
@pytest.mark.slow
def test_a9_directional_reproduction(desk_study):
    for p in desk_study.pairs:
        print(f"seed {p.seed}: FID-FS utlo={p.fid_fs['utlo']:.4f} conditional={p.fid_fs['conditional']:.4f}")
    print(f"study wall clock {desk_study.elapsed_s:.0f}s")
    assert desk_study.fid_fs_wins >= 2
    assert desk_study.elapsed_s <= STUDY_BUDGET_S


@pytest.mark.acceptance("A10")
@pytest.mark.slow
def test_a10_knowledge_sharing_signature(desk_study):
    for p in desk_study.pairs:
        print(f"seed {p.seed}: pair distance utlo={p.off_diagonal['utlo']:.4f} "
              f"conditional={p.off_diagonal['conditional']:.4f}")
    assert desk_study.similarity_wins >= 2


# -- A11 ----------------------------------------------------------------------

A11_CONFIG = {
    "seed": 9,
    "dataset": {"n_max": 100, "rho": 20},
    "model": {
        "g_channels": {4: 16, 8: 16, 16: 8, 32: 8},
        "d_channels": {32: 8, 16: 8, 8: 16, 4: 16},
        "z_dim": 8,
        "w_dim": 16,
        "embed_dim": 8,
        "d_feature_dim": 16,
    },
    "training": {"iterations": 6, "eval_every": 3, "batch_size": 4},
    "eval": {"embedder": "pool-flatten", "gen_count": 60, "fs_per_class": 10, "num_latents": 4, "grid_latents": 3},
}


@pytest.mark.acceptance("A11")
def test_a11_metrics_csv_byte_identical(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.yaml"
    save_config(ExperimentConfig.from_dict(A11_CONFIG), cfg_path)
    for name in ("first", "second"):
        assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "first" / "metrics.csv").read_bytes()
    b = (tmp_path / "second" / "metrics.csv").read_bytes()
    assert len(a.splitlines()) == 3
    assert a == b


@pytest.mark.acceptance("A11")
def test_a11_resume_bit_exact(tmp_path):
    cfg = ExperimentConfig()
    dataset = build_dataset(cfg)
    state = TrainState.create(cfg.model_config(), cfg.train_config(), seed=cfg.seed)
    for _ in range(2):
        train_step(state, dataset)
    checkpoint_save(state, tmp_path / "mid.ckpt")
    resumed = checkpoint_load(tmp_path / "mid.ckpt")
    for _ in range(5):
        train_step(state, dataset)
        train_step(resumed, dataset)
    a, b = state_records(state), state_records(resumed)
    assert a.keys() == b.keys()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
