"""Smoke tests for the python bindings: every exported operation runs and
returns sane values. Heavier numerical verification lives in the C++ suites."""

import math
import sys

import numpy as np

import paml


def test_control_signal():
    u = paml.control_signal(25.0, 100, 10)
    assert u.shape == (100,)
    assert abs(u[0] - 12.5) < 1e-12
    assert abs(u[9] - 25.0) < 1e-12
    assert abs(u[10] + 12.5) < 1e-12
    assert np.all(np.abs(u) >= 12.5 - 1e-12)
    assert np.all(np.abs(u) <= 25.0 + 1e-12)


def test_simulate_task_and_reconstruct():
    t = paml.simulate_task("cartpole", "full", np.array([1.0, 1.0]), desk_scale=True)
    x, y = t["inputs"], t["targets"]
    assert x.shape == (50, 5) and y.shape == (50, 4)
    # finite differences telescope back to the final state
    states = np.cumsum(np.vstack([x[0, :4], y]), axis=0)
    assert np.allclose(states[:-1], x[:, :4], atol=1e-9)


def test_render_monotone_in_length():
    masses = [paml.render_cartpole(0.5, l, 32).sum() for l in (0.5, 1.5, 3.0, 4.5)]
    assert all(b > a for a, b in zip(masses, masses[1:]))


def test_rbf_gram_psd():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(12, 3))
    g = paml.rbf_gram(a, a, signal_variance=1.7, lengthscales=np.array([1.0, 0.5, 2.0]))
    assert np.allclose(g, g.T)
    assert np.linalg.eigvalsh(g).min() > -1e-8
    assert np.allclose(np.diag(g), 1.7)


def test_utility_matches_closed_form():
    u0 = paml.utility(np.zeros(2), [(np.zeros(2), np.ones(2))])
    assert abs(u0 - math.log(2 * math.pi)) < 1e-10
    # permutation invariance
    comps = [(np.array([0.0, 0.0]), np.ones(2)), (np.array([2.0, -1.0]), np.array([0.5, 2.0]))]
    h = np.array([0.7, 0.3])
    assert abs(paml.utility(h, comps) - paml.utility(h, comps[::-1])) < 1e-12


def test_samplers():
    pts = paml.lhs_sample(np.zeros(2), np.ones(2), 10, seed=1)
    assert pts.shape == (10, 2)
    for d in range(2):
        assert sorted((pts[:, d] * 10).astype(int).tolist()) == list(range(10))
    s = paml.uniform_sample(np.array([2.0, -1.0]), np.array([3.0, 1.0]), seed=2)
    assert 2.0 <= s[0] <= 3.0 and -1.0 <= s[1] <= 1.0


def _toy_tasks(n_tasks, seed):
    rng = np.random.default_rng(seed)
    tasks = []
    for i in range(n_tasks):
        amp = 0.5 + i
        t = np.linspace(0, 2 * np.pi, 30)[:, None]
        y = amp * np.sin(t) + 0.05 * rng.normal(size=(30, 1))
        tasks.append(
            {"inputs": t, "targets": y, "descriptor": np.array([amp])}
        )
    return tasks


def test_meta_model_train_and_predict():
    tasks = _toy_tasks(3, 0)
    model = paml.MetaModel(tasks, latent_dim=2, inducing=12, seed=0, descriptor_mode="gaussian")
    trace = model.train(400)
    assert len(trace) == 400
    tail = np.mean([r["elbo"] for r in trace[-50:]])
    assert tail > trace[0]["elbo"]

    x = tasks[0]["inputs"]
    mean, var = model.predict(x, x, tasks[0]["targets"], inference_steps=60, seed=1)
    assert mean.shape == var.shape == tasks[0]["targets"].shape
    assert np.all(var > 0)
    rmse = float(np.sqrt(np.mean((mean - tasks[0]["targets"]) ** 2)))
    assert rmse < 0.5  # amplitude-1.5 family fit from its own trajectory

    zs_mean, zs_var = model.zero_shot(x, samples=16, seed=2)
    assert zs_mean.shape == zs_var.shape == mean.shape
    assert len(model.embeddings()) == 3

    m = model.metrics(tasks, inference_steps=60)
    assert math.isfinite(m["nll"]) and m["rmse"] < 0.5


def test_active_loop_micro():
    overrides = {
        "budget": 1,
        "training_steps": 120,
        "test_tasks": 4,
        "inducing": 16,
        "inference_steps": 15,
        "traj_steps": 30,
    }
    records = paml.run_active_loop(
        "cartpole", "full", "paml", seed=5, desk_scale=True, overrides=overrides
    )
    assert len(records) == 2
    assert records[0]["round"] == 0 and records[1]["round"] == 1
    assert records[0]["descriptor"].shape == (2,)  # the selected task
    assert math.isfinite(records[0]["nll"])
    # reproducibility
    again = paml.run_active_loop(
        "cartpole", "full", "paml", seed=5, desk_scale=True, overrides=overrides
    )
    assert records[0]["nll"] == again[0]["nll"]
    assert np.array_equal(records[0]["descriptor"], again[0]["descriptor"])


def main():
    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
                print(f"PASS {name}")
            except Exception as exc:  # noqa: BLE001
                failures += 1
                print(f"FAIL {name}: {exc!r}")
    if failures:
        sys.exit(1)


if __name__ == "__main__":
    main()
