import itertools
import math

import numpy as np
import pytest

import kmf


def test_threshold_and_free_rate():
    assert kmf.eta0() == pytest.approx(2.0 - math.sqrt(3.0), abs=1e-12)
    r = kmf.contraction_rate(0.0)
    assert r["rate"] == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert r["b"] == pytest.approx(2.0, abs=1e-6)
    assert r["cprime"] == pytest.approx(math.sqrt(3.0), rel=1e-6)
    with pytest.raises(kmf.InadmissibleError):
        kmf.contraction_rate(0.3)


def test_exact_w2_against_permutations():
    rng = np.random.default_rng(1)
    xa, va, xb, vb = (rng.normal(size=(5, 2)) for _ in range(4))
    got = kmf.w2(xa, va, xb, vb)["distance"]
    cost = ((xa[:, None] - xb[None]) ** 2).sum(-1) + ((va[:, None] - vb[None]) ** 2).sum(-1)
    best = min(sum(cost[i, p[i]] for i in range(5)) for p in itertools.permutations(range(5)))
    assert got == pytest.approx(math.sqrt(best / 5), rel=1e-10)


def test_entropic_plan_has_uniform_marginals():
    rng = np.random.default_rng(2)
    xa, va, xb, vb = (rng.normal(size=32) for _ in range(4))
    r = kmf.w2(xa, va, xb + 1.0, vb, entropic=True, eps=0.05)
    assert r["converged"]
    np.testing.assert_allclose(r["plan"].sum(axis=0), 1 / 32, rtol=1e-6)
    np.testing.assert_allclose(r["plan"].sum(axis=1), 1 / 32, rtol=1e-6)
    assert r["distance"] >= kmf.w2(xa, va, xb + 1.0, vb)["distance"] - 1e-9


def test_small_contraction_run():
    out = kmf.run("contraction", {"N": 64, "T": 4.0, "replicas": 2})
    assert out["status"] == "ok"
    assert out["series"].shape[1] == len(out["columns"])
    q = out["series"][:, out["columns"].index("Q_diff")]
    assert q[-1] < q[0]
    names = [row["experiment"] for row in out["verdict"]]
    assert "contraction.rate" in names


def test_simulation_is_thread_independent():
    cfg = {"N": 40, "T": 0.2, "field.kind": "sinusoidal", "field.gamma": 0.1, "field.delta": 0.05}
    kmf.set_threads(1)
    one = kmf.simulate(cfg)
    kmf.set_threads(3)
    three = kmf.simulate(cfg)
    kmf.set_threads(0)
    assert np.array_equal(one["x"], three["x"])
    assert np.array_equal(one["v"], three["v"])
    assert one["t"] == pytest.approx(0.2)


def test_bad_configuration():
    with pytest.raises(kmf.ConfigError):
        kmf.config_text("chaos", {"field.gama": 0.1})
    assert "field.gamma = 0.05" in kmf.config_text("chaos", {"field.gamma": 0.05})
