"""Quick end-to-end check of the Python bindings.

Build and install first:  maturin develop --release -m crates/python/Cargo.toml
(or `pip install crates/python`), then run  python python/smoke_test.py
"""

import json
import math
import tempfile

import pbo


def main():
    assert set(pbo.benchmark_names()) == {"branin", "kyger3d", "kyger2d", "squiggle"}

    # Branin global minimum at (pi, 2.275) in native units.
    x = [(math.pi + 5.0) / 15.0, 2.275 / 15.0]
    assert abs(pbo.evaluate("branin", x) - 0.397887) < 1e-5

    assert abs(pbo.expected_improvement(0.0, 1.0, 0.0) - 0.398942) < 1e-6
    assert pbo.profile_expected_improvement(0.3, 0.7, 1.0, 0.2) == pbo.expected_improvement(0.3, 0.7, 1.0)

    design = pbo.lhs(12, 2, seed=3)
    y = [pbo.evaluate("branin", row) for row in design]
    gp = pbo.GpModel(design, y)
    mean, sd = gp.predict(design)
    assert max(abs(m - v) for m, v in zip(mean, y)) < 1e-3 * (max(y) - min(y))
    again = pbo.GpModel.from_json(gp.to_json())
    assert again.lengthscales == gp.lengthscales

    points, tags = pbo.tricands([[0.2], [0.5], [0.9]])
    assert len(points) == len(tags) and "fringe" in tags

    dgp = pbo.DgpModel(design, y, iters=200, seed=1)
    assert dgp.retained_draws == 100
    m, s = dgp.predict([[0.5, 0.5]])
    assert math.isfinite(m[0]) and s[0] >= 0.0

    out = pbo.run_loop("branin", "pbo", n_init=8, m_total=11, seed=2,
                       axis_size=10, final_axis_size=11, samples=100)
    assert len(out["x"]) == 11
    assert len(out["records"]) == 3
    assert json.loads(out["records"][0])["method"] == "pbo"
    est = out["estimate"]
    assert all(lo <= mu <= hi for lo, mu, hi in zip(est["ci_lo"], est["mu_t"], est["ci_hi"]))

    with tempfile.TemporaryDirectory() as tmp:
        cfg = {"function": "branin", "method": "lhs", "n_init": 10, "m_total": 12,
               "final_axis_size": 11, "samples": 100, "output_dir": tmp}
        path = pbo.run_experiment(json.dumps(cfg))
        with open(path + "/metrics.csv") as f:
            assert f.readline().startswith("rep,seed,status,rmse")

    print("smoke test passed")


if __name__ == "__main__":
    main()
