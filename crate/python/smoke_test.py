"""Smoke test for the dynkin extension module.

Build the module and put it on the path, e.g.

    cargo build --release -p dynkin-py
    cp target/release/libdynkin.so python/dynkin.so
    python3 python/smoke_test.py
"""

import math
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import dynkin  # noqa: E402

CONFIG = """\
[model]
r = 0.08
delta0 = 0.05
sigma = 0.3
strike = 1.0
penalty = 0.1

[grid]
n_z = 160
n_y = 80

[sim]
dt = 0.02
n_paths = 200
horizon = 20.0

[checks]
run = ["roots", "geometry"]
"""


def main():
    p = dynkin.Params(0.08, 0.05, 0.3, strike=1.0, penalty=0.1)
    assert math.isclose(p.k, 0.08 - 0.045 - 0.025)
    assert math.isclose(p.ratio, 1.8)
    assert p.in_theorem_scope()

    try:
        dynkin.Params(0.08, 0.05, 0.0)
    except ValueError as e:
        assert "sigma" in str(e)
    else:
        raise AssertionError("zero volatility accepted")

    case = dynkin.classify_case(p)
    assert case["case_id"] in {"Case1", "Case2", "Case3", "Case4"}
    y1 = case["buyer_boundary_y1"]
    assert y1 > p.strike

    s = dynkin.solve_game(p, 400, 200)
    assert s.shape == (400, 200)
    top = [b for b in s.boundaries_y()["b1"] if b is not None][-1]
    assert abs(top / y1 - 1.0) < 0.01, (top, y1)

    v = s.value_at(3.0, 0.5)
    assert max(3.0 - 1.0, 0.0) <= v <= 3.0 - 1.0 + 0.1 + 1e-9, v
    assert not s.seller_region_empty()

    for name in dynkin.CHECKS:
        if name == "ladder":
            continue
        group = s.check(name)
        assert group["verdict"] in {"pass", "fail", "out-of-theorem-scope", "skipped"}
        print(f"{name:<14} {group['verdict']}")

    paths = dynkin.simulate_paths(p, 3.0, 0.5, n_paths=4, horizon=0.5, dt=0.01, seed=7)
    assert len(paths["t"]) == 51 and len(paths["y"]) == 4
    assert all(0.0 < y < 1.0 for row in paths["y"] for y in row)

    est = dynkin.evaluate_game(s, 3.0, 0.5, n_paths=2000, seed=3)
    assert abs(est["mean"] - v) < 4 * est["std_error"] + est["truncation_bias_bound"] + 0.02, (est, v)
    now = dynkin.evaluate_game(s, 3.0, 0.5, buyer="immediate", n_paths=10)
    assert math.isclose(now["mean"], 2.0)

    with tempfile.TemporaryDirectory() as d:
        groups, code = dynkin.run_config("all", CONFIG, d)
        assert code == 0, groups
        assert (Path(d) / "manifest.json").exists()

    print(f"dynkin {dynkin.__version__}: value at (3, 0.5) = {v:.5f}, mc {est['mean']:.5f}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
