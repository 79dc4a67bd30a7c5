"""Smoke test for the eiv_tls_py extension module.

Build the module and put it on the import path first, e.g.

    cargo build -p eiv-tls-py --release --features extension-module
    cp target/release/libeiv_tls_py.so python/eiv_tls_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import eiv_tls_py as et  # noqa: E402


def frob(a, b):
    return math.sqrt(sum((x - y) ** 2 for ra, rb in zip(a, b) for x, y in zip(ra, rb)))


def main():
    # C = [[1, 2], [1, 2]]: the TLS line through both points has slope 2
    x = et.solve_tls([[1.0], [1.0]], [[2.0], [2.0]])
    assert abs(x[0][0] - 2.0) < 1e-12, x

    spec = et.ModelSpec(5, 2, 1, 3, 0.0, seed=4)
    case = et.generate(spec, 60)
    sol = et.solve_ctls(case["a"], case["b"], k=case["k"], rank=3)
    assert frob(sol["x_star"], case["x_min"]) < 1e-8
    assert len(sol["w_hat"][0]) == 2
    angles = et.principal_angles(sol["z"], case["y_bar"])
    assert angles["sin_max"] < 1e-8, angles

    noisy = et.generate(et.ModelSpec(6, 2, 2, 4, 0.1, r_inf=3, seed=9), 10_000)
    auto = et.solve_ctls(noisy["a"], noisy["b"], k=2, rank="auto")
    assert auto["rank"] == 3, auto["rank"]
    assert et.estimate_rank(auto["eigenvalues"], 2, 2, 10_000) == 3

    ttls = et.solve_ttls(case["a"], case["b"], 3)
    assert len(ttls["x_star"]) == 5

    try:
        et.solve_ctls([[0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [2.0, -1.0]],
                      [[1.0], [0.5], [0.1], [0.3]], k=1, rank=2)
    except et.EivTlsError as err:
        assert "InconsistentExactRows" in str(err)
    else:
        raise AssertionError("inconsistent exact row was accepted")

    config = {"n": 4, "ell": 1, "k": 1, "r": 3, "sigma": 0.1, "seed": 2,
              "m_schedule": [100, 10_000], "replicates": 8}
    summary = json.loads(et.run_experiment(json.dumps(config)))
    medians = [g["metrics"]["sin_max"]["median"] for g in summary["groups"]]
    assert medians[1] < medians[0], medians

    print("smoke test passed")


if __name__ == "__main__":
    main()
