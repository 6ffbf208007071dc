"""Smoke test for the lorentz_gas extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import math
import tempfile

import lorentz_gas as lg


def main() -> None:
    assert math.isclose(lg.radius_of(0.04), 0.04**1.5)
    assert math.isclose(lg.collision_rate(1 / math.pi), 1.0)

    env = lg.Environment(seed=7, eps=0.1, horizon=5.0)
    assert math.isclose(env.rate, 1.0)
    path = env.trajectory([0.0, 0.0, 1.0], 5.0)
    assert path[0] == [0.0, 0.0, 0.0, 0.0]
    assert math.isclose(path[-1][0], 5.0)
    assert path == env.trajectory([0.0, 0.0, 1.0], 5.0)

    flight = lg.sample_flight([1.0, 0.0, 0.0], 10.0, seed=3)
    assert math.isclose(flight[-1][0], 10.0)
    assert math.isclose(lg.flight_covariance(1e6) / 1e6, 2 / 3, rel_tol=1e-3)

    rep = lg.estimate_mismatch_probability(0.05, 10.0, replicas=200, seed=1)
    assert 0.0 <= rep["estimate"]["estimate"] <= 1.0
    assert rep["identity_failures"] == 0

    ev = lg.estimate_event_probabilities(0.01, 10.0, replicas=100)
    assert ev["uncovered"] == 0

    g = lg.green_occupation([5.0, 0.0, 0.0], 0.5, 0.01, replicas=200)
    assert g["gamma_integral"] > 0

    try:
        lg.gamma_ball_integral(1.0, 2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("singular ball accepted")

    sched = lg.check_geometric_schedule(8, 12)
    assert sched["admissible"]

    with tempfile.TemporaryDirectory() as out:
        summary = lg.run_config(
            f'experiment = "mismatch"\nreplicas = 50\nout = "{out}"\n'
        )
        assert summary

    print("lorentz_gas smoke test ok", lg.__version__)


if __name__ == "__main__":
    main()
