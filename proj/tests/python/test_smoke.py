import numpy as np
import pytest

import homoscale


def test_presets_listed():
    assert "averaging-ou" in homoscale.preset_names()
    assert homoscale.preset_defaults("langevin-scalar")["hbar0"] == 1.0


def test_lyapunov():
    A = np.array([[2.0, 1.0], [0.0, 3.0]])
    S = homoscale.solve_lyapunov(A, np.eye(2))
    np.testing.assert_allclose(S, [[8 / 15, -1 / 15], [-1 / 15, 1 / 3]], atol=1e-13)
    assert homoscale.lyapunov_residual(A, S, np.eye(2)) < 1e-12


def test_simulate_shapes_and_determinism():
    a = homoscale.simulate("averaging-ou", eps=0.2, z0=[0.0, 1.0], T=1.0, n_paths=16, seed=3, times=[0.0, 0.5, 1.0])
    b = homoscale.simulate("averaging-ou", eps=0.2, z0=[0.0, 1.0], T=1.0, n_paths=16, seed=3, times=[0.0, 0.5, 1.0])
    assert a["states"].shape == (16, 3, 2)
    np.testing.assert_array_equal(a["states"], b["states"])


def test_effective_scalar_langevin():
    out = homoscale.effective("langevin-scalar", {"hbar1": 0.0, "hbar0": 2.0}, y=[0.5])
    np.testing.assert_allclose(out["G"], [[0.25]], atol=1e-14)
    np.testing.assert_allclose(out["F"], [-0.25], atol=1e-14)


def test_torus_and_zvonkin():
    t = homoscale.torus_effective("torus-1d", {"a0": 2.0, "a1": 1.0, "beta": 0.0}, N=32)
    assert abs(t["G"][0, 0] - np.sqrt(3.0)) < 1e-8
    z = homoscale.zvonkin(N=8)
    assert z["q_hat"] < 1 and z["grad_sup"] <= 0.5


def test_bad_config_raises(tmp_path):
    with pytest.raises(homoscale.ConfigError, match="epzilon"):
        homoscale.run_experiment({"kind": "converge", "seed": 1, "epzilon": [0.1]})


def test_run_experiment(tmp_path):
    out = homoscale.run_experiment({"kind": "zvonkin", "seed": 0, "zvonkin": {"N": 8}, "output": str(tmp_path / "z")})
    assert out["exit_code"] == 0
    assert (tmp_path / "z" / "summary.json").exists()
