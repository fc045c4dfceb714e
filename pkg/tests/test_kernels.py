import os
import subprocess
import sys

import numpy as np
import pytest

from transcap import _core, _kernels_py
from transcap._rng import uniform, uniform_array
from transcap.contention import line_network, random_network
from transcap.sim import SimConfig, run

BACKENDS = _core.backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")
FIELDS = ("link_backlog", "link_in", "link_out", "delivered", "opportunities",
          "empty_opportunities", "ck_delivered", "ck_opportunities", "ck_empty")


def test_uniform_keys():
    u = [uniform(3, 1, c) for c in range(1000)]
    assert all(0.0 <= x < 1.0 for x in u)
    assert abs(np.mean(u) - 0.5) < 0.05
    assert uniform(3, 1, 7) != uniform(3, 2, 7) != uniform(4, 1, 7)
    arr = uniform_array(3, 1, np.arange(1000))
    assert np.array_equal(arr, np.array(u))


@needs_cython
def test_uniform_compiled_matches_python():
    ext = BACKENDS["cython"]
    for seed, stream, c in [(0, 0, 0), (2**63, 5, 17), (7, 1 << 40, 123456789)]:
        assert ext.uniform(seed, stream, c) == uniform(seed, stream, c)


@needs_cython
def test_minplus_kernels_agree():
    rng = np.random.default_rng(1)
    ext = BACKENDS["cython"]
    for _ in range(20):
        n = int(rng.integers(1, 12))
        inc = rng.integers(0, 3, size=(n, n)).astype(float)
        a = np.triu(np.cumsum(inc, axis=1))
        b = np.triu(np.cumsum(rng.integers(0, 3, size=(n, n)).astype(float), axis=1))
        assert np.array_equal(ext.minplus_compose(a, b), _kernels_py.minplus_compose(a, b))
        v = np.cumsum(rng.integers(0, 3, n)).astype(float)
        assert np.array_equal(ext.minplus_convolve(v, a), _kernels_py.minplus_convolve(v, a))


CASES = [
    SimConfig(mac="aloha", T=3000, lam=0.08, p=0.2, seed=1),
    SimConfig(mac="aloha", T=3000, lam=0.2, p=0.3, seed=1, arrival="bernoulli", policy="skip"),
    SimConfig(mac="aloha", T=2000, p=0.3, seed=9, arrival="saturated"),
    SimConfig(mac="centralized", T=1000, lam=0.3, schedule="0,1,2,0+3", loop_start=1),
    SimConfig(mac="csma", T=3000, lam=0.1, seed=2),
    SimConfig(mac="csma", T=3000, lam=0.1, seed=2, policy="skip", arrival="bernoulli"),
    SimConfig(mac="csma", T=3000, seed=3, arrival="saturated", track_occupancy=True,
              csma_stationary_start=True),
    SimConfig(mac="aloha", T=3000, lam=0.5, p=0.2, seed=1, cap=40),
]


@needs_cython
@pytest.mark.parametrize("cfg", CASES)
def test_backends_bit_identical(cfg):
    top, g = line_network(5, 3)
    a = run(top, g, cfg, backend="python")
    b = run(top, g, cfg, backend="cython")
    assert a.T_run == b.T_run and a.max_backlog == b.max_backlog
    for f in FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f)), f
    assert a.occupancy == b.occupancy


@needs_cython
def test_backends_identical_random_network():
    top, g, _ = random_network(10, 7)
    for mac in ("aloha", "csma"):
        cfg = SimConfig(mac=mac, T=2000, lam=0.01, seed=4)
        a = run(top, g, cfg, backend="python")
        b = run(top, g, cfg, backend="cython")
        for f in FIELDS:
            assert np.array_equal(getattr(a, f), getattr(b, f))


def test_pure_env_selects_python_backend():
    env = dict(os.environ, TRANSCAP_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "import transcap; print(transcap.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
