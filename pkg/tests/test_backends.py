import os
import subprocess
import sys

import numpy as np
import pytest

from sparsity_minimax import _accel, _hot, kernels


@pytest.fixture
def rng():
    return np.random.default_rng(99)


def test_default_backend_is_numba():
    assert _accel.HAVE_NUMBA and _accel.USE_NUMBA
    assert _hot.cos_matvec is _hot.cos_matvec_nb


def test_cos_matvec_twins_agree(rng):
    x = rng.uniform(-40, 40, 3000)
    u = rng.uniform(0, 3, 257)
    a = rng.normal(size=257)
    np.testing.assert_allclose(_hot.cos_matvec_nb(x, u, a), _hot.cos_matvec_np(x, u, a), rtol=0, atol=1e-11)


def test_cos_matvec_numpy_chunking(rng, monkeypatch):
    monkeypatch.setattr(_hot, "_CHUNK", 64)
    x = rng.normal(size=500)
    u = rng.uniform(0, 2, 10)
    a = rng.normal(size=10)
    np.testing.assert_allclose(_hot.cos_matvec_np(x, u, a), np.cos(np.outer(x, u)) @ a, atol=1e-12)


def test_spline_twins_agree(rng):
    table = kernels.kappa_table(2.0)
    x = np.abs(rng.uniform(0, 40, 5000))
    x[:3] = [0.0, 40.0, table.h * 7]
    np.testing.assert_allclose(_hot.spline_eval_nb(x, table.coef, table.h),
                               _hot.spline_eval_np(x, table.coef, table.h), rtol=0, atol=1e-14)


def test_numpy_backend_end_to_end():
    script = (
        "import numpy as np, sys, sparsity_minimax._hot as h, sparsity_minimax.tests_kv as t;"
        "want = h.cos_matvec_np if sys.argv[1] == '0' else h.cos_matvec_nb;"
        "assert h.cos_matvec is want;"
        "y = np.random.default_rng(1).standard_normal(500);"
        "print(repr(t.stat_bulk(y, 2.3, 1.0)), repr(t.stat_inter(y, 1.7, 1.2, 1.0)))"
    )
    outputs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, SPARSITY_MINIMAX_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", script, flag], env=env,
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outputs[flag] = [float(v) for v in proc.stdout.split()]
    np.testing.assert_allclose(outputs["0"], outputs["1"], rtol=0, atol=1e-9)
