import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from psfsr.exceptions import InputError
from psfsr.prox import ProxConfig, analysis_l1, analysis_prox, project_positive_shift
from psfsr.wavelets import get_dictionary, soft_threshold

small = st.floats(-10, 10, allow_nan=False)


class OrthoDictionary:
    """A random orthonormal analysis operator: its prox has a closed form."""

    def __init__(self, shape, seed=0):
        n = shape[0] * shape[1]
        q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
        self.q, self.shape = q, shape
        self.coeff_shape = (1,) + shape
        self.frame_bound = 1.0

    def analyze(self, x):
        return (self.q @ x.ravel()).reshape(self.coeff_shape)

    def adjoint(self, u):
        return (self.q.T @ u.ravel()).reshape(self.shape)


def test_projection_examples():
    assert project_positive_shift([-2.0], [1.0]).tolist() == [-1.0]
    x = np.array([0.5, -0.2, 3.0])
    np.testing.assert_array_equal(project_positive_shift(x, np.ones(3)), x)
    with pytest.raises(InputError):
        project_positive_shift(np.zeros(2), np.zeros(3))


@given(hnp.arrays(np.float64, 12, elements=small), hnp.arrays(np.float64, 12, elements=small))
def test_projection_idempotent_and_feasible(x, x0):
    p = project_positive_shift(x, x0)
    assert np.all(p >= -x0)
    np.testing.assert_array_equal(project_positive_shift(p, x0), p)
    # nearest feasible point: a random feasible candidate is never closer
    cand = -x0 + np.abs(np.sin(np.arange(12.0)))
    assert np.linalg.norm(p - x) <= np.linalg.norm(cand - x) + 1e-12


def test_zero_thresholds_is_identity(rng):
    dico = get_dictionary("starlet2", (16, 16), 2)
    x = rng.standard_normal((16, 16))
    out, u, n = analysis_prox(x, np.zeros(dico.coeff_shape), dico, return_dual=True)
    np.testing.assert_array_equal(out, x)
    assert not u.any() and n == 0


def test_orthonormal_prox_is_soft_threshold(rng):
    dico = OrthoDictionary((6, 6))
    x = rng.standard_normal((6, 6)) * 3
    t = rng.uniform(0.0, 2.0, dico.coeff_shape)
    out = analysis_prox(x, t, dico, ProxConfig(inner_max_iters=200, inner_rel_tol=1e-14))
    closed = dico.adjoint(soft_threshold(dico.analyze(x), t))
    np.testing.assert_allclose(out, closed, atol=1e-12)


@pytest.mark.parametrize("name", ["starlet2", "bior79"])
def test_prox_defining_inequality(name):
    rng = np.random.default_rng(5)
    dico = get_dictionary(name, (16, 16), 2)
    x = rng.standard_normal((16, 16))
    t = rng.uniform(0.0, 0.3, dico.coeff_shape)
    t[-1] = 0.0
    out = analysis_prox(x, t, dico, ProxConfig(inner_max_iters=20000, inner_rel_tol=1e-13))

    def f(v):
        return 0.5 * np.sum((v - x) ** 2) + analysis_l1(v, t, dico)

    fo = f(out)
    for _ in range(100):
        v = out + rng.standard_normal(x.shape) * rng.choice([1e-3, 1e-1, 1.0])
        assert fo <= f(v) + 1e-8


def test_warm_start_and_validation(rng):
    dico = get_dictionary("starlet2", (16, 16), 2)
    x = rng.standard_normal((16, 16))
    t = np.full(dico.coeff_shape, 0.2)
    cfg = ProxConfig(inner_max_iters=500, inner_rel_tol=1e-4)
    out, u, n = analysis_prox(x, t, dico, cfg, return_dual=True)
    out2, _, n2 = analysis_prox(x, t, dico, cfg, u0=u, return_dual=True)
    assert n2 < n
    np.testing.assert_allclose(out2, out, atol=1e-3)
    assert np.all(np.abs(u) <= t + 1e-15)
    with pytest.raises(InputError):
        analysis_prox(x, -t, dico)
    with pytest.raises(InputError):
        ProxConfig(inner_max_iters=0)
    with pytest.raises(InputError):
        ProxConfig(mu_prox=-1.0)
