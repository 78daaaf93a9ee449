import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from tatsolve.estimators import BoundaryMeasurement, NeumannReconstructor, TimeReversal
from tatsolve.grid import make_domain
from tatsolve.medium import build_phantom, constant_medium


@pytest.fixture(scope="module")
def setup():
    g = make_domain("square", 1.0, 20, 0.8)
    m = constant_medium(g)
    f = build_phantom(g, {"kind": "gaussian", "center": (0.0, 0.05), "width": 0.07}).f
    return m, f


def test_params_and_clone(setup):
    m, _ = setup
    est = NeumannReconstructor(medium=m, T=1.5, max_iters=5)
    p = est.get_params()
    assert p["max_iters"] == 5 and p["medium"] is m
    c = clone(est)
    assert c.get_params()["T"] == 1.5 and not hasattr(c, "dt_")


def test_not_fitted(setup):
    m, f = setup
    with pytest.raises(NotFittedError):
        BoundaryMeasurement(medium=m, T=1.5).transform(f[None])


def test_shape_validation(setup):
    m, f = setup
    meas = BoundaryMeasurement(medium=m, T=1.5).fit()
    with pytest.raises(ValueError):
        meas.transform(np.zeros((2, 5, 5)))
    H = meas.transform(f)
    assert H.shape == (1, meas.n_steps_ + 1, meas.n_boundary_)
    tr = TimeReversal(medium=m, T=1.5).fit()
    with pytest.raises(ValueError):
        tr.transform(H[:, :-1])
    with pytest.raises(TypeError):
        BoundaryMeasurement(medium="air", T=1.5).fit()


def test_pipeline_reconstructs(setup):
    m, f = setup
    pipe = make_pipeline(BoundaryMeasurement(medium=m, T=1.5), NeumannReconstructor(medium=m, T=1.5, max_iters=10))
    out = pipe.fit_transform(np.stack([f, 2 * f]))
    assert out.shape == (2,) + f.shape
    rel = np.linalg.norm(out[0] - f) / np.linalg.norm(f)
    assert rel < 0.05
    np.testing.assert_allclose(out[1], 2 * out[0], rtol=1e-8, atol=1e-12)
    assert len(pipe[-1].reports_) == 2


def test_noise_is_seeded(setup):
    m, f = setup
    a = BoundaryMeasurement(medium=m, T=1.5, noise_std=0.01, random_state=3).fit().transform(f)
    b = BoundaryMeasurement(medium=m, T=1.5, noise_std=0.01, random_state=3).fit().transform(f)
    assert np.array_equal(a, b)
