import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from torsionlab.closed_forms import torsion_rectangle
from torsionlab.estimators import GroundStateEstimator, TorsionEstimator
from torsionlab.geometry import rectangle


def test_torsion_estimator_fit_predict():
    est = TorsionEstimator(target_h=1 / 32)
    with pytest.raises(NotFittedError):
        est.predict([[0.0, 0.5]])
    est.fit(rectangle(4))
    pts = np.array([[0.0, 0.5], [1.0, 0.25]])
    assert np.allclose(est.predict(pts), torsion_rectangle(4, pts[:, 0], pts[:, 1]), atol=1e-4)
    assert est.n_iter_ > 0
    assert est.max_.v_star == pytest.approx(torsion_rectangle(4, 0.0, 0.5), abs=1e-4)


def test_fit_accepts_config_mapping_and_clone():
    est = TorsionEstimator(target_h=1 / 32)
    assert clone(est).get_params() == est.get_params()
    est.fit({"kind": "rectangle", "N": 2})
    assert est.predict([[0.0, 0.5]])[0] > 0
    with pytest.raises(TypeError):
        est.fit(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        est.predict(np.zeros((3, 3)))


def test_ground_state_estimator():
    est = GroundStateEstimator(target_h=1 / 32).fit(rectangle(2))
    # first Dirichlet eigenvalue of [0, 2] x [0, 1]
    assert est.eigenvalue_ == pytest.approx(np.pi**2 * (1 / 4 + 1), rel=5e-3)
    assert est.predict([[0.0, 0.5]])[0] == pytest.approx(1.0, abs=1e-3)


def test_docstring_example():
    import doctest

    from torsionlab import estimators
    assert doctest.testmod(estimators).failed == 0
