import numpy as np
import pytest
from sklearn.base import clone

from ghzbell.correlations import full_correlations
from ghzbell.estimators import BellViolationDetector, GHZCorrelationTransformer
from ghzbell.inequalities import violation_flags
from ghzbell.sampling import SamplerSpec, sample_directions


@pytest.fixture
def X3():
    return sample_directions(SamplerSpec("rim", 3, 1), 0, 200).reshape(200, -1)


def test_transformer(X3):
    t = GHZCorrelationTransformer(n_parties=3)
    out = t.fit_transform(X3)
    assert np.allclose(out, full_correlations(X3.reshape(-1, 3, 2, 3)))
    r = GHZCorrelationTransformer(n_parties=3, restricted=True, noise="dephasing", nu=0.1).fit(X3)
    assert r.transform(X3).shape == (200, 27)
    assert clone(t).get_params() == t.get_params()


def test_detector(X3):
    det = BellViolationDetector(n_parties=3, inequality_class="wwzb").fit(X3)
    pred = det.predict(X3)
    assert np.array_equal(pred, violation_flags(full_correlations(X3.reshape(-1, 3, 2, 3)), "wwzb"))
    assert np.array_equal(det.decision_function(X3) > 1e-9, pred.astype(bool))
    assert 0.0 <= det.score(X3, pred) == 1.0
    lp = BellViolationDetector(n_parties=3, inequality_class="complete").fit(X3[:20])
    assert np.all(lp.predict(X3[:20]) >= pred[:20])


def test_validation(X3):
    with pytest.raises(ValueError):
        GHZCorrelationTransformer(n_parties=4).fit(X3)
    bad = X3.copy()
    bad[0, 0] = 5.0
    with pytest.raises(ValueError):
        BellViolationDetector(n_parties=3).fit(bad)
    with pytest.raises(Exception):
        BellViolationDetector(n_parties=3).predict(X3)
