import numpy as np
import pytest

from phaseless.medium import sigma_from_epsilon
from phaseless.moments import MomentRow, default_probes, run_moments, sample_travel_times
from phaseless.scene import ValidationError


def test_underpowered_rejected():
    with pytest.raises(ValidationError):
        run_moments(n=99)


def test_z_score():
    assert MomentRow("q", 1.0, 1.3, 0.1, 100).z_score == pytest.approx(3.0)
    assert MomentRow("q", 1.0, 1.0, 0.0, 100).z_score == 0.0


def test_samples_independent_of_jobs():
    probes = default_probes(100.0, 2000.0)
    sigma = sigma_from_epsilon(0.2, 100.0, 2000.0)
    a = sample_travel_times(probes, sigma, 100.0, 8, seed=3, spacing=25.0, jobs=1)
    b = sample_travel_times(probes, sigma, 100.0, 8, seed=3, spacing=25.0, jobs=4)
    assert a.shape == (8, 3, 2)
    assert np.array_equal(a, b)


def test_small_run_passes(tmp_path):
    rep = run_moments(n=300, seed=1, propagation=2000.0, spacing=25.0)
    assert len(rep.rows) == 27  # 3 probes x 9 rows
    assert rep.passed(), [(r.quantity, r.z_score) for r in rep.failures()]
    rep.to_csv(tmp_path / "m.csv")
    text = (tmp_path / "m.csv").read_text()
    assert text.startswith("# epsilon=")
    assert "quantity,theory,estimate,stderr,n,z_score" in text


def test_derived_values():
    rep = run_moments(n=100, seed=0, propagation=2000.0, spacing=25.0)
    assert rep.derived["epsilon"] == pytest.approx(0.2)
    assert rep.derived["tau_c"] == pytest.approx(0.994774938389446, rel=1e-12)  # fixed epsilon: tau does not depend on L
