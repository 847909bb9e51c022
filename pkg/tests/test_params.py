import math

import pytest

from kraichnan_sqg.params import ModelParams, ParameterError, critical_exponent, validate


def test_critical_exponent_examples():
    assert critical_exponent(2 / 3, 0) == pytest.approx(3.0)
    assert critical_exponent(0.5, 0.5) == pytest.approx(4.0)
    with pytest.raises(ParameterError):
        critical_exponent(0.9, 0.2)


def test_validate_critical_cases():
    for a, b, p in [(2 / 3, 0.0, 3.0), (0.5, 0.0, 2.0)]:
        rep = validate(ModelParams(a, b, p))
        assert rep.valid and rep.critical


def test_validate_rejects_large_alpha_plus_beta():
    rep = validate(ModelParams(0.6, 0.6, 10.0))
    assert not rep.valid
    assert rep.status == "conjectural"


def test_validate_supercritical_p():
    rep = validate(ModelParams(0.5, 0.0, 1.5))
    assert not rep.valid
    assert rep.criticality == "supercritical"


@pytest.mark.parametrize(
    "kw",
    [dict(alpha=0.0), dict(alpha=1.0), dict(alpha=0.5, beta=-0.1), dict(alpha=0.5, p=1.0),
     dict(alpha=0.5, nu=-1.0), dict(alpha=0.5, N=33), dict(alpha=0.5, L=0.0)],
)
def test_model_params_rejects_bad_values(kw):
    with pytest.raises(ParameterError):
        ModelParams(**kw)


def test_to_dict_roundtrip():
    p = ModelParams(0.3, 0.2, 5.0, 0.01, 2 * math.pi, 64)
    assert ModelParams(**p.to_dict()) == p
