import numpy as np
import pytest

from screenkit.model import GroupModel, RiskParams, ScoreMap, SignalSpec


@pytest.fixture(scope="session")
def minority_model():
    return GroupModel(
        risk=RiskParams(mu0=1.13, h0=1.0 / 15.96),
        signals=SignalSpec((1.0 / 2.46, 1.0 / 50.0)),
        threshold=2.33,
        label="minority",
    )


@pytest.fixture(scope="session")
def nonminority_model():
    return GroupModel(
        risk=RiskParams(mu0=2.89, h0=1.0 / 28.73),
        signals=SignalSpec((1.0 / 0.50, 1.0 / 50.0)),
        threshold=2.29,
        label="nonminority",
    )


@pytest.fixture(scope="session")
def score_map():
    return ScoreMap(a1=660.0, a2=-15.0)
