from datetime import datetime, timezone

import numpy as np
import pytest

from no2cal.series import Channel, HourlySeries

T0 = datetime(2018, 1, 1, tzinfo=timezone.utc)


def make_series(values, site_id="site", channel=Channel.NO2_REF, start=T0):
    return HourlySeries(site_id, channel, start, np.asarray(values, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(20180101)
