import numpy as np
import pytest
from scipy.stats import skew

from no2cal.config import SiteRole, SiteSpec
from no2cal.errors import ScenarioError
from no2cal.series import Channel
from no2cal.simulate import (
    DriftEvent,
    FieldShiftEvent,
    ScenarioSpec,
    SharedErrorSpec,
    generate,
    nine_site_scenario,
    nine_site_sites,
    two_site_sites,
)


def small_spec(**overrides):
    defaults = dict(sites=two_site_sites(), duration_days=20, seed=5)
    defaults.update(overrides)
    return ScenarioSpec(**defaults)


class TestValidation:
    def test_duration_floor(self):
        with pytest.raises(ScenarioError, match="duration"):
            small_spec(duration_days=10)

    def test_proxy_without_reference_rejected(self):
        sites = (
            SiteSpec("a", 34.0, -117.4, SiteRole.CO_LOCATED, "b", "b"),
            SiteSpec("b", 34.1, -117.5, SiteRole.SENSOR, "a", "a"),  # no reference channel
        )
        with pytest.raises(ScenarioError, match="reference"):
            small_spec(sites=sites)

    def test_event_site_must_exist(self):
        with pytest.raises(ScenarioError, match="unknown site"):
            small_spec(drift_events=(DriftEvent("ghost", 5.0, "offset_step", 8.0),))

    def test_unknown_event_kind(self):
        with pytest.raises(ScenarioError):
            DriftEvent("a", 5.0, "wobble", 1.0)


class TestDeterminism:
    def test_identical_seed_identical_bytes(self):
        a = generate(small_spec())
        b = generate(small_spec())
        for sid in a.data:
            for ch in a.data[sid]:
                assert np.array_equal(a.data[sid][ch].values, b.data[sid][ch].values, equal_nan=True)
        assert a.truth.base_params == b.truth.base_params

    def test_different_seed_differs(self):
        a = generate(small_spec(seed=1))
        b = generate(small_spec(seed=2))
        assert not np.array_equal(
            a.data["pair_a"][Channel.C_OX].values, b.data["pair_a"][Channel.C_OX].values
        )


class TestFields:
    def test_round_trip_identity_noiseless(self):
        net = generate(
            small_spec(noise_sd=0.0, o3_noise_sd=0.0, shared_error=None)
        )
        for sid in ("pair_a", "pair_b"):
            cox = net.data[sid][Channel.C_OX].values
            o3 = net.data[sid][Channel.O3].values
            b0, b1, b2 = net.truth.params_at(sid, 0)
            recovered = b0 + b1 * cox - b2 * o3
            assert np.allclose(recovered, net.truth.no2_true[sid], atol=1e-9)

    def test_fields_nonnegative_and_skewed(self):
        net = generate(small_spec(duration_days=60))
        no2 = net.truth.no2_true["pair_a"]
        assert np.all(no2 >= 0.0)
        assert skew(no2) > 0.3

    def test_proxy_similarity_by_construction(self):
        net = generate(small_spec(duration_days=60))
        a = net.truth.no2_true["pair_a"]
        b = net.truth.no2_true["pair_b"]
        assert np.corrcoef(a, b)[0, 1] > 0.95
        assert abs(a.mean() - b.mean()) < 2.0

    def test_reference_channels_only_at_reference_sites(self):
        sites = (
            SiteSpec("ref", 34.0, -117.4, SiteRole.REFERENCE),
            SiteSpec("dep", 34.1, -117.5, SiteRole.SENSOR, "ref", "ref"),
        )
        net = generate(small_spec(sites=sites))
        assert Channel.NO2_REF in net.data["ref"]
        assert Channel.C_OX not in net.data["ref"]
        assert Channel.NO2_REF not in net.data["dep"]
        assert Channel.C_OX in net.data["dep"]


class TestDriftEvents:
    def test_offset_step_trajectory(self):
        net = generate(
            small_spec(drift_events=(DriftEvent("pair_a", 10.0, "offset_step", 8.0),))
        )
        b0 = net.truth.b0["pair_a"]
        onset = 240
        assert b0[onset] - b0[onset - 1] == pytest.approx(8.0)
        assert np.allclose(b0[onset:], b0[onset])

    def test_offset_ramp_reaches_magnitude(self):
        net = generate(
            small_spec(drift_events=(DriftEvent("pair_a", 2.0, "offset_ramp", 6.0),))
        )
        b0 = net.truth.b0["pair_a"]
        base = b0[0]
        ramp_end = int((2.0 + 10.0) * 24)
        assert b0[ramp_end] == pytest.approx(base + 6.0)
        mid = int((2.0 + 5.0) * 24)
        assert b0[mid] == pytest.approx(base + 3.0, abs=0.1)

    def test_slope_decay_shrinks_both_slopes_and_lifts_offset(self):
        net = generate(
            small_spec(
                duration_days=45,
                drift_events=(DriftEvent("pair_a", 2.0, "slope_decay", 0.5),),
            )
        )
        tr = net.truth
        end = int((2.0 + 30.0) * 24)
        assert tr.b1["pair_a"][end] == pytest.approx(tr.b1["pair_a"][0] * 0.5, rel=1e-6)
        assert tr.b2["pair_a"][end] == pytest.approx(tr.b2["pair_a"][0] * 0.5, rel=1e-6)
        assert tr.b0["pair_a"][end] > tr.b0["pair_a"][0] + 5.0

    def test_field_replace_changes_distribution(self):
        net = generate(
            small_spec(
                duration_days=40,
                field_events=(FieldShiftEvent("pair_b", 20.0, "replace", 0.6, bimodal_ppb=6.0),),
            )
        )
        before = net.truth.no2_true["pair_b"][: 20 * 24]
        after = net.truth.no2_true["pair_b"][20 * 24 :]
        assert after.mean() < before.mean() * 0.8

    def test_ledger_rows_cover_every_site(self):
        spec = small_spec(drift_events=(DriftEvent("pair_a", 10.0, "offset_step", 8.0),))
        net = generate(spec)
        rows = net.truth.ledger_rows()
        assert {r["site_id"] for r in rows} == {"pair_a", "pair_b"}
        ev = [r for r in rows if r["type"]][0]
        assert ev["type"] == "offset_step" and ev["magnitude"] == 8.0


class TestSharedError:
    def test_correlation_decays_with_distance(self):
        spec = ScenarioSpec(
            sites=nine_site_sites(),
            duration_days=40,
            seed=3,
            shared_error=SharedErrorSpec(amplitude_ppb=5.0, decay_length_km=30.0),
        )
        net = generate(spec)
        e = net.truth.shared_error
        near = np.corrcoef(e["ur_2"], e["ur_4"])[0, 1]  # ~3 km apart
        far = np.corrcoef(e["ur_3"], e["in_3"])[0, 1]  # opposite ends
        assert near > far
        assert near > 0.7

    def test_disabled_when_unset(self):
        net = generate(small_spec(shared_error=None))
        assert np.all(net.truth.shared_error["pair_a"] == 0.0)


def test_nine_site_preset_topology():
    spec = nine_site_scenario(duration_days=30, seed=1)
    assert len(spec.sites) == 9
    by_id = {s.site_id: s for s in spec.sites}
    assert by_id["in_1"].no2_proxy_id == "in_2"
    assert by_id["in_2"].no2_proxy_id == "in_1"  # mutually-proxying pair
    for s in spec.sites:
        assert s.no2_proxy_id != s.site_id
        assert by_id[s.no2_proxy_id].role.has_reference
