"""Load verification, update/replace semantics, boot walks, scenarios."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tzaudit.errors import (
    ConfigError,
    LoadRejected,
    MissingArtifact,
    UnknownArtifactName,
)
from tzaudit.simulator import (
    BootChain,
    DevicePolicy,
    DeviceState,
    KeyScope,
    LoadStatus,
    RollbackPolicy,
    SignedArtifact,
    SigningKey,
    apply_update,
    boot,
    canned_scenario_names,
    load_canned_scenario,
    load_scenario,
    replace_artifact,
    run_scenario,
    verify_load,
)

OEM = SigningKey(key_id="oem")
OTHER = SigningKey(key_id="other")
OEM_V1 = SigningKey(key_id="oem-v1", scope=KeyScope.PER_VERSION, version=1)
OEM_V2 = SigningKey(key_id="oem-v2", scope=KeyScope.PER_VERSION, version=2)


def art(version: int, key: SigningKey = OEM, name="widevine", vulnerable=False):
    return SignedArtifact(
        name=name,
        version=version,
        key_id=key.key_id,
        payload_digest=bytes(32),
        vulnerable=vulnerable,
    )


def policy(
    rollback=RollbackPolicy.NONE,
    trusted=(OEM,),
    counters=None,
    keys=(OEM, OTHER, OEM_V1, OEM_V2),
    name="widevine",
):
    return DevicePolicy(
        trusted_keys={name: frozenset(k.key_id for k in trusted)},
        rollback=rollback,
        counters=dict(counters or {}),
        keys={k.key_id: k for k in keys},
    )


class TestVerifyLoad:
    def test_trusted_global_key_accepts(self):
        verdict = verify_load(policy(), art(1))
        assert verdict.status is LoadStatus.ACCEPT
        assert bool(verdict)

    def test_untrusted_key_rejects(self):
        verdict = verify_load(policy(), art(1, key=OTHER))
        assert verdict.status is LoadStatus.REJECT_KEY
        assert not verdict

    def test_per_version_key_binds_version(self):
        pol = policy(trusted=(OEM_V2,))
        assert verify_load(pol, art(2, key=OEM_V2)).status is LoadStatus.ACCEPT
        # right key id, wrong version: the signature domain differs
        assert verify_load(pol, art(1, key=OEM_V2)).status is LoadStatus.REJECT_KEY

    def test_version_counter_rejects_lower(self):
        pol = policy(rollback=RollbackPolicy.VERSION_COUNTER, counters={"widevine": 2})
        assert verify_load(pol, art(1)).status is LoadStatus.REJECT_VERSION
        assert verify_load(pol, art(2)).status is LoadStatus.ACCEPT
        assert verify_load(pol, art(3)).status is LoadStatus.ACCEPT

    def test_no_rollback_policy_ignores_version(self):
        pol = policy(rollback=RollbackPolicy.NONE, counters={"widevine": 2})
        assert verify_load(pol, art(1)).status is LoadStatus.ACCEPT

    def test_key_rejection_takes_precedence(self):
        pol = policy(rollback=RollbackPolicy.VERSION_COUNTER, counters={"widevine": 2})
        assert verify_load(pol, art(1, key=OTHER)).status is LoadStatus.REJECT_KEY

    def test_unknown_artifact_name(self):
        with pytest.raises(UnknownArtifactName):
            verify_load(policy(), art(1, name="keymaster"))

    def test_detail_strings(self):
        pol = policy(rollback=RollbackPolicy.VERSION_COUNTER, counters={"widevine": 2})
        assert "counter" in verify_load(pol, art(1)).detail


class TestApplyUpdate:
    def test_accept_installs_and_bumps_counter(self):
        pol = policy(rollback=RollbackPolicy.VERSION_COUNTER)
        state = DeviceState(policy=pol)
        state = apply_update(state, art(2))
        assert state.installed["widevine"].version == 2
        assert state.policy.counters["widevine"] == 2

    def test_counter_never_decreases(self):
        pol = policy(rollback=RollbackPolicy.VERSION_COUNTER)
        state = DeviceState(policy=pol)
        state = apply_update(state, art(5))
        state = apply_update(state, art(5))
        assert state.policy.counters["widevine"] == 5

    def test_reject_raises_and_leaves_state_alone(self):
        pol = policy(rollback=RollbackPolicy.VERSION_COUNTER, counters={"widevine": 3})
        state = DeviceState(policy=pol)
        with pytest.raises(LoadRejected) as info:
            apply_update(state, art(2))
        assert info.value.verdict.status is LoadStatus.REJECT_VERSION
        assert state.installed == {}
        assert state.policy.counters == {"widevine": 3}

    def test_original_state_is_untouched(self):
        state0 = DeviceState(policy=policy(rollback=RollbackPolicy.VERSION_COUNTER))
        state1 = apply_update(state0, art(4))
        assert state0.installed == {}
        assert state1 is not state0

    @settings(max_examples=50)
    @given(st.lists(st.integers(min_value=0, max_value=40), max_size=15))
    def test_counter_is_max_of_accepted_versions(self, versions):
        state = DeviceState(policy=policy(rollback=RollbackPolicy.VERSION_COUNTER))
        accepted = []
        for v in versions:
            try:
                state = apply_update(state, art(v))
            except LoadRejected:
                assert accepted and v < max(accepted)
            else:
                accepted.append(v)
        if accepted:
            assert state.policy.counters["widevine"] == max(accepted)

    @settings(max_examples=50)
    @given(st.lists(st.integers(min_value=0, max_value=40), min_size=1, max_size=15))
    def test_without_rollback_everything_stays_loadable(self, versions):
        state = DeviceState(policy=policy(rollback=RollbackPolicy.NONE))
        for v in versions:
            state = apply_update(state, art(v))  # never raises
        assert state.installed["widevine"].version == versions[-1]


class TestReplaceArtifact:
    def test_replaces_without_verification(self):
        state = DeviceState(policy=policy())
        state = apply_update(state, art(2))
        state = replace_artifact(state, art(1, key=OTHER))  # untrusted, still lands
        assert state.installed["widevine"].version == 1
        assert state.installed["widevine"].key_id == "other"


def boot_policy(counters=None, rollback=RollbackPolicy.NONE):
    names = ("SBL2", "SBL3", "tz")
    return DevicePolicy(
        trusted_keys={n: frozenset({"oem"}) for n in names},
        rollback=rollback,
        counters=dict(counters or {}),
        keys={"oem": OEM, "other": OTHER},
    )


BOOT_CHAIN = BootChain(
    stages=(("SBL1", ("SBL2",)), ("SBL2", ("tz", "SBL3"))),
)


def installed_state(policy, *artifacts):
    state = DeviceState(policy=policy)
    for a in artifacts:
        state = replace_artifact(state, a)
    return state


class TestBoot:
    def test_full_chain_accepts(self):
        state = installed_state(
            boot_policy(),
            art(2, name="SBL2"),
            art(2, name="SBL3"),
            art(2, name="tz"),
        )
        report = boot(state, BOOT_CHAIN)
        assert report.success
        assert report.aborted_at is None
        assert [(r.loader, r.artifact) for r in report.results] == [
            ("SBL1", "SBL2"),
            ("SBL2", "tz"),
            ("SBL2", "SBL3"),
        ]

    def test_first_rejection_aborts(self):
        state = installed_state(
            boot_policy(counters={"tz": 2}, rollback=RollbackPolicy.VERSION_COUNTER),
            art(2, name="SBL2"),
            art(2, name="SBL3"),
            art(1, name="tz", vulnerable=True),
        )
        report = boot(state, BOOT_CHAIN)
        assert not report.success
        assert report.aborted_at == "tz"
        # SBL3 never gets a chance: the walk stops at the rejection
        assert [r.artifact for r in report.results] == ["SBL2", "tz"]
        assert report.vulnerable_loaded == ()

    def test_vulnerable_artifact_tracked_when_accepted(self):
        state = installed_state(
            boot_policy(),
            art(2, name="SBL2"),
            art(2, name="SBL3"),
            art(1, name="tz", vulnerable=True),
        )
        report = boot(state, BOOT_CHAIN)
        assert report.success
        assert report.vulnerable_loaded == ("tz",)

    def test_missing_artifact(self):
        state = installed_state(boot_policy(), art(2, name="SBL2"))
        with pytest.raises(MissingArtifact):
            boot(state, BOOT_CHAIN)

    def test_loader_must_have_been_loaded(self):
        chain = BootChain(stages=(("SBL1", ("SBL2",)), ("SBL9", ("tz",))))
        state = installed_state(
            boot_policy(), art(2, name="SBL2"), art(2, name="tz")
        )
        with pytest.raises(ConfigError):
            boot(state, chain)

    def test_cycle_detected(self):
        chain = BootChain(
            stages=(
                ("SBL1", ("SBL2",)),
                ("SBL2", ("SBL3",)),
                ("SBL3", ("SBL2",)),
            )
        )
        state = installed_state(
            boot_policy(), art(2, name="SBL2"), art(2, name="SBL3")
        )
        with pytest.raises(ConfigError, match="cycle"):
            boot(state, chain)


class TestCannedScenarios:
    def test_names(self):
        assert canned_scenario_names() == [
            "cve-2015-6639",
            "cve-2015-6639-per-version-keys",
            "cve-2015-6639-version-counter",
            "msm8960-boot",
        ]

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="no canned scenario"):
            load_canned_scenario("nope")

    def test_widevine_downgrade_possible(self):
        report = run_scenario(load_canned_scenario("cve-2015-6639"))
        assert report.verdict == "DOWNGRADE_POSSIBLE"
        assert report.vulnerable_loaded == ("widevine",)
        assert report.final_versions == {"widevine": 1}
        assert report.final_counters == {}

    def test_version_counter_mitigates(self):
        report = run_scenario(load_canned_scenario("cve-2015-6639-version-counter"))
        assert report.verdict == "SAFE"
        assert report.vulnerable_loaded == ()
        # the flash still happened; only the load was refused
        assert report.final_versions == {"widevine": 1}
        assert report.final_counters == {"widevine": 2}

    def test_per_version_keys_mitigate(self):
        report = run_scenario(load_canned_scenario("cve-2015-6639-per-version-keys"))
        assert report.verdict == "SAFE"
        assert report.vulnerable_loaded == ()

    def test_boot_chain_scenario(self):
        report = run_scenario(load_canned_scenario("msm8960-boot"))
        assert report.verdict == "DOWNGRADE_POSSIBLE"
        assert report.vulnerable_loaded == ("tz",)
        boots = [e for e in report.events if e["event"] == "boot"]
        assert len(boots) == 2
        assert all(b["success"] for b in boots)


def minimal_scenario(**overrides):
    config = {
        "name": "t",
        "description": "",
        "build_labels": {"OLD": 1, "NEW": 2},
        "keys": [{"key_id": "oem", "scope": "GLOBAL"}],
        "artifacts": [
            {"id": "w1", "name": "widevine", "version": "OLD", "key_id": "oem", "vulnerable": True},
            {"id": "w2", "name": "widevine", "version": "NEW", "key_id": "oem"},
        ],
        "policy": {
            "trusted_keys": {"widevine": ["oem"]},
            "rollback": "NONE",
        },
        "events": [
            {"do": "install", "artifact": "w2"},
            {"do": "replace", "artifact": "w1"},
            {"do": "load_trustlet", "name": "widevine"},
        ],
    }
    config.update(overrides)
    return config


class TestLoadScenario:
    def test_dict_and_file_sources_agree(self, tmp_path):
        config = minimal_scenario()
        path = tmp_path / "s.json"
        path.write_text(json.dumps(config))
        assert load_scenario(path).name == load_scenario(config).name == "t"

    @pytest.mark.parametrize(
        "mutate,fragment",
        [
            (lambda c: c.pop("keys"), "unknown key"),
            (lambda c: c["artifacts"][0].update(key_id="ghost"), "ghost"),
            (lambda c: c["artifacts"][0].pop("version"), "version"),
            (lambda c: c["artifacts"][0].update(version="NO_SUCH"), "NO_SUCH"),
            (lambda c: c["artifacts"].append(dict(c["artifacts"][0])), "duplicate"),
            (lambda c: c["events"].append({"do": "install", "artifact": "ghost"}), "ghost"),
            (lambda c: c["events"].append({"do": "warp"}), "warp"),
            (lambda c: c["policy"].update(rollback="MAYBE"), "MAYBE"),
            (lambda c: c["policy"]["trusted_keys"].update({"widevine": ["ghost"]}), "ghost"),
            (lambda c: c["events"].append({"do": "boot"}), "boot"),
        ],
    )
    def test_validation_errors_carry_location(self, mutate, fragment):
        config = minimal_scenario()
        mutate(config)
        with pytest.raises(ConfigError, match=fragment):
            run_scenario(load_scenario(config))

    def test_negative_version(self):
        config = minimal_scenario()
        config["artifacts"][0]["version"] = -1
        with pytest.raises(ConfigError, match="negative"):
            load_scenario(config)


class TestRunScenario:
    def test_downgrade_via_replace_then_load(self):
        report = run_scenario(load_scenario(minimal_scenario()))
        assert report.verdict == "DOWNGRADE_POSSIBLE"
        assert report.events[1]["downgrade"] == "v2 -> v1"

    def test_replace_with_same_or_higher_version_is_not_downgrade(self):
        config = minimal_scenario()
        config["artifacts"][0]["version"] = 3
        report = run_scenario(load_scenario(config))
        assert report.verdict == "SAFE"

    def test_reinstalling_newer_build_clears_exposure(self):
        config = minimal_scenario(
            events=[
                {"do": "install", "artifact": "w2"},
                {"do": "replace", "artifact": "w1"},
                {"do": "install", "artifact": "w2"},
                {"do": "load_trustlet", "name": "widevine"},
            ]
        )
        report = run_scenario(load_scenario(config))
        # the downgraded artifact itself was never accepted by a verifier
        assert report.verdict == "SAFE"
        assert report.final_versions == {"widevine": 2}

    def test_sign_event_adds_artifacts(self):
        config = minimal_scenario(
            events=[
                {
                    "do": "sign",
                    "artifact": {
                        "id": "w3",
                        "name": "widevine",
                        "version": 3,
                        "key_id": "oem",
                    },
                },
                {"do": "install", "artifact": "w3"},
                {"do": "load_trustlet", "name": "widevine"},
            ]
        )
        report = run_scenario(load_scenario(config))
        assert report.verdict == "SAFE"
        assert report.final_versions == {"widevine": 3}

    def test_load_of_nothing_installed(self):
        config = minimal_scenario(events=[{"do": "load_trustlet", "name": "widevine"}])
        with pytest.raises(ConfigError, match="nothing installed"):
            run_scenario(load_scenario(config))

    def test_event_log_is_complete(self):
        report = run_scenario(load_scenario(minimal_scenario()))
        assert [e["event"] for e in report.events] == [
            "install",
            "replace",
            "load_trustlet",
        ]
        assert report.events[2]["verdict"] == "ACCEPT"
