"""Workflow: contract rules (duplicates, phase order, authorization),
finalization, revocation, expiry sweep, and ledger/state coherence."""

import itertools
import random
from datetime import timedelta

import pytest

from attestchain.credentials import verify_aggregate_credential
from attestchain.errors import (
    AlreadyFinalized,
    DuplicateRequest,
    NotFinalized,
    PhasesIncomplete,
    RequestNotActive,
    SkippedStep,
    UnauthorizedAttester,
    UnauthorizedIssuer,
    UnknownHolder,
    UnknownTemplate,
)
from attestchain.ledger import BlockKind, verify_chain
from attestchain.registry import CredentialStatus, Role
from attestchain.workflow import (
    Phase,
    RequestState,
    WorkflowTemplate,
    default_template,
    load_templates,
    replay_chain,
)
from conftest import build_engine, make_identity, run_full_attestation


def test_submit_opens_genesis_with_required_fields(engine, holder, clock):
    request = engine.submit_request("D-100", "AE", holder.owner_did, "legalization-5", holder)
    blocks = engine.ledger.chain(request.request_id)
    assert len(blocks) == 1
    genesis = blocks[0].payload
    assert genesis.kind is BlockKind.REQUEST_OPENED
    assert genesis.document_id == "D-100"
    assert genesis.destination_country == "AE"
    assert genesis.timestamp == clock()
    assert request.state is RequestState.OPEN


def test_duplicate_same_destination_rejected(engine, holder):
    engine.submit_request("D-100", "AE", holder.owner_did, "legalization-5", holder)
    with pytest.raises(DuplicateRequest):
        engine.submit_request("D-100", "AE", holder.owner_did, "legalization-5", holder)


def test_same_document_other_destination_accepted(engine, holder):
    engine.submit_request("D-100", "AE", holder.owner_did, "legalization-5", holder)
    second = engine.submit_request("D-100", "CA", holder.owner_did, "legalization-5", holder)
    assert second.destination_country == "CA"


def test_unknown_holder_rejected(engine, clock):
    from attestchain.agents import Wallet

    ghost = Wallet.create(clock=clock)
    with pytest.raises(UnknownHolder):
        engine.submit_request("D-1", "AE", ghost.owner_did, "legalization-5", ghost)


def test_unknown_template_rejected(engine, holder):
    with pytest.raises(UnknownTemplate):
        engine.submit_request("D-1", "AE", holder.owner_did, "no-such-template", holder)


def test_record_step_appends_block_and_issues_micro(engine, holder, attesters):
    request = engine.submit_request("D-1", "AE", holder.owner_did, "legalization-5", holder)
    block, micro = engine.record_step(request.request_id, 1, attesters[0], {"step_outcome": "approved"})
    assert block.index == 1
    assert block.payload.micro_credential_id == micro.id
    assert micro.phase_number == 1
    assert engine.credentials.micro(micro.id) is not None
    assert request.state is RequestState.IN_PROGRESS


def test_skipped_step_rejected(engine, holder, attesters):
    request = engine.submit_request("D-1", "AE", holder.owner_did, "legalization-5", holder)
    engine.record_step(request.request_id, 1, attesters[0], {})
    with pytest.raises(SkippedStep):
        engine.record_step(request.request_id, 3, attesters[2], {})


def test_unauthorized_attester_rejected(engine, holder, attesters, registry, clock):
    template = WorkflowTemplate(
        template_id="strict-2",
        phases=[
            Phase(1, "Notary", authorized_dids=[attesters[0].owner_did]),
            Phase(2, "Ministry", authorized_dids=[attesters[1].owner_did]),
        ],
    )
    engine.templates[template.template_id] = template
    request = engine.submit_request("D-2", "AE", holder.owner_did, "strict-2", holder)
    with pytest.raises(UnauthorizedAttester):
        engine.record_step(request.request_id, 1, attesters[1], {})


def test_holder_role_cannot_attest(engine, holder):
    request = engine.submit_request("D-3", "AE", holder.owner_did, "legalization-5", holder)
    with pytest.raises(UnauthorizedAttester):
        engine.record_step(request.request_id, 1, holder, {})


def test_all_phase_permutations_exactly_one_full_sequence(tmp_path, registry, clock, holder):
    # 4-phase template, all 24 orderings: a full pass happens only in order.
    template = WorkflowTemplate(
        template_id="perm-4", phases=[Phase(i, f"Phase {i}") for i in range(1, 5)]
    )
    engine = build_engine(tmp_path, registry, clock, template=template)
    officer = make_identity(registry, Role.ATTESTING_ENTITY, clock)
    full_sequences = 0
    for n, perm in enumerate(itertools.permutations([1, 2, 3, 4])):
        request = engine.submit_request(f"D-perm-{n}", "AE", holder.owner_did, "perm-4", holder)
        completed = 0
        for phase in perm:
            try:
                engine.record_step(request.request_id, phase, officer, {})
                completed += 1
            except SkippedStep:
                pass
        if completed == 4:
            full_sequences += 1
            assert perm == (1, 2, 3, 4)
    assert full_sequences == 1


def test_finalize_requires_all_phases(engine, holder, attesters):
    request = engine.submit_request("D-4", "AE", holder.owner_did, "legalization-5", holder)
    for i in range(1, 5):
        engine.record_step(request.request_id, i, attesters[i - 1], {})
    with pytest.raises(PhasesIncomplete):
        engine.finalize_attestation(request.request_id, attesters[3])


def test_finalize_requires_final_attester(engine, holder, attesters):
    request = engine.submit_request("D-5", "AE", holder.owner_did, "legalization-5", holder)
    for i in range(1, 6):
        engine.record_step(request.request_id, i, attesters[i - 1], {})
    with pytest.raises(UnauthorizedIssuer):
        engine.finalize_attestation(request.request_id, attesters[0])


def test_full_run_shape(engine, holder, attesters, registry, clock):
    request, aggregate = run_full_attestation(engine, holder, attesters)
    blocks = engine.ledger.chain(request.request_id)
    assert len(blocks) == 7  # genesis + 5 steps + finalized
    assert [b.payload.kind for b in blocks[-1:]] == [BlockKind.ATTESTATION_FINALIZED]
    assert aggregate.micro_credential_ids == [request.micro_ids_by_phase[i] for i in range(1, 6)]
    assert verify_chain(blocks, registry).valid
    assert verify_aggregate_credential(aggregate, engine.credentials.micro, registry, clock()).ok
    assert request.state is RequestState.FINALIZED
    assert request.aggregate_expires_at == clock() + timedelta(days=730)


def test_finalize_twice_rejected(engine, holder, attesters):
    request, _ = run_full_attestation(engine, holder, attesters)
    with pytest.raises(AlreadyFinalized):
        engine.finalize_attestation(request.request_id, attesters[-1])


def test_step_after_finalize_rejected(engine, holder, attesters):
    request, _ = run_full_attestation(engine, holder, attesters)
    with pytest.raises(RequestNotActive):
        engine.record_step(request.request_id, 6, attesters[0], {})


def test_resubmission_allowed_after_revocation(engine, holder, attesters):
    request, _ = run_full_attestation(engine, holder, attesters)
    engine.revoke_attestation(request.request_id, attesters[-1], "policy:recheck")
    again = engine.submit_request("DOC-1", "AE", holder.owner_did, "legalization-5", holder)
    assert again.request_id != request.request_id


def test_revoke_flow(engine, holder, attesters, registry, clock):
    request, aggregate = run_full_attestation(engine, holder, attesters)
    block = engine.revoke_attestation(request.request_id, attesters[-1], "policy:ref-9")
    assert block.payload.kind is BlockKind.ATTESTATION_REVOKED
    assert block.payload.policy_refs == ["policy:ref-9"]
    assert request.state is RequestState.REVOKED
    assert registry.credential_status(aggregate.id, clock()) is CredentialStatus.REVOKED
    result = verify_aggregate_credential(aggregate, engine.credentials.micro, registry, clock())
    assert not result.ok and result.reason.value == "Revoked"


def test_revoke_in_progress_rejected(engine, holder, attesters):
    request = engine.submit_request("D-6", "AE", holder.owner_did, "legalization-5", holder)
    with pytest.raises(NotFinalized):
        engine.revoke_attestation(request.request_id, attesters[-1], "")


def test_revoke_by_unauthorized_rejected(engine, holder, attesters):
    request, _ = run_full_attestation(engine, holder, attesters)
    with pytest.raises(UnauthorizedIssuer):
        engine.revoke_attestation(request.request_id, attesters[0], "")


def test_configured_authority_may_revoke(tmp_path, registry, clock, holder, attesters):
    authority = make_identity(registry, Role.CREDENTIAL_ISSUER, clock)
    engine = build_engine(tmp_path, registry, clock, revocation_authorities=[authority.owner_did])
    request, _ = run_full_attestation(engine, holder, attesters)
    block = engine.revoke_attestation(request.request_id, authority, "policy:authority")
    assert block.payload.attester_did == authority.owner_did


def test_record_step_atomicity_on_append_failure(engine, holder, attesters, registry, clock, monkeypatch):
    # credential-first ordering: if the ledger append fails, the just-issued
    # micro-credential is revoked so no half-applied step survives
    from attestchain.errors import UnknownChain
    from attestchain.credentials import verify_micro_credential

    request = engine.submit_request("D-ATOMIC", "AE", holder.owner_did, "legalization-5", holder)

    issued = []
    real_add = engine.credentials.add

    def capture_add(cred):
        issued.append(cred)
        real_add(cred)

    def failing_append(*args, **kwargs):
        raise UnknownChain("simulated ledger outage")

    monkeypatch.setattr(engine.credentials, "add", capture_add)
    monkeypatch.setattr(engine.ledger, "append_block", failing_append)
    with pytest.raises(UnknownChain):
        engine.record_step(request.request_id, 1, attesters[0], {"step_outcome": "approved"})

    [micro] = issued
    result = verify_micro_credential(micro, registry, clock())
    assert not result.ok and result.reason.value == "Revoked"
    assert request.micro_ids_by_phase == {}
    assert request.state is RequestState.OPEN


# -- expiry sweep ---------------------------------------------------------


def short_template(days):
    return WorkflowTemplate(
        template_id=f"fast-{days}", phases=[Phase(1, "Only phase")], validity_days=days
    )


def test_expire_sweep_brute_force_oracle(tmp_path, registry, clock, holder):
    # Mixed validity periods; the sweep must transition exactly the subset a
    # linear scan of (finalized, expires_at < now) predicts.
    officer = make_identity(registry, Role.ATTESTING_ENTITY, clock)
    engine = build_engine(tmp_path, registry, clock, template=short_template(1))
    for days in (2, 3, 10):
        engine.templates[f"fast-{days}"] = short_template(days)

    finalized = {}
    for n, days in enumerate((1, 2, 3, 10)):
        request = engine.submit_request(f"D-exp-{n}", "AE", holder.owner_did, f"fast-{days}", holder)
        engine.record_step(request.request_id, 1, officer, {})
        engine.finalize_attestation(request.request_id, officer)
        finalized[request.request_id] = engine.get_request(request.request_id).aggregate_expires_at

    clock.tick(int(timedelta(days=2, hours=12).total_seconds()))
    now = clock()
    expected = sorted(rid for rid, exp in finalized.items() if exp < now)

    swept = engine.expire_sweep(now)
    assert sorted(swept) == expected
    assert engine.expire_sweep(now) == []  # idempotent
    for rid in expected:
        request = engine.get_request(rid)
        assert request.state is RequestState.EXPIRED
        blocks = engine.ledger.chain(rid)
        assert blocks[-1].payload.kind is BlockKind.ATTESTATION_EXPIRED
        assert registry.credential_status(request.aggregate_credential_id, now) is CredentialStatus.EXPIRED


def test_sweep_with_nothing_expired(engine, holder, attesters):
    run_full_attestation(engine, holder, attesters)
    assert engine.expire_sweep() == []


# -- status timeline -------------------------------------------------------


def test_status_timeline_midway(engine, holder, attesters):
    request = engine.submit_request("D-7", "AE", holder.owner_did, "legalization-5", holder)
    engine.record_step(request.request_id, 1, attesters[0], {})
    engine.record_step(request.request_id, 2, attesters[1], {})
    [view] = engine.attestation_status("D-7")
    assert view["state"] == "InProgress"
    assert [p["phase_number"] for p in view["completed_phases"]] == [1, 2]
    assert view["completed_phases"][0]["attester_did"] == attesters[0].owner_did
    assert view["pending_phase"]["phase_number"] == 3
    assert view["pending_phase"]["phase_name"] == "Ministry of foreign affairs attestation"
    assert "aggregate_credential_id" not in view


def test_status_unknown_document_empty(engine):
    assert engine.attestation_status("D-none") == []


def test_status_finalized_shows_aggregate(engine, holder, attesters):
    request, aggregate = run_full_attestation(engine, holder, attesters, document_id="D-8")
    [view] = engine.attestation_status("D-8")
    assert view["state"] == "Finalized"
    assert view["aggregate_credential_id"] == aggregate.id
    assert "pending_phase" not in view


def test_status_never_contains_claims(engine, holder, attesters):
    sentinel = "SECRET-CLAIM-VALUE-XYZ"
    request = engine.submit_request("D-9", "AE", holder.owner_did, "legalization-5", holder)
    engine.record_step(request.request_id, 1, attesters[0], {"step_outcome": sentinel})
    import json

    views = engine.attestation_status("D-9")
    assert sentinel not in json.dumps(views)


# -- coherence and the state-machine model ----------------------------------


def test_replay_chain_reconstructs_request(engine, holder, attesters):
    request = engine.submit_request("D-10", "AE", holder.owner_did, "legalization-5", holder)
    for i in range(1, 4):
        engine.record_step(request.request_id, i, attesters[i - 1], {})
    state, micro_ids = replay_chain(engine.ledger.chain(request.request_id))
    assert state is request.state
    assert micro_ids == request.micro_ids_by_phase

    for i in range(4, 6):
        engine.record_step(request.request_id, i, attesters[i - 1], {})
    engine.finalize_attestation(request.request_id, attesters[-1])
    state, micro_ids = replay_chain(engine.ledger.chain(request.request_id))
    assert state is RequestState.FINALIZED
    assert micro_ids == request.micro_ids_by_phase


class ModelRequest:
    """Brute-force reference model of the request state machine."""

    def __init__(self, phases):
        self.phases = phases
        self.done = 0
        self.state = "Open"

    def record(self, phase):
        if self.state not in ("Open", "InProgress"):
            return "RequestNotActive"
        if phase != self.done + 1 or phase > self.phases:
            return "SkippedStep"
        self.done += 1
        self.state = "InProgress"
        return None

    def finalize(self):
        if self.state in ("Finalized", "Revoked", "Expired"):
            return "AlreadyFinalized"
        if self.done != self.phases:
            return "PhasesIncomplete"
        self.state = "Finalized"
        return None

    def revoke(self):
        if self.state != "Finalized":
            return "NotFinalized"
        self.state = "Revoked"
        return None


def test_random_operation_sequences_match_model(tmp_path, registry, clock, holder):
    template = WorkflowTemplate(template_id="model-3", phases=[Phase(i, f"P{i}") for i in (1, 2, 3)])
    engine = build_engine(tmp_path, registry, clock, template=template)
    officer = make_identity(registry, Role.ATTESTING_ENTITY, clock)
    rng = random.Random(20260301)

    for case in range(30):
        request = engine.submit_request(f"D-model-{case}", "AE", holder.owner_did, "model-3", holder)
        model = ModelRequest(3)
        for _ in range(rng.randrange(3, 10)):
            op = rng.choice(["record", "finalize", "revoke"])
            if op == "record":
                phase = rng.randrange(1, 5)
                expected = model.record(phase)
                try:
                    engine.record_step(request.request_id, phase, officer, {})
                    actual = None
                except (SkippedStep, RequestNotActive) as exc:
                    actual = exc.code
            elif op == "finalize":
                expected = model.finalize()
                try:
                    engine.finalize_attestation(request.request_id, officer)
                    actual = None
                except (AlreadyFinalized, PhasesIncomplete, UnauthorizedIssuer) as exc:
                    actual = exc.code
            else:
                expected = model.revoke()
                try:
                    engine.revoke_attestation(request.request_id, officer, "")
                    actual = None
                except NotFinalized as exc:
                    actual = exc.code
            assert actual == expected, f"case {case}: {op} diverged"
            assert engine.get_request(request.request_id).state.value == model.state
        # a finalized model can never have fewer completed phases than the template
        if model.state in ("Finalized", "Revoked"):
            assert len(engine.get_request(request.request_id).micro_ids_by_phase) == 3


def test_engine_reload_restores_requests(tmp_path, registry, clock, holder, attesters):
    engine = build_engine(tmp_path, registry, clock)
    request = engine.submit_request("D-11", "AE", holder.owner_did, "legalization-5", holder)
    engine.record_step(request.request_id, 1, attesters[0], {})

    # fresh engine over the same state dir (chains + requests live in tmp_path)
    from attestchain.credentials import CredentialStore
    from attestchain.ledger import LedgerStore
    from attestchain.workflow import WorkflowEngine

    reloaded = WorkflowEngine(
        registry=registry,
        ledger=LedgerStore(tmp_path / "chains", registry, clock=clock),
        credential_store=CredentialStore(tmp_path / "credentials.jsonl"),
        templates={"legalization-5": default_template()},
        state_dir=tmp_path / "requests",
        gateway_wallet=engine.gateway_wallet,
        clock=clock,
    )
    restored = reloaded.get_request(request.request_id)
    assert restored.state is RequestState.IN_PROGRESS
    assert restored.micro_ids_by_phase == {1: request.micro_ids_by_phase[1]}
    with pytest.raises(DuplicateRequest):
        reloaded.submit_request("D-11", "AE", holder.owner_did, "legalization-5", holder)


def test_load_templates_from_dir(tmp_path):
    import json as json_mod

    path = tmp_path / "templates"
    path.mkdir()
    (path / "t.json").write_text(json_mod.dumps(default_template().to_dict()))
    templates = load_templates(path)
    assert "legalization-5" in templates
    assert templates["legalization-5"].phase_count == 5
