/** A fetch-level fake of the attestation service, mirroring the real wire
 * shapes: status views, request summaries, wallet views, offers. Tests
 * mutate its state the way the backend would. */

import { vi } from "vitest";

import type { Offer, RequestSummary, StatusView, WalletView } from "../src/api";

export interface FakeState {
  statusByDocument: Record<string, StatusView[]>;
  requests: RequestSummary[];
  wallet: WalletView;
  stepCalls: Array<{ requestId: string; body: Record<string, unknown> }>;
  respondCalls: Array<{ offerId: string; decision: string }>;
  verifyResults: Array<Record<string, unknown>>;
}

export function emptyWallet(did = "did:attest:holder1"): WalletView {
  return { did, credentials: {}, pending_offers: [], audit_log: [], new_messages: [] };
}

export function makeState(): FakeState {
  return {
    statusByDocument: {},
    requests: [],
    wallet: emptyWallet(),
    stepCalls: [],
    respondCalls: [],
    verifyResults: [],
  };
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function error(code: string, message: string, status = 400): Response {
  return json({ error: { code, message } }, status);
}

/** Installs a fetch mock routing the endpoints the console uses. */
export function installFakeService(state: FakeState): void {
  const handler = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input), "http://service.test");
    const path = url.pathname;
    const body = init?.body ? JSON.parse(String(init.body)) : {};

    if (path === "/auth/login") {
      if (body.wallet_passphrase === "wrong") return error("WalletLocked", "wallet did not unlock", 403);
      return json({
        token: "token-1",
        did: body.did,
        role: body.did.includes("officer") ? "AttestingEntity" : "Holder",
        expires_at: "2026-03-01T13:00:00Z",
      });
    }
    if (path.startsWith("/status/")) {
      const documentId = decodeURIComponent(path.slice("/status/".length));
      return json({ document_id: documentId, requests: state.statusByDocument[documentId] ?? [] });
    }
    if (path === "/requests" && (init?.method ?? "GET") === "GET") {
      return json({ requests: state.requests });
    }
    if (path === "/requests" && init?.method === "POST") {
      return json({ request: { request_id: "req-new" }, genesis_block: {} });
    }
    const stepMatch = path.match(/^\/requests\/([^/]+)\/steps$/);
    if (stepMatch) {
      state.stepCalls.push({ requestId: decodeURIComponent(stepMatch[1]), body });
      return json({ block: { index: state.stepCalls.length }, micro_credential: { id: "urn:attest:mc:x" } });
    }
    if (path === "/wallet/sync") {
      return json(state.wallet);
    }
    const respondMatch = path.match(/^\/wallet\/offers\/([^/]+)\/respond$/);
    if (respondMatch) {
      const offerId = decodeURIComponent(respondMatch[1]);
      state.respondCalls.push({ offerId, decision: body.decision });
      const offer = state.wallet.pending_offers.find((o) => o.offer_id === offerId);
      if (!offer) return error("UnknownOffer", `no offer ${offerId}`, 404);
      if (offer.status !== "pending") return error("AlreadyResolved", "already resolved", 409);
      const credentialId = String(offer.credential["id"]);
      offer.status = body.decision === "accept" ? "accepted" : "rejected";
      if (body.decision === "accept") {
        state.wallet.audit_log.push({
          seq: state.wallet.audit_log.length + 1,
          event: "OfferAccepted",
          counterparty_did: offer.from_did,
          timestamp: "2026-03-01T12:10:00Z",
          subject_ids: [credentialId],
        });
        state.wallet.credentials[credentialId] = offer.credential;
      } else {
        state.wallet.audit_log.push({
          seq: state.wallet.audit_log.length + 1,
          event: "OfferRejected",
          counterparty_did: offer.from_did,
          timestamp: "2026-03-01T12:10:00Z",
          subject_ids: [credentialId],
        });
      }
      return json({
        offer_id: offerId,
        status: offer.status,
        credential_id: credentialId,
        ...state.wallet,
      });
    }
    if (path === "/presentations/verify") {
      return json(state.verifyResults.shift() ?? { ok: true });
    }
    return error("NotFound", `unhandled ${init?.method ?? "GET"} ${path}`, 404);
  };

  vi.stubGlobal("fetch", vi.fn(handler));
}

export function makeOffer(offerId: string, credentialId: string): Offer {
  return {
    offer_id: offerId,
    credential: { id: credentialId, phase_number: 1 },
    from_did: "did:attest:officer1",
    status: "pending",
  };
}

export function statusView(
  documentId: string,
  phases: number,
  pending: number | null,
  state = "InProgress"
): StatusView {
  return {
    request_id: "req-1",
    document_id: documentId,
    destination_country: "AE",
    state,
    opened_at: "2026-03-01T12:00:00Z",
    completed_phases: Array.from({ length: phases }, (_, i) => ({
      phase_number: i + 1,
      timestamp: `2026-03-01T12:0${i + 1}:00Z`,
      attester_did: "did:attest:officer1",
      phase_name: `Phase ${i + 1}`,
    })),
    block_count: phases + 1,
    ...(pending !== null
      ? { pending_phase: { phase_number: pending, phase_name: `Phase ${pending}` } }
      : {}),
  };
}
