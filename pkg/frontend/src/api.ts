/** Typed client over the attestation service API. */

export interface SessionInfo {
  token: string;
  did: string;
  role: string;
  expires_at: string;
}

export interface PhaseEntry {
  phase_number: number;
  timestamp: string;
  attester_did: string;
  phase_name?: string;
}

export interface StatusView {
  request_id: string;
  document_id: string;
  destination_country: string;
  state: string;
  opened_at: string;
  completed_phases: PhaseEntry[];
  block_count: number;
  pending_phase?: { phase_number: number; phase_name: string };
  aggregate_credential_id?: string;
  finalized_at?: string;
}

export interface BlockDoc {
  index: number;
  prev_hash: string;
  payload: Record<string, unknown>;
  payload_hash: string;
  attester_signature: string;
  block_hash: string;
}

export interface ChainEntry {
  chain_id: string;
  blocks: BlockDoc[];
  verification?: { valid: boolean; first_invalid_index?: number; failure_reason?: string };
}

export interface Offer {
  offer_id: string;
  credential: Record<string, unknown>;
  from_did: string;
  status: string;
}

export interface WalletView {
  did: string;
  credentials: Record<string, Record<string, unknown>>;
  pending_offers: Offer[];
  audit_log: AuditEntry[];
  new_messages?: InboxEvent[];
}

export interface AuditEntry {
  seq: number;
  event: string;
  counterparty_did: string;
  timestamp: string;
  subject_ids: string[];
}

export interface InboxEvent {
  type: string;
  from_did: string;
  body?: unknown;
}

export interface RequestSummary {
  request_id: string;
  document_id: string;
  destination_country: string;
  state: string;
  template_id: string;
  completed_phases: number[];
  pending_phase?: { phase_number: number; phase_name: string };
  aggregate_credential_id?: string;
}

export interface VerifyResult {
  ok: boolean;
  reason?: string;
  detail?: string;
}

export interface DidDocument {
  did: string;
  signing_key: string;
  key_agreement_key: string;
  role: string;
  created_at: string;
}

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export class ApiClient {
  base: string;
  session: SessionInfo | null = null;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  private async call<T>(
    method: string,
    path: string,
    body?: unknown,
    signal?: AbortSignal
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["content-type"] = "application/json";
    if (this.session) headers["authorization"] = `Bearer ${this.session.token}`;
    const response = await fetch(this.base + path, {
      method,
      headers,
      body: body !== undefined ? JSON.stringify(body) : undefined,
      signal,
    });
    const text = await response.text();
    const payload = text ? JSON.parse(text) : {};
    if (!response.ok) {
      const error = (payload as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(error.code ?? "HttpError", error.message ?? text, response.status);
    }
    return payload as T;
  }

  async login(did: string, walletPassphrase: string): Promise<SessionInfo> {
    this.session = await this.call<SessionInfo>("POST", "/auth/login", {
      did,
      wallet_passphrase: walletPassphrase,
    });
    return this.session;
  }

  logout(): void {
    this.session = null;
  }

  status(documentId: string, destination?: string, signal?: AbortSignal) {
    const query = destination ? `?destination=${encodeURIComponent(destination)}` : "";
    return this.call<{ document_id: string; requests: StatusView[] }>(
      "GET",
      `/status/${encodeURIComponent(documentId)}${query}`,
      undefined,
      signal
    );
  }

  chains(documentId: string, verify = true, signal?: AbortSignal) {
    const query = verify ? "?verify=true" : "";
    return this.call<{ document_id: string; chains: ChainEntry[] }>(
      "GET",
      `/chains/${encodeURIComponent(documentId)}${query}`,
      undefined,
      signal
    );
  }

  resolveDid(did: string, signal?: AbortSignal) {
    return this.call<DidDocument>("GET", `/registry/dids/${encodeURIComponent(did)}`, undefined, signal);
  }

  submitRequest(documentId: string, destination: string, templateId: string, passphrase: string) {
    return this.call<{ request: { request_id: string } }>("POST", "/requests", {
      document_id: documentId,
      destination_country: destination,
      template_id: templateId,
      wallet_passphrase: passphrase,
    });
  }

  recordStep(
    requestId: string,
    phase: number,
    claims: Record<string, string>,
    policyRefs: string[],
    passphrase: string
  ) {
    return this.call<{ block: BlockDoc }>("POST", `/requests/${encodeURIComponent(requestId)}/steps`, {
      phase_number: phase,
      claims,
      policy_refs: policyRefs,
      wallet_passphrase: passphrase,
    });
  }

  finalize(requestId: string, passphrase: string) {
    return this.call<{ aggregate_credential: { id: string } }>(
      "POST",
      `/requests/${encodeURIComponent(requestId)}/finalize`,
      { wallet_passphrase: passphrase }
    );
  }

  revoke(requestId: string, reason: string, passphrase: string) {
    return this.call<{ block: BlockDoc }>("POST", `/requests/${encodeURIComponent(requestId)}/revoke`, {
      reason_text: reason,
      wallet_passphrase: passphrase,
    });
  }

  listRequests(signal?: AbortSignal) {
    return this.call<{ requests: RequestSummary[] }>("GET", "/requests", undefined, signal);
  }

  walletSync(passphrase: string, signal?: AbortSignal) {
    return this.call<WalletView>("POST", "/wallet/sync", { wallet_passphrase: passphrase }, signal);
  }

  respondToOffer(offerId: string, decision: "accept" | "reject", passphrase: string) {
    return this.call<WalletView & { status: string; credential_id: string }>(
      "POST",
      `/wallet/offers/${encodeURIComponent(offerId)}/respond`,
      { decision, wallet_passphrase: passphrase }
    );
  }

  verifyPresentation(presentation: Record<string, unknown>, nonce: string) {
    return this.call<VerifyResult>("POST", "/presentations/verify", {
      presentation,
      expected_nonce: nonce,
    });
  }

  info() {
    return this.call<{ templates: string[]; offline: boolean }>("GET", "/info");
  }
}
