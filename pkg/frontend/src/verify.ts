/** Client-side chain verification for pasted exports.
 *
 * Mirrors the service rules exactly: canonical-JSON payload hashing, hash
 * links, Ed25519 signatures over index(8 BE) || prev_hash || payload_hash,
 * block hashes over that preimage plus the signature, and the event-order
 * fold (genesis first, phases 1..n, one finalization, terminal states after
 * it). Signing keys come only from the public registry endpoint.
 */

import type { BlockDoc } from "./api.js";

export type BadgeStatus = "valid" | "invalid" | "unchecked";

export interface BlockBadge {
  index: number;
  kind: string;
  status: BadgeStatus;
  reason?: string;
}

export interface ChainVerdict {
  valid: boolean;
  firstInvalidIndex?: number;
  failureReason?: string;
  badges: BlockBadge[];
}

const BASE_FIELDS = ["kind", "document_id", "subject_did", "attester_did", "timestamp", "policy_refs"];
const KIND_FIELDS: Record<string, string[]> = {
  RequestOpened: ["destination_country"],
  StepCompleted: ["micro_credential_id", "phase_number"],
  AttestationFinalized: ["aggregate_credential_id"],
  AttestationRevoked: ["aggregate_credential_id"],
  AttestationExpired: ["aggregate_credential_id"],
};

/** Canonical JSON: lexicographically sorted keys, no whitespace, UTF-8. */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value === "number" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) return `[${value.map(canonicalJson).join(",")}]`;
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([key, item]) => `${JSON.stringify(key)}:${canonicalJson(item)}`);
  return `{${entries.join(",")}}`;
}

export function hexToBytes(hex: string): Uint8Array {
  if (!/^([0-9a-f]{2})*$/.test(hex)) throw new Error(`not lowercase hex: ${hex.slice(0, 16)}...`);
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) out[i] = parseInt(hex.slice(i * 2, i * 2 + 2), 16);
  return out;
}

export function bytesToHex(bytes: ArrayBuffer | Uint8Array): string {
  return [...new Uint8Array(bytes)].map((b) => b.toString(16).padStart(2, "0")).join("");
}

function concat(...parts: Uint8Array[]): Uint8Array {
  const out = new Uint8Array(parts.reduce((n, p) => n + p.length, 0));
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

function indexBytes(index: number): Uint8Array {
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigUint64(0, BigInt(index));
  return out;
}

async function sha256(data: Uint8Array): Promise<Uint8Array> {
  return new Uint8Array(await crypto.subtle.digest("SHA-256", data as BufferSource));
}

export function payloadSchemaError(payload: Record<string, unknown>): string | null {
  const kind = payload["kind"];
  if (typeof kind !== "string" || !(kind in KIND_FIELDS)) return `unknown kind ${String(kind)}`;
  const allowed = new Set([...BASE_FIELDS, ...KIND_FIELDS[kind]]);
  for (const key of Object.keys(payload)) {
    if (!allowed.has(key)) return `field ${key} not allowed for ${kind}`;
  }
  for (const key of allowed) {
    if (!(key in payload)) return `field ${key} required for ${kind}`;
  }
  if (!/^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$/.test(String(payload["timestamp"]))) {
    return "timestamp not RFC 3339 seconds-precision UTC";
  }
  if (kind === "RequestOpened" && !/^[A-Z]{2}$/.test(String(payload["destination_country"]))) {
    return "destination_country not ISO-3166 alpha-2";
  }
  if (kind === "StepCompleted") {
    const phase = payload["phase_number"];
    if (typeof phase !== "number" || !Number.isInteger(phase) || phase < 1) {
      return "phase_number must be an integer >= 1";
    }
  }
  return null;
}

class OrderFold {
  nextPhase = 1;
  finalized = false;
  terminal = false;

  step(position: number, payload: Record<string, unknown>): boolean {
    const kind = payload["kind"];
    if (position === 0) return kind === "RequestOpened";
    if (kind === "RequestOpened" || this.terminal) return false;
    if (kind === "StepCompleted") {
      if (this.finalized || payload["phase_number"] !== this.nextPhase) return false;
      this.nextPhase += 1;
      return true;
    }
    if (kind === "AttestationFinalized") {
      if (this.finalized) return false;
      this.finalized = true;
      return true;
    }
    if (!this.finalized) return false;
    this.terminal = true;
    return true;
  }
}

export type KeyResolver = (did: string) => Promise<Uint8Array | null>;

async function verifySignature(
  publicKey: Uint8Array,
  signature: Uint8Array,
  message: Uint8Array
): Promise<boolean> {
  try {
    const key = await crypto.subtle.importKey("raw", publicKey as BufferSource, "Ed25519", false, ["verify"]);
    return await crypto.subtle.verify("Ed25519", key, signature as BufferSource, message as BufferSource);
  } catch {
    return false;
  }
}

async function checkBlock(
  block: BlockDoc,
  position: number,
  prevHash: string,
  fold: OrderFold,
  resolveKey: KeyResolver
): Promise<string | null> {
  const schemaError = payloadSchemaError(block.payload);
  if (schemaError) return `SchemaViolation: ${schemaError}`;

  let payloadHash: string;
  try {
    payloadHash = bytesToHex(await sha256(new TextEncoder().encode(canonicalJson(block.payload))));
  } catch {
    return "SchemaViolation: payload not canonizable";
  }
  if (payloadHash !== block.payload_hash) return "HashMismatch: payload hash";
  if (block.prev_hash !== prevHash) return "LinkBroken: prev_hash";

  const attester = String(block.payload["attester_did"]);
  const publicKey = await resolveKey(attester);
  if (publicKey === null) return `BadSignature: ${attester} not in registry`;
  let preimage: Uint8Array;
  try {
    preimage = concat(indexBytes(block.index), hexToBytes(block.prev_hash), hexToBytes(block.payload_hash));
  } catch {
    return "SchemaViolation: non-hex hash field";
  }
  let signature: Uint8Array;
  try {
    signature = hexToBytes(block.attester_signature);
  } catch {
    return "BadSignature: signature not hex";
  }
  if (!(await verifySignature(publicKey, signature, preimage))) {
    return "BadSignature: attester signature";
  }
  const blockHash = bytesToHex(await sha256(concat(preimage, signature)));
  if (blockHash !== block.block_hash) return "HashMismatch: block hash";
  if (block.index !== position || !fold.step(position, block.payload)) {
    return "OrderViolation: event sequence";
  }
  return null;
}

const ZERO_HASH = "0".repeat(64);

export async function verifyChainClientSide(
  blocks: BlockDoc[],
  resolveKey: KeyResolver
): Promise<ChainVerdict> {
  const badges: BlockBadge[] = [];
  const fold = new OrderFold();
  let prevHash = ZERO_HASH;
  let failedAt: number | undefined;
  let failureReason: string | undefined;

  for (let i = 0; i < blocks.length; i++) {
    const block = blocks[i];
    const kind = String(block?.payload?.["kind"] ?? "?");
    if (failedAt !== undefined) {
      badges.push({ index: i, kind, status: "unchecked" });
      continue;
    }
    let reason: string | null;
    try {
      reason = await checkBlock(block, i, prevHash, fold, resolveKey);
    } catch (error) {
      reason = `SchemaViolation: ${(error as Error).message}`;
    }
    if (reason) {
      failedAt = i;
      failureReason = reason;
      badges.push({ index: i, kind, status: "invalid", reason });
    } else {
      badges.push({ index: i, kind, status: "valid" });
      prevHash = block.block_hash;
    }
  }
  return {
    valid: failedAt === undefined,
    firstInvalidIndex: failedAt,
    failureReason,
    badges,
  };
}
