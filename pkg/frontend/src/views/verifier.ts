/** Verifier page: chain lookups with per-block badges, pasted-export
 * verification, and presentation checks. Chain viewing works without a
 * session; presentation verification requires one. */

import { ApiClient, BlockDoc, ChainEntry } from "../api.js";
import { clear, h } from "../dom.js";
import { BlockBadge, verifyChainClientSide } from "../verify.js";

/** Badges from the server-side verification report (registry lookups and
 * signature checks already done service-side). */
export function badgesFromReport(entry: ChainEntry): BlockBadge[] {
  const verification = entry.verification;
  return entry.blocks.map((block, i) => {
    const kind = String(block.payload["kind"] ?? "?");
    if (!verification || verification.valid) return { index: i, kind, status: "valid" as const };
    const failed = verification.first_invalid_index ?? 0;
    if (i < failed) return { index: i, kind, status: "valid" as const };
    if (i === failed) {
      return { index: i, kind, status: "invalid" as const, reason: verification.failure_reason };
    }
    return { index: i, kind, status: "unchecked" as const };
  });
}

export function parseChainExport(text: string): BlockDoc[] {
  const doc = JSON.parse(text);
  if (Array.isArray(doc)) return doc as BlockDoc[];
  if (Array.isArray(doc?.blocks)) return doc.blocks as BlockDoc[];
  if (Array.isArray(doc?.chains) && doc.chains.length) return doc.chains[0].blocks as BlockDoc[];
  throw new Error("not a chain export: expected blocks[] or chains[0].blocks[]");
}

function badgeList(badges: BlockBadge[]): HTMLElement {
  const list = h("ol", { class: "badges", start: "0" });
  for (const badge of badges) {
    list.append(
      h(
        "li",
        { class: `badge ${badge.status}`, "data-index": String(badge.index) },
        h("strong", {}, `#${badge.index} ${badge.kind}`),
        h("span", { class: "muted" }, badge.reason ? ` ${badge.status}: ${badge.reason}` : ` ${badge.status}`)
      )
    );
  }
  return list;
}

export function mountVerifier(root: HTMLElement, api: ApiClient): { unmount(): void } {
  const messageBar = h("p", { class: "notice" });
  const chainsPane = h("div", { class: "pane" });
  const pastePane = h("div", { class: "pane" });
  const presentationPane = h("div", { class: "pane" });

  const say = (text: string, isError = false) => {
    messageBar.textContent = text;
    messageBar.className = isError ? "notice error" : "notice";
  };

  const documentInput = h("input", { placeholder: "document id" }) as HTMLInputElement;

  const lookup = async () => {
    try {
      const result = await api.chains(documentInput.value.trim(), true);
      clear(chainsPane);
      chainsPane.append(h("h3", {}, "Chains on record"));
      if (!result.chains.length) chainsPane.append(h("p", { class: "muted" }, "No chains for this document."));
      for (const entry of result.chains) {
        chainsPane.append(
          h(
            "section",
            { class: "card" },
            h("h4", {}, `${entry.chain_id} (${entry.blocks.length} blocks)`),
            badgeList(badgesFromReport(entry))
          )
        );
      }
    } catch (error) {
      say((error as Error).message, true);
    }
  };

  const exportArea = h("textarea", { placeholder: "paste a chain export (JSON)" }) as HTMLTextAreaElement;
  const pasteResult = h("div", {});

  const verifyPasted = async () => {
    try {
      const blocks = parseChainExport(exportArea.value);
      const verdict = await verifyChainClientSide(blocks, async (did) => {
        try {
          const doc = await api.resolveDid(did);
          return Uint8Array.from(
            (doc.signing_key.match(/.{2}/g) ?? []).map((pair) => parseInt(pair, 16))
          );
        } catch {
          return null;
        }
      });
      clear(pasteResult);
      pasteResult.append(
        h("p", { class: verdict.valid ? "notice" : "notice error" },
          verdict.valid ? "Chain verifies." : `Invalid at block ${verdict.firstInvalidIndex}: ${verdict.failureReason}`),
        badgeList(verdict.badges)
      );
    } catch (error) {
      say((error as Error).message, true);
    }
  };

  const presentationArea = h("textarea", { placeholder: "paste a presentation (JSON)" }) as HTMLTextAreaElement;
  const nonceInput = h("input", { placeholder: "challenge nonce you issued" }) as HTMLInputElement;
  const presentationResult = h("div", {});

  const verifyPresentation = async () => {
    try {
      const doc = JSON.parse(presentationArea.value);
      const presentation = doc.presentation ?? doc;
      const result = await api.verifyPresentation(presentation, nonceInput.value.trim());
      clear(presentationResult);
      presentationResult.append(
        h(
          "p",
          { class: result.ok ? "notice" : "notice error", "data-result": String(result.ok) },
          result.ok
            ? "Presentation verifies."
            : `Rejected: ${result.reason}${result.detail ? ` (${result.detail})` : ""}`
        )
      );
    } catch (error) {
      say((error as Error).message, true);
    }
  };

  clear(root).append(
    messageBar,
    h(
      "div",
      { class: "pane" },
      h("h3", {}, "Look up a document"),
      documentInput,
      h("button", { class: "primary", onclick: () => void lookup() }, "Fetch chains")
    ),
    chainsPane,
    h("h3", {}, "Verify a pasted chain export"),
    exportArea,
    h("button", { onclick: () => void verifyPasted() }, "Verify export"),
    pastePane,
    pasteResult,
    h("h3", {}, "Verify a presentation"),
    presentationArea,
    nonceInput,
    h("button", { onclick: () => void verifyPresentation() }, "Verify presentation"),
    presentationPane,
    presentationResult
  );

  return { unmount() {} };
}
