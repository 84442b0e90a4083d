/** Attester console: the phase queue, step approval, revocation. */

import { ApiClient, RequestSummary } from "../api.js";
import { clear, h } from "../dom.js";
import { Poller, startPolling } from "../poll.js";

// Claims the form may offer: the service rejects anything else.
export const CLAIM_KEYS = [
  "step_outcome",
  "policy_ref",
  "office_code",
  "destination_country",
  "document_kind",
] as const;

export interface WorkQueue {
  actionable: RequestSummary[];
  finalizable: RequestSummary[];
  revocable: RequestSummary[];
}

/** Pure projection of the request list into console work items. */
export function workQueue(requests: RequestSummary[], phaseCount = 5): WorkQueue {
  const actionable: RequestSummary[] = [];
  const finalizable: RequestSummary[] = [];
  const revocable: RequestSummary[] = [];
  for (const request of requests) {
    if (request.state === "Finalized") {
      revocable.push(request);
    } else if (request.state === "Open" || request.state === "InProgress") {
      if (request.pending_phase) {
        actionable.push(request);
      } else if (request.completed_phases.length >= phaseCount) {
        finalizable.push(request);
      }
      if (!request.pending_phase && request.completed_phases.length > 0) {
        // all phases recorded but not yet finalized
        if (!finalizable.includes(request)) finalizable.push(request);
      }
    }
  }
  return { actionable, finalizable, revocable };
}

export function mountAttester(root: HTMLElement, api: ApiClient, passphrase: string): { unmount(): void } {
  const messageBar = h("p", { class: "notice" });
  const queuePane = h("div", { class: "pane" });
  let poller: Poller | null = null;

  const say = (text: string, isError = false) => {
    messageBar.textContent = text;
    messageBar.className = isError ? "notice error" : "notice";
  };

  const stepForm = (request: RequestSummary): HTMLElement => {
    const phase = request.pending_phase!;
    const claimInputs = new Map<string, HTMLInputElement>();
    const form = h("div", { class: "step-form" });
    for (const key of CLAIM_KEYS) {
      const input = h("input", { placeholder: key, "data-claim": key }) as HTMLInputElement;
      claimInputs.set(key, input);
      form.append(input);
    }
    const policyInput = h("input", { placeholder: "policy refs (comma separated)" }) as HTMLInputElement;
    form.append(policyInput);
    form.append(
      h("button", {
        class: "primary approve",
        onclick: () => {
          const claims: Record<string, string> = {};
          for (const [key, input] of claimInputs) {
            if (input.value.trim()) claims[key] = input.value.trim();
          }
          const refs = policyInput.value
            .split(",")
            .map((s) => s.trim())
            .filter(Boolean);
          void api
            .recordStep(request.request_id, phase.phase_number, claims, refs, passphrase)
            .then((result) => {
              say(`Recorded phase ${phase.phase_number} (block #${result.block.index})`);
              void poller?.tick();
            })
            .catch((error) => say((error as Error).message, true));
        },
      }, `Approve phase ${phase.phase_number}`)
    );
    return form;
  };

  const render = (requests: RequestSummary[]) => {
    const queue = workQueue(requests);
    clear(queuePane);
    queuePane.append(h("h3", {}, "Awaiting a phase decision"));
    if (!queue.actionable.length) queuePane.append(h("p", { class: "muted" }, "Queue is empty."));
    for (const request of queue.actionable) {
      queuePane.append(
        h(
          "section",
          { class: "card work-item", "data-request": request.request_id },
          h(
            "h4",
            {},
            `${request.document_id} -> ${request.destination_country} `,
            h("span", { class: "muted" }, `(${request.request_id})`)
          ),
          h("p", {}, `next: phase ${request.pending_phase!.phase_number}, ${request.pending_phase!.phase_name}`),
          stepForm(request)
        )
      );
    }

    queuePane.append(h("h3", {}, "Ready to finalize"));
    for (const request of queue.finalizable) {
      queuePane.append(
        h(
          "section",
          { class: "card" },
          h("h4", {}, `${request.document_id} -> ${request.destination_country}`),
          h("button", {
            class: "primary",
            onclick: () =>
              void api
                .finalize(request.request_id, passphrase)
                .then((result) => {
                  say(`Finalized: ${result.aggregate_credential.id}`);
                  void poller?.tick();
                })
                .catch((error) => say((error as Error).message, true)),
          }, "Finalize")
        )
      );
    }

    queuePane.append(h("h3", {}, "Finalized (revocable)"));
    for (const request of queue.revocable) {
      const reasonInput = h("input", { placeholder: "revocation policy ref" }) as HTMLInputElement;
      queuePane.append(
        h(
          "section",
          { class: "card" },
          h("h4", {}, `${request.document_id} -> ${request.destination_country}`),
          h("p", { class: "muted" }, request.aggregate_credential_id ?? ""),
          reasonInput,
          h("button", {
            class: "danger",
            onclick: () =>
              void api
                .revoke(request.request_id, reasonInput.value.trim(), passphrase)
                .then(() => {
                  say(`Revoked ${request.request_id}`);
                  void poller?.tick();
                })
                .catch((error) => say((error as Error).message, true)),
          }, "Revoke")
        )
      );
    }
  };

  poller = startPolling(async (signal) => {
    const listed = await api.listRequests(signal);
    render(listed.requests);
  });

  clear(root).append(messageBar, queuePane);
  return {
    unmount() {
      poller?.stop();
    },
  };
}
