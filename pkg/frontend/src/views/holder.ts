/** Holder dashboard: submit requests, watch timelines, handle offers. */

import { ApiClient, Offer, StatusView, WalletView } from "../api.js";
import { clear, h } from "../dom.js";
import { Poller, startPolling } from "../poll.js";

export interface TimelineRow {
  label: string;
  detail: string;
  done: boolean;
}

export interface RequestTimeline {
  requestId: string;
  destination: string;
  state: string;
  rows: TimelineRow[];
  aggregateId?: string;
}

/** Pure projection of the public status view into renderable rows. */
export function buildTimelines(views: StatusView[]): RequestTimeline[] {
  return views.map((view) => {
    const rows: TimelineRow[] = [
      { label: "Request opened", detail: view.opened_at, done: true },
    ];
    for (const phase of view.completed_phases) {
      rows.push({
        label: `Phase ${phase.phase_number}${phase.phase_name ? `: ${phase.phase_name}` : ""}`,
        detail: `${phase.timestamp} by ${phase.attester_did}`,
        done: true,
      });
    }
    if (view.pending_phase) {
      rows.push({
        label: `Phase ${view.pending_phase.phase_number}: ${view.pending_phase.phase_name}`,
        detail: "pending",
        done: false,
      });
    }
    if (view.state === "Finalized" || view.state === "Revoked" || view.state === "Expired") {
      rows.push({
        label: view.state,
        detail: view.aggregate_credential_id ?? "",
        done: true,
      });
    }
    return {
      requestId: view.request_id,
      destination: view.destination_country,
      state: view.state,
      rows,
      aggregateId: view.aggregate_credential_id,
    };
  });
}

export function pendingOffers(wallet: WalletView): Offer[] {
  return wallet.pending_offers.filter((offer) => offer.status === "pending");
}

export function mountHolder(root: HTMLElement, api: ApiClient, passphrase: string): { unmount(): void } {
  const messageBar = h("p", { class: "notice" });
  const timelinePane = h("div", { class: "pane" });
  const offersPane = h("div", { class: "pane" });
  const walletPane = h("div", { class: "pane" });
  const inboxPane = h("div", { class: "pane" });

  const documentInput = h("input", { placeholder: "document id", value: "" }) as HTMLInputElement;
  const destinationInput = h("input", { placeholder: "destination (e.g. AE)", maxlength: "2" }) as HTMLInputElement;
  const templateInput = h("input", { value: "legalization-5" }) as HTMLInputElement;
  const trackInput = h("input", { placeholder: "document id to track" }) as HTMLInputElement;

  let statusPoller: Poller | null = null;
  let walletPoller: Poller | null = null;

  const say = (text: string, isError = false) => {
    messageBar.textContent = text;
    messageBar.className = isError ? "notice error" : "notice";
  };

  const renderTimelines = (views: StatusView[]) => {
    clear(timelinePane);
    timelinePane.append(h("h3", {}, "Attestation timeline"));
    if (!views.length) {
      timelinePane.append(h("p", { class: "muted" }, "No requests for this document."));
      return;
    }
    for (const timeline of buildTimelines(views)) {
      const list = h("ul", { class: "timeline" });
      for (const row of timeline.rows) {
        list.append(
          h(
            "li",
            { class: row.done ? "done" : "pending" },
            h("strong", {}, row.label),
            h("span", { class: "muted" }, ` ${row.detail}`)
          )
        );
      }
      timelinePane.append(
        h(
          "section",
          { class: "card", "data-request": timeline.requestId },
          h("h4", {}, `${timeline.requestId} -> ${timeline.destination} (${timeline.state})`),
          list
        )
      );
    }
  };

  const renderWallet = (wallet: WalletView) => {
    clear(offersPane);
    offersPane.append(h("h3", {}, "Credential offers"));
    const offers = pendingOffers(wallet);
    if (!offers.length) offersPane.append(h("p", { class: "muted" }, "No pending offers."));
    for (const offer of offers) {
      const credentialId = String(offer.credential["id"] ?? "");
      offersPane.append(
        h(
          "div",
          { class: "card offer", "data-offer": offer.offer_id },
          h("p", {}, `${credentialId}`),
          h("p", { class: "muted" }, `from ${offer.from_did}`),
          h("button", {
            class: "accept",
            onclick: () => void respond(offer.offer_id, "accept"),
          }, "Accept"),
          h("button", {
            class: "reject",
            onclick: () => void respond(offer.offer_id, "reject"),
          }, "Reject")
        )
      );
    }

    clear(walletPane);
    walletPane.append(h("h3", {}, "Wallet credentials"));
    const ids = Object.keys(wallet.credentials).sort();
    if (!ids.length) walletPane.append(h("p", { class: "muted" }, "Wallet is empty."));
    const list = h("ul", { class: "wallet-list" });
    for (const id of ids) list.append(h("li", {}, id));
    walletPane.append(list);

    clear(inboxPane);
    inboxPane.append(h("h3", {}, "Messages"));
    const received = wallet.audit_log.filter((entry) => entry.event === "MessageReceived");
    if (!received.length) inboxPane.append(h("p", { class: "muted" }, "No messages."));
    for (const entry of received.slice(-10).reverse()) {
      inboxPane.append(h("p", {}, `${entry.timestamp} from ${entry.counterparty_did}`));
    }
  };

  const respond = async (offerId: string, decision: "accept" | "reject") => {
    try {
      const wallet = await api.respondToOffer(offerId, decision, passphrase);
      say(`Offer ${decision}ed: ${wallet.credential_id}`);
      renderWallet(wallet);
    } catch (error) {
      say((error as Error).message, true);
    }
  };

  const submit = async () => {
    try {
      const result = await api.submitRequest(
        documentInput.value.trim(),
        destinationInput.value.trim().toUpperCase(),
        templateInput.value.trim(),
        passphrase
      );
      say(`Submitted ${result.request.request_id}`);
      trackInput.value = documentInput.value.trim();
      track();
    } catch (error) {
      say((error as Error).message, true);
    }
  };

  const track = () => {
    statusPoller?.stop();
    const documentId = trackInput.value.trim();
    if (!documentId) return;
    statusPoller = startPolling(async (signal) => {
      const status = await api.status(documentId, undefined, signal);
      renderTimelines(status.requests);
    });
  };

  walletPoller = startPolling(async (signal) => {
    renderWallet(await api.walletSync(passphrase, signal));
  });

  clear(root).append(
    messageBar,
    h(
      "div",
      { class: "pane" },
      h("h3", {}, "Submit attestation request"),
      documentInput,
      destinationInput,
      templateInput,
      h("button", { class: "primary", onclick: () => void submit() }, "Submit")
    ),
    h(
      "div",
      { class: "pane" },
      h("h3", {}, "Track document"),
      trackInput,
      h("button", { onclick: track }, "Track")
    ),
    timelinePane,
    offersPane,
    walletPane,
    inboxPane
  );

  return {
    unmount() {
      statusPoller?.stop();
      walletPoller?.stop();
    },
  };
}
