/** Console shell: login, role routing, view lifecycle.
 *
 * Role isolation is mirrored client-side (a holder session never renders
 * attester actions) and enforced server-side by the endpoint role matrix.
 */

import { ApiClient } from "./api.js";
import { clear, h } from "./dom.js";
import { mountAttester } from "./views/attester.js";
import { mountHolder } from "./views/holder.js";
import { mountVerifier } from "./views/verifier.js";

export type PageName = "holder" | "attester" | "verifier";

export function pagesForRole(role: string | null): PageName[] {
  switch (role) {
    case "Holder":
      return ["holder"];
    case "AttestingEntity":
    case "CredentialIssuer":
      return ["attester", "verifier"];
    case "Verifier":
      return ["verifier"];
    default:
      return ["verifier"]; // chain lookup is public; everything else needs login
  }
}

interface Mounted {
  unmount(): void;
}

export function startApp(root: HTMLElement, api: ApiClient = new ApiClient()): void {
  let passphrase = "";
  let current: Mounted | null = null;

  const contentEl = h("div", { id: "content" });
  const navEl = h("nav", {});
  const sessionEl = h("span", { class: "session muted" });

  const show = (page: PageName) => {
    current?.unmount();
    if (page === "holder") current = mountHolder(contentEl, api, passphrase);
    else if (page === "attester") current = mountAttester(contentEl, api, passphrase);
    else current = mountVerifier(contentEl, api);
  };

  const renderNav = () => {
    clear(navEl);
    const role = api.session?.role ?? null;
    for (const page of pagesForRole(role)) {
      navEl.append(h("button", { class: "tab", onclick: () => show(page) }, page));
    }
    clear(sessionEl);
    if (api.session) {
      sessionEl.append(
        `${api.session.role} ${api.session.did} `,
        h("button", {
          onclick: () => {
            api.logout();
            passphrase = "";
            renderLogin();
          },
        }, "Log out")
      );
    }
  };

  const renderLogin = () => {
    current?.unmount();
    current = null;
    renderNav();
    const didInput = h("input", { placeholder: "did:attest:..." }) as HTMLInputElement;
    const passInput = h("input", { type: "password", placeholder: "wallet passphrase" }) as HTMLInputElement;
    const errorEl = h("p", { class: "notice error" });
    clear(contentEl).append(
      h(
        "div",
        { class: "pane login" },
        h("h3", {}, "Sign in with your DID"),
        didInput,
        passInput,
        h("button", {
          class: "primary",
          onclick: () =>
            void api
              .login(didInput.value.trim(), passInput.value)
              .then(() => {
                passphrase = passInput.value;
                renderNav();
                show(pagesForRole(api.session!.role)[0]);
              })
              .catch((error) => {
                errorEl.textContent = (error as Error).message;
              }),
        }, "Sign in"),
        errorEl,
        h("p", { class: "muted" }, "Verifiers can look up chains without signing in."),
        h("button", { onclick: () => show("verifier") }, "Public chain lookup")
      )
    );
  };

  clear(root).append(h("header", {}, h("h1", {}, "Attestation console"), navEl, sessionEl), contentEl);
  renderLogin();
}

declare global {
  interface Window {
    __attestchainStarted?: boolean;
  }
}

if (typeof document !== "undefined" && document.getElementById("app") && !window.__attestchainStarted) {
  window.__attestchainStarted = true;
  startApp(document.getElementById("app") as HTMLElement);
}
