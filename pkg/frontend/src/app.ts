/** Two-route single-page app: #/encrypt (default) and #/decrypt. */

import { ApiClient } from "./api.js";
import { renderDecryptPage } from "./decryptPage.js";
import { renderEncryptPage } from "./encryptPage.js";

export function mountApp(root: HTMLElement, api: ApiClient): void {
  const doc = root.ownerDocument;
  root.innerHTML = `
    <h1>cpsx file encryption</h1>
    <nav>
      <a href="#/encrypt">Encrypt</a>
      <a href="#/decrypt">Decrypt</a>
    </nav>
    <main class="view"></main>
  `;
  const view = root.querySelector<HTMLElement>(".view")!;
  const win = doc.defaultView!;

  const route = () => {
    if (win.location.hash === "#/decrypt") {
      renderDecryptPage(view, api);
    } else {
      renderEncryptPage(view, api);
    }
  };
  win.addEventListener("hashchange", route);
  route();
}
