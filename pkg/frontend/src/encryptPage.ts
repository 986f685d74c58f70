/** Encrypt page: upload a file, the service stores it encrypted under the
 * provisioned policy, and the page lists what the service reported back. */

import { ApiClient, ApiError } from "./api.js";

function messageFor(error: unknown): string {
  if (error instanceof ApiError) {
    if (error.status === 503) return "system not provisioned";
    if (error.status === 413) return "file exceeds the upload size limit";
    return error.message;
  }
  return "upload failed";
}

export function renderEncryptPage(root: HTMLElement, api: ApiClient): void {
  const doc = root.ownerDocument;
  root.innerHTML = `
    <h2>Encrypt a file</h2>
    <form class="upload-form">
      <input type="file" name="file" required>
      <button type="submit">Encrypt and store</button>
    </form>
    <p class="banner" role="alert" hidden></p>
    <ul class="uploads"></ul>
  `;
  const form = root.querySelector<HTMLFormElement>(".upload-form")!;
  const input = form.querySelector<HTMLInputElement>("input[type=file]")!;
  const button = form.querySelector<HTMLButtonElement>("button")!;
  const banner = root.querySelector<HTMLParagraphElement>(".banner")!;
  const uploads = root.querySelector<HTMLUListElement>(".uploads")!;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const file = input.files?.[0];
    if (!file) {
      banner.hidden = false;
      banner.textContent = "choose a file first";
      return;
    }
    banner.hidden = true;
    button.disabled = true;
    api
      .uploadFile(file)
      .then((entry) => {
        const item = doc.createElement("li");
        item.textContent = `${entry.filename} (${entry.size} bytes)`;
        item.dataset.fileId = entry.file_id;
        uploads.appendChild(item);
      })
      .catch((error: unknown) => {
        banner.hidden = false;
        banner.textContent = messageFor(error);
      })
      .finally(() => {
        button.disabled = false;
      });
  });
}
