/** Decrypt page: pick a stored file and a set of attributes, ask the
 * service to decrypt, and surface the result. Whether access is allowed
 * is decided entirely by the service; this page only renders the status
 * it got back. */

import { ApiClient, ApiError } from "./api.js";

export interface DecryptPageOptions {
  /** Receives the decrypted bytes after a download link is clicked.
   * The default hands the browser an object URL to save. */
  onDownloaded?: (filename: string, data: ArrayBuffer) => void;
}

function saveViaObjectUrl(doc: Document, filename: string, data: ArrayBuffer): void {
  const url = URL.createObjectURL(new Blob([data]));
  const anchor = doc.createElement("a");
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export function renderDecryptPage(
  root: HTMLElement,
  api: ApiClient,
  options: DecryptPageOptions = {},
): void {
  const doc = root.ownerDocument;
  root.innerHTML = `
    <h2>Decrypt a file</h2>
    <form class="decrypt-form">
      <fieldset class="file-list"><legend>Stored files</legend></fieldset>
      <fieldset class="attribute-list"><legend>Your attributes</legend></fieldset>
      <button type="submit">Decrypt</button>
    </form>
    <p class="notice" role="alert" hidden></p>
    <p class="result"></p>
  `;
  const form = root.querySelector<HTMLFormElement>(".decrypt-form")!;
  const fileList = root.querySelector<HTMLFieldSetElement>(".file-list")!;
  const attributeList = root.querySelector<HTMLFieldSetElement>(".attribute-list")!;
  const button = form.querySelector<HTMLButtonElement>("button")!;
  const notice = root.querySelector<HTMLParagraphElement>(".notice")!;
  const result = root.querySelector<HTMLParagraphElement>(".result")!;

  const showNotice = (text: string) => {
    notice.hidden = false;
    notice.textContent = text;
  };

  Promise.all([api.listFiles(), api.attributes()])
    .then(([files, vocabulary]) => {
      for (const entry of files) {
        const label = doc.createElement("label");
        const radio = doc.createElement("input");
        radio.type = "radio";
        radio.name = "file";
        radio.value = entry.file_id;
        label.appendChild(radio);
        label.appendChild(
          doc.createTextNode(` ${entry.filename} (${entry.size} bytes)`),
        );
        label.title = entry.created;
        fileList.appendChild(label);
      }
      // checkboxes generated from the vocabulary are the only way to
      // submit attributes, so non-members cannot be submitted
      for (const attribute of vocabulary) {
        const label = doc.createElement("label");
        const box = doc.createElement("input");
        box.type = "checkbox";
        box.name = "attribute";
        box.value = attribute;
        label.appendChild(box);
        label.appendChild(doc.createTextNode(` ${attribute}`));
        attributeList.appendChild(label);
      }
    })
    .catch((error: unknown) => {
      showNotice(
        error instanceof ApiError && error.status === 503
          ? "system not provisioned"
          : "could not load files or attributes",
      );
    });

  const deliver = options.onDownloaded
    ?? ((filename: string, data: ArrayBuffer) => saveViaObjectUrl(doc, filename, data));

  const renderLink = (token: string, filename: string) => {
    result.innerHTML = "";
    const link = doc.createElement("a");
    link.href = `#download-${token}`;
    link.className = "download-link";
    link.textContent = `Download ${filename}`;
    link.addEventListener("click", (event) => {
      event.preventDefault();
      api
        .download(token)
        .then(({ filename: reported, data }) => deliver(reported, data))
        .catch((error: unknown) => {
          showNotice(
            error instanceof ApiError && error.status === 410
              ? "link expired"
              : "download failed",
          );
        });
    });
    result.appendChild(link);
  };

  let pending = false;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (pending) return;
    const chosen = form.querySelector<HTMLInputElement>("input[name=file]:checked");
    const attributes = [
      ...form.querySelectorAll<HTMLInputElement>("input[name=attribute]:checked"),
    ].map((box) => box.value);
    if (!chosen || attributes.length === 0) {
      showNotice("pick a file and at least one attribute");
      return;
    }
    const filename =
      chosen.parentElement?.textContent?.trim().replace(/ \(\d+ bytes\)$/, "")
      ?? "file";
    notice.hidden = true;
    result.innerHTML = "";
    pending = true;
    button.disabled = true;
    api
      .requestDecrypt(chosen.value, attributes)
      .then((token) => renderLink(token, filename))
      .catch((error: unknown) => {
        if (error instanceof ApiError && error.status === 403) {
          showNotice("access denied: your attributes do not satisfy the policy");
        } else if (error instanceof ApiError && error.status === 503) {
          showNotice("system not provisioned");
        } else {
          showNotice("decryption request failed");
        }
      })
      .finally(() => {
        pending = false;
        button.disabled = false;
      });
  });
}
