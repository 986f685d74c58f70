/** Shared test utilities: polling waits and fake upload sources. */

import type { UploadSource } from "../src/api.js";

export async function waitFor(
  condition: () => boolean,
  timeoutMs = 5000,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!condition()) {
    if (Date.now() > deadline) {
      throw new Error("condition not met in time");
    }
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

export function fakeFile(name: string, data: Uint8Array): UploadSource {
  return {
    name,
    arrayBuffer: async () =>
      data.buffer.slice(data.byteOffset, data.byteOffset + data.byteLength),
  };
}

/** Put a file into a file input despite the read-only files property. */
export function setInputFiles(input: HTMLInputElement, file: UploadSource): void {
  Object.defineProperty(input, "files", { value: [file], configurable: true });
}

export function submit(form: HTMLFormElement): void {
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}
