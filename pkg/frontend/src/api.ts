/** Typed client for the file encryption service HTTP API. */

export interface UploadResult {
  file_id: string;
  filename: string;
  size: number;
}

export interface StoredEntry extends UploadResult {
  /** ISO 8601 timestamp assigned by the service. */
  created: string;
}

/** Anything with a name and readable bytes; browser File satisfies this. */
export interface UploadSource {
  name: string;
  arrayBuffer(): Promise<ArrayBuffer>;
}

/** HTTP failure carrying the status code the page logic branches on. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the status line
  }
  return `request failed with status ${response.status}`;
}

function encodeMultipart(
  boundary: string,
  filename: string,
  data: Uint8Array,
): Uint8Array<ArrayBuffer> {
  // assembled by hand so uploads behave identically in every runtime
  // that provides binary fetch bodies, browser or not
  const safeName = filename.replace(/"/g, "_");
  const head =
    `--${boundary}\r\n` +
    `Content-Disposition: form-data; name="file"; filename="${safeName}"\r\n` +
    `Content-Type: application/octet-stream\r\n\r\n`;
  const tail = `\r\n--${boundary}--\r\n`;
  const encoder = new TextEncoder();
  const headBytes = encoder.encode(head);
  const tailBytes = encoder.encode(tail);
  const body = new Uint8Array(headBytes.length + data.length + tailBytes.length);
  body.set(headBytes, 0);
  body.set(data, headBytes.length);
  body.set(tailBytes, headBytes.length + data.length);
  return body;
}

function parseAttachmentName(disposition: string | null): string {
  const match = /filename="([^"]*)"/.exec(disposition ?? "");
  return match?.[1] || "download";
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async checked(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  async uploadFile(file: UploadSource): Promise<UploadResult> {
    const data = new Uint8Array(await file.arrayBuffer());
    const boundary = `cpsx-${Date.now().toString(16)}-${Math.random().toString(16).slice(2)}`;
    const response = await this.checked("/encrypt-sgx", {
      method: "POST",
      headers: { "Content-Type": `multipart/form-data; boundary=${boundary}` },
      body: encodeMultipart(boundary, file.name, data),
    });
    return response.json();
  }

  async listFiles(): Promise<StoredEntry[]> {
    const response = await this.checked("/files");
    return response.json();
  }

  async attributes(): Promise<string[]> {
    const response = await this.checked("/attributes");
    return response.json();
  }

  /** Ask the service to decrypt; resolves to a single-use download token. */
  async requestDecrypt(fileId: string, attributes: string[]): Promise<string> {
    const response = await this.checked("/decrypt-sgx", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ file_id: fileId, attributes }),
    });
    const body = await response.json();
    return body.download_token;
  }

  async download(token: string): Promise<{ filename: string; data: ArrayBuffer }> {
    const response = await this.checked(`/download/${token}`);
    return {
      filename: parseAttachmentName(response.headers.get("content-disposition")),
      data: await response.arrayBuffer(),
    };
  }
}
