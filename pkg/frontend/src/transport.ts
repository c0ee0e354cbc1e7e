/** Transport abstraction: the view state machines never build URLs or
 * dialogue content themselves, they only exchange JSON with the service. */

export interface Transport {
  request(method: "GET" | "POST", path: string, body?: unknown): Promise<unknown>;
}

export class HttpError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** fetch-based transport for the real service. */
export class HttpTransport implements Transport {
  constructor(private readonly baseUrl: string) {}

  async request(method: "GET" | "POST", path: string, body?: unknown): Promise<unknown> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw new HttpError(response.status, await response.text());
    }
    return response.json();
  }
}
