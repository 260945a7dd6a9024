// Typed client for the registry HTTP API. The server is the only source of
// truth; every response carries a monotone server_event_id high-water mark.

export type Role = "owner" | "operator";

export interface LoginResponse {
  token: string;
  role: Role;
  login_id: string;
  server_event_id: number;
}

export interface RegistryEvent {
  event_id: number;
  at: number;
  kind: string;
  payload: Record<string, any>;
}

export interface EventsResponse {
  server_event_id: number;
  events: RegistryEvent[];
}

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class RegistryClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
    private token: string | null = null,
  ) {}

  setToken(token: string | null) {
    this.token = token;
  }

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const res = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await res.json();
    if (res.status >= 400) {
      throw new ApiError(data.error ?? "Unknown", data.message ?? "", res.status);
    }
    return data;
  }

  async login(loginId: string, password: string): Promise<LoginResponse> {
    const data = await this.request("POST", "/login", {
      login_id: loginId,
      password,
    });
    this.token = data.token;
    return data;
  }

  createUser(login: string, password: string, role: Role) {
    return this.request("POST", "/users", { login, password, role });
  }

  registerTag(tagId: string) {
    return this.request("POST", "/tags", { tag_id: tagId });
  }

  reportStolen(tagId: string) {
    return this.request("POST", `/reports/${tagId}`);
  }

  clearReport(tagId: string) {
    return this.request("DELETE", `/reports/${tagId}`);
  }

  releaseGate(checkpostId: string) {
    return this.request("POST", `/release/${checkpostId}`);
  }

  tagInfo(tagId: string) {
    return this.request("GET", `/tags/${tagId}`);
  }

  eventsSince(since: number): Promise<EventsResponse> {
    return this.request("GET", `/events?since=${since}`);
  }
}
