// Typed client for the listening-test HTTP API.

export type TrialKind = "AB" | "ABX";
export type Choice = "A" | "B" | "NP";

export interface TestInfo {
  test_id: string;
  kind: TrialKind;
  n_trials: number;
}

export interface ServedTrial {
  done: false;
  trial_id: string;
  kind: TrialKind;
  stimulus_a: string;
  stimulus_b: string;
  reference_x: string | null;
  prompt: string;
  index: number;
  total: number;
}

export interface DoneMarker {
  done: true;
}

export type NextTrialResponse = ServedTrial | DoneMarker;

export interface ResultsResponse {
  test_id: string;
  n_responses: number;
  counts: Record<string, number>;
  percentages: Record<string, number>;
}

export type SubmitOutcome = "accepted" | "conflict";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function parseError(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return response.statusText;
  }
}

export interface ListeningApi {
  getTest(testId: string): Promise<TestInfo>;
  nextTrial(testId: string, listener: string): Promise<NextTrialResponse>;
  submitResponse(
    testId: string,
    body: {
      trial_id: string;
      listener_id: string;
      choice: Choice;
      replay_count: number;
    },
  ): Promise<SubmitOutcome>;
  results(testId: string): Promise<ResultsResponse>;
  audioUrl(audioId: string): string;
}

export class ApiClient implements ListeningApi {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ApiError(response.status, await parseError(response));
    }
    return (await response.json()) as T;
  }

  getTest(testId: string): Promise<TestInfo> {
    return this.get<TestInfo>(`/tests/${encodeURIComponent(testId)}`);
  }

  nextTrial(testId: string, listener: string): Promise<NextTrialResponse> {
    const query = new URLSearchParams({ listener });
    return this.get<NextTrialResponse>(
      `/tests/${encodeURIComponent(testId)}/next?${query}`,
    );
  }

  async submitResponse(
    testId: string,
    body: {
      trial_id: string;
      listener_id: string;
      choice: Choice;
      replay_count: number;
    },
  ): Promise<SubmitOutcome> {
    const response = await this.fetchFn(
      `${this.baseUrl}/tests/${encodeURIComponent(testId)}/responses`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    if (response.status === 409) return "conflict";
    if (!response.ok) {
      throw new ApiError(response.status, await parseError(response));
    }
    return "accepted";
  }

  results(testId: string): Promise<ResultsResponse> {
    return this.get<ResultsResponse>(
      `/tests/${encodeURIComponent(testId)}/results`,
    );
  }

  audioUrl(audioId: string): string {
    return `${this.baseUrl}/audio/${encodeURIComponent(audioId)}`;
  }
}
