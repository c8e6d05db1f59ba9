/** Typed client for the engine HTTP API. Every number the console shows
 * comes from one of these payloads; the client adds no derived metrics. */

export interface ServiceSummary {
  desired_replicas: number;
  available_replicas: number;
  drifted: boolean;
  offered_rps: number;
  served_rps: number;
  p95_latency_ms: number;
  error_rate: number;
  cpu_vcpu: number;
  utilization: number;
  mean_capacity_multiplier: number;
}

export interface StateSummary {
  mode: string;
  clock_s: number;
  services: Record<string, ServiceSummary>;
  active_faults: number;
}

export interface MetricSeries {
  metric: string;
  series: Record<string, [number, number][]>;
}

export interface PendingApproval {
  action_id: string;
  service: string;
  kind: string;
  risk: string;
  created_ts: number;
  deadline_ts: number;
}

export interface AuditEntry {
  ts: number;
  seq: number;
  actor: string;
  action: string;
  verdict: string;
  rules: string[];
}

export interface IncidentRow {
  id: string;
  service: string;
  fault_kind: string;
  t_injected_s: number;
  t_detected_s: number | null;
  t_recovered_s: number | null;
}

export interface RunReport {
  clock_s: number;
  incidents_total: number;
  incidents_resolved: number;
  mean_mttr_s: number | null;
  violations: number;
  actions_executed: number;
  incidents: IncidentRow[];
}

export interface FaultForm {
  kind: string;
  service: string;
  magnitude: number;
  duration_s?: number | null;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  version(): Promise<{ version: string; api: number }> {
    return this.request("/version");
  }

  state(): Promise<StateSummary> {
    return this.request("/state");
  }

  metrics(metric: string, windowS: number, service = ""): Promise<MetricSeries> {
    const params = new URLSearchParams({
      metric,
      window: String(windowS),
    });
    if (service) params.set("service", service);
    return this.request(`/metrics?${params.toString()}`);
  }

  approvals(): Promise<PendingApproval[]> {
    return this.request("/approvals");
  }

  decide(actionId: string, decision: "approve" | "deny"): Promise<unknown> {
    return this.request(`/approvals/${encodeURIComponent(actionId)}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ decision }),
    });
  }

  injectFault(fault: FaultForm): Promise<unknown> {
    return this.request("/faults", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(fault),
    });
  }

  audit(limit = 200): Promise<AuditEntry[]> {
    return this.request(`/audit?limit=${limit}`);
  }

  report(): Promise<RunReport> {
    return this.request("/report");
  }
}
