import { EditOp } from "./editops.js";

export interface SessionInfo {
  session_id: string;
  preview_png_b64: string;
  mask_png_b64: string;
}

export interface RenderResponse {
  drawing_png_b64: string;
  mask_png_b64: string;
  photo_png_b64?: string;
}

export interface CheckpointEntry {
  ckpt_id: string;
  style_name: string;
  resolution: number | null;
}

export interface EditLogExport {
  seed: number;
  ckpt_id: string;
  edits: EditOp[];
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string,
              readonly bounds?: unknown) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const detail = (body as { detail?: string }).detail ?? resp.statusText;
    throw new ApiError(resp.status, String(detail),
                       (body as { bounds?: unknown }).bounds);
  }
  return body as T;
}

export class StudioClient {
  constructor(readonly baseUrl: string = "") {}

  listCheckpoints(): Promise<CheckpointEntry[]> {
    return request(`${this.baseUrl}/api/checkpoints`);
  }

  createSession(ckptId: string, seed: number): Promise<SessionInfo> {
    return request(`${this.baseUrl}/api/session`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ ckpt_id: ckptId, seed }),
    });
  }

  render(sessionId: string, yaw: number, pitch: number): Promise<RenderResponse> {
    const params = new URLSearchParams({ yaw: String(yaw), pitch: String(pitch) });
    return request(`${this.baseUrl}/api/session/${sessionId}/render?${params}`);
  }

  postEdits(sessionId: string, edits: EditOp[]): Promise<RenderResponse> {
    return request(`${this.baseUrl}/api/session/${sessionId}/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ edits }),
    });
  }

  clearEdits(sessionId: string): Promise<RenderResponse> {
    return request(`${this.baseUrl}/api/session/${sessionId}/edit`,
                   { method: "DELETE" });
  }

  exportEdits(sessionId: string): Promise<EditLogExport> {
    return request(`${this.baseUrl}/api/session/${sessionId}/edits`);
  }
}
