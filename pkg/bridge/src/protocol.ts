/**
 * Wire types for the sidecar protocol (newline-delimited JSON, version 1).
 * See docs/protocol.md in the engine repository for the full contract.
 */

export type Space = "logit" | "probability";

export interface InitParams {
  sessionId: string;
  question: string;
  topicEntities: string[];
  omega?: number;
  space?: Space;
  paths?: string[];
  kgRef?: string;
  maxHops?: number;
}

export interface ErrorBody {
  code: string;
  message: string;
}

export interface ResponseFrame {
  ok: boolean;
  op: string | null;
  seq: number | null;
  session_id: string | null;
  error?: ErrorBody;
  [key: string]: unknown;
}

export interface InitResponse extends ResponseFrame {
  vocab_size: number;
  num_paths: number;
  top1_path: string;
}

export interface StepResponse extends ResponseFrame {
  /** Strengthened logits; null where the automaton forbids the token. */
  logits: Array<number | null>;
  allowed_count: number;
  accepting: boolean;
}

export interface AdvanceResponse extends ResponseFrame {
  accepting: boolean;
  finished: boolean;
}

/** An `ok: false` frame surfaced as an exception. */
export class SidecarRemoteError extends Error {
  readonly code: string;

  constructor(body: ErrorBody | undefined) {
    super(body ? `${body.code}: ${body.message}` : "unknown sidecar error");
    this.code = body?.code ?? "unknown";
  }
}
