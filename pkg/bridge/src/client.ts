/**
 * Request/response client over an NDJSON transport. Requests are matched to
 * responses by the echoed `seq`; the sidecar guarantees per-session ordering.
 */

import type {
  AdvanceResponse,
  InitParams,
  InitResponse,
  ResponseFrame,
  StepResponse,
} from "./protocol.js";
import { SidecarRemoteError } from "./protocol.js";
import type { Transport } from "./transport.js";

interface Pending {
  resolve: (frame: ResponseFrame) => void;
  reject: (err: Error) => void;
}

export class SidecarClient {
  private seq = 0;
  private pending = new Map<number, Pending>();
  private closedReason: string | null = null;

  constructor(private transport: Transport) {
    transport.onLine((line) => this.dispatch(line));
    transport.onClose((reason) => {
      this.closedReason = reason;
      for (const [, waiter] of this.pending) {
        waiter.reject(new Error(`sidecar connection lost: ${reason}`));
      }
      this.pending.clear();
    });
  }

  private dispatch(line: string): void {
    let frame: ResponseFrame;
    try {
      frame = JSON.parse(line) as ResponseFrame;
    } catch {
      return; // not a frame; ignore
    }
    const seq = typeof frame.seq === "number" ? frame.seq : null;
    if (seq !== null && this.pending.has(seq)) {
      const waiter = this.pending.get(seq)!;
      this.pending.delete(seq);
      waiter.resolve(frame);
    }
  }

  request(body: Record<string, unknown>): Promise<ResponseFrame> {
    if (this.closedReason !== null) {
      return Promise.reject(new Error(`sidecar connection lost: ${this.closedReason}`));
    }
    const seq = ++this.seq;
    const frame = { ...body, seq };
    return new Promise((resolve, reject) => {
      this.pending.set(seq, { resolve, reject });
      this.transport.send(JSON.stringify(frame));
    });
  }

  private async call(body: Record<string, unknown>): Promise<ResponseFrame> {
    const frame = await this.request(body);
    if (!frame.ok) {
      throw new SidecarRemoteError(frame.error);
    }
    return frame;
  }

  async init(params: InitParams): Promise<InitResponse> {
    const body: Record<string, unknown> = {
      op: "init",
      session_id: params.sessionId,
      question: params.question,
      topic_entities: params.topicEntities,
    };
    if (params.omega !== undefined) body.omega = params.omega;
    if (params.space !== undefined) body.space = params.space;
    if (params.paths !== undefined) body.paths = params.paths;
    if (params.kgRef !== undefined) body.kg_ref = params.kgRef;
    if (params.maxHops !== undefined) body.max_hops = params.maxHops;
    return (await this.call(body)) as InitResponse;
  }

  async step(
    sessionId: string,
    logitsMain: number[],
    logitsMask: number[],
  ): Promise<StepResponse> {
    return (await this.call({
      op: "step",
      session_id: sessionId,
      logits_main: logitsMain,
      logits_mask: logitsMask,
    })) as StepResponse;
  }

  async advance(sessionId: string, tokenId: number): Promise<AdvanceResponse> {
    return (await this.call({
      op: "advance",
      session_id: sessionId,
      token_id: tokenId,
    })) as AdvanceResponse;
  }

  async close(sessionId: string): Promise<void> {
    await this.call({ op: "close", session_id: sessionId });
  }

  shutdown(): void {
    this.transport.close();
  }
}
