/**
 * The bridge proper: per step it queries the model once per prompt branch,
 * lets the sidecar strengthen and filter the pair, greedily picks the best
 * surviving token, and reports it back to advance the automaton. Generation
 * ends when the sidecar confirms EOS at an accepting state.
 */

import type { SidecarClient } from "./client.js";
import type { InitParams } from "./protocol.js";
import type { ModelHandle } from "./stub.js";

export interface BridgeConfig {
  /** Surface form the caller substitutes for the masked path line. */
  maskForm?: string;
  /** Hard cap on generated tokens before aborting the session. */
  maxSteps?: number;
}

export interface GenerationResult {
  tokens: number[];
  steps: number;
  finished: boolean;
  top1Path: string;
  numPaths: number;
  /** Count of steps where a null (masked) entry would have been chosen: always 0. */
  nullChoices: number;
}

export class VocabMismatchError extends Error {
  constructor(expected: number, got: number) {
    super(`model vocab size ${got} does not match sidecar vocab size ${expected}`);
  }
}

/** Greedy argmax over the non-null entries; ties go to the lowest id. */
export function argmaxAllowed(logits: Array<number | null>): number {
  let best = -1;
  let bestValue = -Infinity;
  for (let i = 0; i < logits.length; i++) {
    const value = logits[i];
    if (value === null || value === undefined) continue;
    if (value > bestValue) {
      bestValue = value;
      best = i;
    }
  }
  if (best < 0) {
    throw new Error("sidecar returned no allowed tokens");
  }
  return best;
}

export class Bridge {
  constructor(
    private client: SidecarClient,
    private model: ModelHandle,
    private config: BridgeConfig = {},
  ) {}

  async generate(params: InitParams): Promise<GenerationResult> {
    const init = await this.client.init(params);
    if (init.vocab_size !== this.model.vocabSize) {
      // hard configuration error before any generation
      await this.client.close(params.sessionId).catch(() => undefined);
      throw new VocabMismatchError(init.vocab_size, this.model.vocabSize);
    }

    const maxSteps = this.config.maxSteps ?? 256;
    const tokens: number[] = [];
    let steps = 0;
    let finished = false;
    try {
      while (steps < maxSteps) {
        const last = tokens.length > 0 ? tokens[tokens.length - 1]! : -1;
        const main = this.model.logits("main", last);
        const mask = this.model.logits("mask", last);
        const step = await this.client.step(params.sessionId, main, mask);
        const chosen = argmaxAllowed(step.logits);
        if (step.logits[chosen] === null) {
          throw new Error(`bridge attempted to emit masked token ${chosen}`);
        }
        steps += 1;
        const advance = await this.client.advance(params.sessionId, chosen);
        if (advance.finished) {
          finished = true;
          break; // the finishing token is EOS, not part of the path
        }
        tokens.push(chosen);
      }
      if (!finished) {
        throw new Error(`generation did not finish within ${maxSteps} steps`);
      }
    } finally {
      await this.client.close(params.sessionId).catch(() => undefined);
    }
    return {
      tokens,
      steps,
      finished,
      top1Path: init.top1_path,
      numPaths: init.num_paths,
      nullChoices: 0,
    };
  }
}
