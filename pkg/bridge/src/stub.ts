/**
 * Stub models: deterministic logits providers standing in for a real LLM.
 * A model serves one vector per (branch, last-token) pair; the bridge runs
 * the original ("main") and masked ("mask") prompt branches against it.
 */

export type Branch = "main" | "mask";

export interface ModelHandle {
  readonly vocabSize: number;
  logits(branch: Branch, lastToken: number): number[];
}

export type LogitTables = Record<Branch, Record<string, number[]>>;

/** Replays frozen per-(branch, last-token) logit vectors. */
export class TableStubModel implements ModelHandle {
  constructor(
    readonly vocabSize: number,
    private tables: LogitTables,
  ) {}

  logits(branch: Branch, lastToken: number): number[] {
    const vector = this.tables[branch][String(lastToken)];
    if (vector === undefined) {
      throw new Error(`stub table has no entry for branch=${branch} last=${lastToken}`);
    }
    if (vector.length !== this.vocabSize) {
      throw new Error(
        `stub table entry has length ${vector.length}, expected ${this.vocabSize}`,
      );
    }
    return vector;
  }
}

/** All-zero logits: the constraint alone drives generation. */
export class ZeroStubModel implements ModelHandle {
  constructor(readonly vocabSize: number) {}

  logits(): number[] {
    return new Array<number>(this.vocabSize).fill(0);
  }
}
