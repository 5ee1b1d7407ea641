/**
 * Vocabulary file helpers: the sidecar's vocabulary format is a JSON header
 * line ({"bos", "eos", "mask", "version"}) followed by one JSON-quoted piece
 * per line (line number = token id).
 */

export interface Vocab {
  pieces: string[];
  bosId: number;
  eosId: number;
  maskId: number;
}

export function parseVocabText(text: string): Vocab {
  const lines = text.split("\n").filter((line) => line.length > 0);
  if (lines.length < 2) {
    throw new Error("vocabulary text is empty");
  }
  const header = JSON.parse(lines[0]!) as { bos: number; eos: number; mask: number };
  const pieces = lines.slice(1).map((line) => JSON.parse(line) as string);
  return { pieces, bosId: header.bos, eosId: header.eos, maskId: header.mask };
}

export function decodeTokens(vocab: Vocab, tokens: number[]): string {
  return tokens.map((t) => vocab.pieces[t] ?? "").join("");
}

const WORD_RE = /\w+/g;

/**
 * Build vocabulary text covering the given labels: reserved pieces, then
 * every word and single character, sorted. Coverage (not piece parity with
 * any other builder) is all the sidecar needs, since the vocabulary file
 * written here is the one the sidecar loads.
 */
export function buildVocabText(texts: string[], extraPieces: string[] = []): string {
  const reserved = ["<bos>", "<eos>", "[MASK]"];
  const seen = new Set<string>(extraPieces.filter((p) => p.length > 0));
  for (const text of texts) {
    for (const ch of text) seen.add(ch);
    for (const word of text.match(WORD_RE) ?? []) seen.add(word);
  }
  for (const piece of reserved) seen.delete(piece);
  const pieces = reserved.concat([...seen].sort());
  const header = JSON.stringify({ bos: 0, eos: 1, mask: 2, version: 1 });
  return [header, ...pieces.map((p) => JSON.stringify(p))].join("\n") + "\n";
}

export const PATH_DELIMITER = " → ";

export function answerFromPath(pathText: string): string {
  const parts = pathText.split(PATH_DELIMITER);
  return parts[parts.length - 1] ?? pathText;
}
