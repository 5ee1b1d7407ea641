/**
 * Bridge equivalence suite: with the table stub model, the bridge-generated
 * sequence must equal the engine's local beam-1 output frozen into each
 * fixture, and the bridge must never emit a token the sidecar masked out.
 */

import { mkdtempSync, readFileSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterEach, describe, expect, it } from "vitest";

import { Bridge, VocabMismatchError } from "../src/bridge.js";
import { SidecarClient } from "../src/client.js";
import { TableStubModel, ZeroStubModel, type LogitTables } from "../src/stub.js";
import { StdioTransport } from "../src/transport.js";
import { answerFromPath, decodeTokens, parseVocabText } from "../src/vocab.js";
import { runDemo } from "../src/demo.js";

const FIXTURE_DIR = fileURLToPath(new URL("./fixtures", import.meta.url));
const SIDECAR_CMD = process.env.KGDECODE_CMD ?? "kgdecode";

interface Fixture {
  name: string;
  vocab_text: string;
  vocab_size: number;
  question: string;
  topic_entities: string[];
  paths: string[];
  omega: number;
  space: "logit" | "probability";
  tables: LogitTables;
  expected_tokens: number[];
  expected_text: string;
  expected_answer: string;
}

function loadFixtures(): Fixture[] {
  return readdirSync(FIXTURE_DIR)
    .filter((name) => name.endsWith(".json"))
    .sort()
    .map((name) => JSON.parse(readFileSync(join(FIXTURE_DIR, name), "utf-8")) as Fixture);
}

function writeVocabFile(fixture: Fixture): string {
  const dir = mkdtempSync(join(tmpdir(), "bridge-test-"));
  const path = join(dir, "vocab.txt");
  writeFileSync(path, fixture.vocab_text, "utf-8");
  return path;
}

const fixtures = loadFixtures();
let openClients: SidecarClient[] = [];

function connect(vocabPath: string): SidecarClient {
  const transport = new StdioTransport(SIDECAR_CMD, [
    "sidecar", "--stdio", "--vocab", vocabPath,
  ]);
  const client = new SidecarClient(transport);
  openClients.push(client);
  return client;
}

afterEach(() => {
  for (const client of openClients) client.shutdown();
  openClients = [];
});

describe("bridge equivalence against the local engine", () => {
  it("loads all 20 fixtures", () => {
    expect(fixtures.length).toBe(20);
  });

  for (const fixture of fixtures) {
    it(`${fixture.name} reproduces local beam-1 (omega=${fixture.omega}, ${fixture.space})`, async () => {
      const client = connect(writeVocabFile(fixture));
      const model = new TableStubModel(fixture.vocab_size, fixture.tables);
      const bridge = new Bridge(client, model);
      const result = await bridge.generate({
        sessionId: fixture.name,
        question: fixture.question,
        topicEntities: fixture.topic_entities,
        omega: fixture.omega,
        space: fixture.space,
        paths: fixture.paths,
      });
      expect(result.finished).toBe(true);
      expect(result.tokens).toEqual(fixture.expected_tokens);
      expect(result.nullChoices).toBe(0);
      const vocab = parseVocabText(fixture.vocab_text);
      expect(decodeTokens(vocab, result.tokens)).toBe(fixture.expected_text);
      expect(answerFromPath(fixture.expected_text)).toBe(fixture.expected_answer);
    }, 30_000);
  }
});

describe("bridge configuration errors", () => {
  it("rejects a vocab size mismatch before generating", async () => {
    const fixture = fixtures[0]!;
    const client = connect(writeVocabFile(fixture));
    const model = new TableStubModel(fixture.vocab_size + 1, fixture.tables);
    const bridge = new Bridge(client, model);
    await expect(
      bridge.generate({
        sessionId: "mismatch",
        question: fixture.question,
        topicEntities: fixture.topic_entities,
        paths: fixture.paths,
      }),
    ).rejects.toBeInstanceOf(VocabMismatchError);
  }, 30_000);

  it("surfaces sidecar errors (empty paths)", async () => {
    const fixture = fixtures[0]!;
    const client = connect(writeVocabFile(fixture));
    const bridge = new Bridge(client, new ZeroStubModel(fixture.vocab_size));
    await expect(
      bridge.generate({
        sessionId: "empty",
        question: fixture.question,
        topicEntities: fixture.topic_entities,
        paths: [],
      }),
    ).rejects.toThrow(/empty-paths/);
  }, 30_000);
});

describe("demo command", () => {
  it("prints the single legal path with the stub model", async () => {
    const dir = mkdtempSync(join(tmpdir(), "bridge-demo-"));
    const triples = join(dir, "graph.tsv");
    writeFileSync(triples, "Akher Saa\tcirculated in\tEgypt\n", "utf-8");
    const lines: string[] = [];
    const original = console.log;
    console.log = (msg: string) => lines.push(String(msg));
    try {
      const code = await runDemo([
        "--triples", triples,
        "--question", "Where did Akher Saa circulate?",
        "--topic", "Akher Saa",
        "--cmd", SIDECAR_CMD,
      ]);
      expect(code).toBe(0);
    } finally {
      console.log = original;
    }
    const joined = lines.join("\n");
    expect(joined).toContain("Akher Saa → circulated in → Egypt");
    expect(joined).toContain("answer: Egypt");
  }, 30_000);

  it("fails with exit 2 on a missing triples file", async () => {
    const errors: string[] = [];
    const original = console.error;
    console.error = (msg: string) => errors.push(String(msg));
    try {
      const code = await runDemo([
        "--triples", "/no/such/file.tsv",
        "--question", "q",
        "--topic", "t",
      ]);
      expect(code).toBe(2);
    } finally {
      console.error = original;
    }
    expect(errors.join("\n")).toMatch(/cannot read triples file/);
  });
});
