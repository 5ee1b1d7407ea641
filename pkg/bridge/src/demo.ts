/**
 * Smoke demo: ingest a triples file, open a sidecar session over its graph,
 * generate one constrained path with the zero-logits stub model, and print
 * the path and its answer entity.
 *
 * Usage:
 *   node dist/demo.js --triples graph.tsv --question "..." --topic "Entity"
 *        [--omega 2.0] [--cmd kgdecode]
 */

import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { isAbsolute, join, resolve } from "node:path";

import { Bridge } from "./bridge.js";
import { SidecarClient } from "./client.js";
import { ZeroStubModel } from "./stub.js";
import { StdioTransport } from "./transport.js";
import { answerFromPath, buildVocabText, decodeTokens, parseVocabText } from "./vocab.js";

interface DemoArgs {
  triples: string;
  question: string;
  topic: string;
  omega: number;
  cmd: string;
}

function parseArgs(argv: string[]): DemoArgs {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key?.startsWith("--") || value === undefined) {
      throw new Error(`expected --flag value pairs, got ${argv.join(" ")}`);
    }
    args[key.slice(2)] = value;
  }
  for (const required of ["triples", "question", "topic"]) {
    if (!(required in args)) throw new Error(`missing required flag --${required}`);
  }
  return {
    triples: args.triples!,
    question: args.question!,
    topic: args.topic!,
    omega: args.omega !== undefined ? Number(args.omega) : 2.0,
    cmd: args.cmd ?? process.env.KGDECODE_CMD ?? "kgdecode",
  };
}

export async function runDemo(argv: string[]): Promise<number> {
  let args: DemoArgs;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }

  let triplesText: string;
  try {
    triplesText = readFileSync(args.triples, "utf-8");
  } catch (err) {
    console.error(`error: cannot read triples file: ${(err as Error).message}`);
    return 2;
  }

  const labels: string[] = [];
  for (const line of triplesText.split("\n")) {
    if (!line.trim() || line.trimStart().startsWith("#")) continue;
    labels.push(...line.split("\t"));
  }
  const vocabDir = mkdtempSync(join(tmpdir(), "kgdecode-bridge-"));
  const vocabPath = join(vocabDir, "vocab.txt");
  const vocabText = buildVocabText(labels, [" → "]);
  writeFileSync(vocabPath, vocabText, "utf-8");
  const vocab = parseVocabText(vocabText);

  const transport = new StdioTransport(args.cmd, [
    "sidecar", "--stdio", "--vocab", vocabPath,
  ]);
  const client = new SidecarClient(transport);
  const bridge = new Bridge(client, new ZeroStubModel(vocab.pieces.length));
  try {
    const result = await bridge.generate({
      sessionId: "demo",
      question: args.question,
      topicEntities: [args.topic],
      omega: args.omega,
      kgRef: isAbsolute(args.triples) ? args.triples : resolve(args.triples),
    });
    const pathText = decodeTokens(vocab, result.tokens);
    console.log(`top-1 scored path: ${result.top1Path}`);
    console.log(`generated path (${result.numPaths} legal): ${pathText}`);
    console.log(`answer: ${answerFromPath(pathText)}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  } finally {
    client.shutdown();
  }
}

const isMain = process.argv[1]?.endsWith("demo.js") || process.argv[1]?.endsWith("demo.ts");
if (isMain) {
  runDemo(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
