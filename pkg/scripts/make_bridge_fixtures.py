#!/usr/bin/env python3
"""Generate the runtime-bridge equivalence fixtures under bridge/test/fixtures/.

Each fixture freezes: a path set, a vocabulary (covering only the paths; the
sidecar never sees prompts), per-branch logits tables keyed by last token,
and the greedy (beam-1) token sequence the local engine decodes with those
tables. The bridge must reproduce that sequence exactly through a live
sidecar process.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from kgdecode import (  # noqa: E402
    DecodeConfig,
    PipelineConfig,
    PromptPair,
    ReferenceTokenizer,
    beam_decode,
    build_vocabulary,
    compile_paths,
    extract_paths,
    textualize,
)
from kgdecode.synth import SynthConfig, generate_suite  # noqa: E402
from kgdecode.tokenizer import dump_vocabulary  # noqa: E402

OMEGAS = (2.0, 1.0, 3.0, 0.5, -1.0)
SPACES = ("logit", "logit", "logit", "probability", "logit")


class RecordingTableLm:
    """Bigram table LM: logits depend only on (branch, last token); every
    vector served is recorded so the TypeScript stub can replay it."""

    def __init__(self, vocab_size: int, seed: int, main_ids: tuple[int, ...]):
        self.vocab_size = vocab_size
        self.seed = seed
        self.main_ids = main_ids
        self.tables: dict[str, dict[str, list[float]]] = {"main": {}, "mask": {}}

    def logits(self, prompt_ids, generated_ids):
        branch = "main" if tuple(prompt_ids) == self.main_ids else "mask"
        last = generated_ids[-1] if generated_ids else -1
        key = str(last)
        cached = self.tables[branch].get(key)
        if cached is None:
            rng = np.random.default_rng((self.seed, 0 if branch == "main" else 1, last + 1))
            cached = [float(x) for x in rng.normal(0.0, 2.0, self.vocab_size)]
            self.tables[branch][key] = cached
        return np.asarray(cached, dtype=np.float64)


def main() -> None:
    out_dir = REPO / "bridge" / "test" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    for old in out_dir.glob("fixture_*.json"):
        old.unlink()

    for index in range(20):
        suite = generate_suite(SynthConfig(num_questions=1, seed=1000 + index))
        question = suite.questions[0]
        paths = [
            textualize(p)
            for p in extract_paths(suite.kg, question.topic_entities[0], max_hops=2)
        ]
        vocab = build_vocabulary(paths, extra_pieces=[" → "])
        tokenizer = ReferenceTokenizer(vocab)
        omega = OMEGAS[index % len(OMEGAS)]
        space = SPACES[index % len(SPACES)]

        # the table LM ignores prompt content; the two branches are keyed by
        # distinct prompt token sequences
        prompts = PromptPair(original=paths[0], masked="[MASK]", masked_spans=())
        main_ids = tuple(tokenizer.encode(prompts.original))
        lm = RecordingTableLm(vocab.size, seed=4000 + index, main_ids=main_ids)
        automaton = compile_paths(tokenizer, paths)
        result = beam_decode(
            lm, prompts, automaton, tokenizer,
            DecodeConfig(beam_size=1), PipelineConfig(omega=omega, space=space),
        )
        top = result.ranked[0]

        fixture = {
            "name": f"fixture_{index:02d}",
            "vocab_text": dump_vocabulary(vocab),
            "vocab_size": vocab.size,
            "question": question.question,
            "topic_entities": list(question.topic_entities),
            "paths": paths,
            "omega": omega,
            "space": space,
            "tables": lm.tables,
            "expected_tokens": list(top.token_ids),
            "expected_text": top.text,
            "expected_answer": result.answer,
        }
        path = out_dir / f"fixture_{index:02d}.json"
        path.write_text(json.dumps(fixture), encoding="utf-8")
        print(
            f"{path.name}: vocab={vocab.size} paths={len(paths)} omega={omega} "
            f"space={space} tokens={len(top.token_ids)}"
        )


if __name__ == "__main__":
    main()
