#!/usr/bin/env python3
"""Regenerate the sidecar conformance fixture under tests/data/.

The transcript is the normative protocol artifact: replaying its `send`
frames in order against a fresh server must reproduce every `expect` frame.
Run this only when the protocol intentionally changes, and re-read the diff.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from kgdecode import (  # noqa: E402
    KnowledgeGraph,
    ReferenceTokenizer,
    Triple,
    build_vocabulary,
    extract_paths,
    save_vocabulary,
    textualize,
)
from kgdecode.kg import dump_triples  # noqa: E402
from kgdecode.sidecar import SidecarEngine  # noqa: E402

QUESTION = "Which Fender guitars has Joe Walsh, composer of Help Me Make It Thru the Night, played?"
TOPIC = "Help Me Make It Thru the Night"

TRIPLES = [
    Triple(TOPIC, "music.composition.composer", "Joe Walsh"),
    Triple("Joe Walsh", "music.guitarist.guitars_played", "Fender Stratocaster"),
    Triple(TOPIC, "common.topic.notable_types", "Composition"),
    Triple("Composition", "type.type.properties", "Lyricist"),
]


def seeded_logits(rng: np.random.Generator, size: int) -> list[float]:
    return [float(x) for x in np.round(rng.normal(0.0, 2.0, size), 6)]


def main() -> None:
    data_dir = REPO / "tests" / "data"
    data_dir.mkdir(parents=True, exist_ok=True)

    kg = KnowledgeGraph.from_triples(TRIPLES)
    paths = [textualize(p) for p in extract_paths(kg, TOPIC, max_hops=2)]
    vocab = build_vocabulary(paths + [QUESTION], extra_pieces=[" → "])
    tokenizer = ReferenceTokenizer(vocab)

    (data_dir / "sidecar_kg.tsv").write_text(dump_triples(kg), encoding="utf-8")
    save_vocabulary(vocab, str(data_dir / "sidecar_vocab.txt"))

    engine = SidecarEngine(tokenizer, kg_registry={"music": str(data_dir / "sidecar_kg.tsv")})
    rng = np.random.default_rng(2024)
    size = tokenizer.vocab_size

    walk_path = next(p for p in paths if p.endswith("Composition"))
    walk_ids = tokenizer.encode(walk_path)

    sends: list[dict] = []
    seq = 0

    def frame(op: str, session_id: str | None = None, **fields) -> dict:
        nonlocal seq
        seq += 1
        msg: dict = {"op": op, "seq": seq}
        if session_id is not None:
            msg["session_id"] = session_id
        msg.update(fields)
        return msg

    sends.append(frame("init", "s1", question=QUESTION, topic_entities=[TOPIC],
                       omega=2.0, space="logit", paths=paths))
    sends.append(frame("init", "s1", question=QUESTION, topic_entities=[TOPIC], paths=paths))
    sends.append(frame("step", "s1", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))
    sends.append(frame("advance", "s1", token_id=walk_ids[0]))
    sends.append(frame("step", "s1", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))
    sends.append(frame("advance", "s1", token_id=tokenizer.eos_id))  # illegal here
    sends.append(frame("step", "s1", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))  # state unchanged
    sends.append(frame("init", "s2", question=QUESTION, topic_entities=[TOPIC],
                       omega=1.0, kg_ref="music"))
    sends.append(frame("step", "s2", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))
    sends.append(frame("step", "s1", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))  # isolation
    sends.append(frame("close", "s2"))
    sends.append(frame("close", "s2"))  # unknown-session
    sends.append(frame("step", "s2", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))  # dead-session
    for token_id in walk_ids[1:]:
        sends.append(frame("advance", "s1", token_id=token_id))
    sends.append(frame("advance", "s1", token_id=tokenizer.eos_id))  # finishes
    sends.append(frame("step", "s1", logits_main=seeded_logits(rng, size),
                       logits_mask=seeded_logits(rng, size)))  # session-finished
    sends.append(frame("close", "s1"))
    sends.append(frame("frobnicate", "s1"))  # unknown-op

    lines = []
    for msg in sends:
        expect = engine.handle(msg)
        lines.append(json.dumps({"send": msg, "expect": expect}, allow_nan=False))
    # raw non-JSON frame: connection must answer bad-frame and stay usable
    lines.append(json.dumps({
        "send_raw": "{this is not json",
        "expect": {"ok": False, "op": None, "seq": None, "session_id": None,
                   "error_code": "bad-frame"},
    }))

    (data_dir / "sidecar_transcript.jsonl").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(lines)} transcript frames; vocab size {size}")


if __name__ == "__main__":
    main()
