"""kgdecode: knowledge-graph-constrained decoding.

Compiles KG reasoning paths into a token automaton, contrasts an original
and a masked prompt branch to sharpen question-aligned logits, filters
illegal tokens through the automaton, and beam-decodes logic-consistent
reasoning paths.
"""

from .automaton import TokenAutomaton, compile_paths
from .decode import (
    AdversarialLm,
    BeamState,
    DecodeConfig,
    DecodeResult,
    LmProvider,
    RankedPath,
    ToyLm,
    beam_decode,
    toy_lm,
)
from .kg import (
    KnowledgeGraph,
    Path,
    Triple,
    extract_paths,
    ingest_triples,
    load_triples_file,
    path_from_text,
    textualize,
)
from .logits import PipelineConfig, filter_logits, softmax, step_distribution, strengthen
from .prompts import PromptPair, build_prompts, default_template
from .scoring import (
    EmbeddingProvider,
    HashedBagEmbedder,
    HttpEmbeddingClient,
    QuestionInstance,
    ScoredPathSet,
    ThresholdPolicy,
    embed,
    score_paths,
)
from .tokenizer import (
    ReferenceTokenizer,
    Tokenizer,
    Vocabulary,
    build_vocabulary,
    decode,
    encode,
    load_vocabulary,
    save_vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialLm",
    "BeamState",
    "DecodeConfig",
    "DecodeResult",
    "EmbeddingProvider",
    "HashedBagEmbedder",
    "HttpEmbeddingClient",
    "KnowledgeGraph",
    "LmProvider",
    "Path",
    "PipelineConfig",
    "PromptPair",
    "QuestionInstance",
    "RankedPath",
    "ReferenceTokenizer",
    "ScoredPathSet",
    "ThresholdPolicy",
    "TokenAutomaton",
    "Tokenizer",
    "ToyLm",
    "Triple",
    "Vocabulary",
    "beam_decode",
    "build_prompts",
    "build_vocabulary",
    "compile_paths",
    "decode",
    "default_template",
    "embed",
    "encode",
    "extract_paths",
    "filter_logits",
    "ingest_triples",
    "load_triples_file",
    "load_vocabulary",
    "path_from_text",
    "save_vocabulary",
    "score_paths",
    "softmax",
    "step_distribution",
    "strengthen",
    "textualize",
    "toy_lm",
]
