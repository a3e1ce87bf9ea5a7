from ._core import (
    ConfigError,
    DataError,
    Model,
    NumericError,
    SearchIndex,
    ShapeError,
    cider,
    corpus_bleu,
    load_corpus,
    meteor,
    rouge_l,
    run_cli,
    sentence_bleu,
    split_ids,
    tokenize_code,
    tokenize_nl,
    tree_debug,
    tree_nodes,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Model",
    "NumericError",
    "SearchIndex",
    "ShapeError",
    "cider",
    "corpus_bleu",
    "load_corpus",
    "meteor",
    "rouge_l",
    "run_cli",
    "sentence_bleu",
    "split_ids",
    "tokenize_code",
    "tokenize_nl",
    "tree_debug",
    "tree_nodes",
]
