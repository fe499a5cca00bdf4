"""Multi-stage scene-text recognizer: Python bindings over the C++ core."""

import json

from ._core import (
    EOS_INDEX,
    MAX_LEN,
    NUM_CLASSES,
    CharsetError,
    ConfigError,
    DomainError,
    IndexError,
    IOError,
    LengthError,
    Recognizer,
    ShapeError,
    char_edit_distance,
    decode_sequence,
    encode_label,
    evaluate_masked_checkpoint,
    generate_dataset,
    gumbel_from_uniform,
    gumbel_softmax_st,
    make_toy_lexicon,
    render_word_image,
    set_num_threads,
    word_recognition_accuracy,
)
from . import _core

__all__ = [
    "EOS_INDEX",
    "MAX_LEN",
    "NUM_CLASSES",
    "CharsetError",
    "ConfigError",
    "DomainError",
    "IndexError",
    "IOError",
    "LengthError",
    "Recognizer",
    "ShapeError",
    "char_edit_distance",
    "decode_sequence",
    "encode_label",
    "evaluate",
    "evaluate_masked_checkpoint",
    "generate_dataset",
    "gumbel_from_uniform",
    "gumbel_softmax_st",
    "make_toy_lexicon",
    "pretrain_semantic",
    "render_word_image",
    "set_num_threads",
    "train",
    "word_recognition_accuracy",
]


def pretrain_semantic(config):
    """Masked pretraining; `config` uses the pretrain-semantic JSON schema."""
    return json.loads(_core.pretrain_semantic_json(json.dumps(config)))


def train(config):
    """Full training run; `config` uses the train JSON schema. Returns the final report."""
    return json.loads(_core.train_json(json.dumps(config)))


def evaluate(checkpoint, manifest, batch_size=64):
    """Per-stage WRA and mean edit distance of a checkpoint on a manifest."""
    return json.loads(Recognizer(str(checkpoint)).evaluate_json(str(manifest), batch_size))
