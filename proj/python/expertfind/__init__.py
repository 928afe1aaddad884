# Copyright 2026 The expertfind Authors
# SPDX-License-Identifier: Apache-2.0

"""Expert finding with a target-aware pre-trained encoder.

Every phase reads and writes the same on-disk directories as the
``expertfind`` command-line tool, so the two can be mixed freely.
"""

from ._core import (
    ConfigError,
    DataError,
    Error,
    NumericalError,
    ParseError,
    code_version,
    compute_metrics,
    evaluate,
    finetune,
    gradcheck,
    ingest,
    normalize_votes,
    pretrain,
    rank_of,
    synth,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "NumericalError",
    "ParseError",
    "code_version",
    "compute_metrics",
    "evaluate",
    "finetune",
    "gradcheck",
    "ingest",
    "normalize_votes",
    "pretrain",
    "rank_of",
    "synth",
]
