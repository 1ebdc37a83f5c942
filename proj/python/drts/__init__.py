# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The DenseRTSleep Authors
"""Single-channel EEG sleep staging."""

from ._drts import (
    ConfigError,
    class_distribution,
    contrastive_loss,
    cross_entropy,
    evaluate,
    gradcheck,
    ingest,
    kl_divergence,
    metrics,
    param_count,
    resolve_config,
    synth,
    train,
)

__all__ = [
    "ConfigError",
    "class_distribution",
    "contrastive_loss",
    "cross_entropy",
    "evaluate",
    "gradcheck",
    "ingest",
    "kl_divergence",
    "metrics",
    "param_count",
    "resolve_config",
    "synth",
    "train",
]
