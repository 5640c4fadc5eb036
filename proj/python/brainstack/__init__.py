# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the brainstack core library."""

from ._core import (
    BrainstackError,
    cross_entropy,
    default_montage16,
    distill_loss,
    parse_montage_text,
    routing_weights,
    schedule_weights,
)

__all__ = [
    "BrainstackError",
    "cross_entropy",
    "default_montage16",
    "distill_loss",
    "parse_montage_text",
    "routing_weights",
    "schedule_weights",
]
