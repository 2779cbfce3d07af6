"""Adversarial-input laboratory: attacks, hardened training, radius probing
and attack-agnostic tampering analysis on small networks."""

from ._core import (  # noqa: F401
    Checkpoint,
    NetworkSpec,
    analyze,
    attack,
    build_mnist_cnn,
    build_synthetic_mlp,
    classify,
    confidence,
    distill,
    frobenius_radius_bound,
    input_jacobian,
    load_checkpoint,
    load_idx,
    precision_recall,
    synth_blobs,
    synth_digits,
    train,
)

__all__ = [
    "Checkpoint",
    "NetworkSpec",
    "analyze",
    "attack",
    "build_mnist_cnn",
    "build_synthetic_mlp",
    "classify",
    "confidence",
    "distill",
    "frobenius_radius_bound",
    "input_jacobian",
    "load_checkpoint",
    "load_idx",
    "precision_recall",
    "synth_blobs",
    "synth_digits",
    "train",
]
