"""Fitness-for-duty evaluation toolkit.

Frame quality selection on NIR eye images, frozen-embedding corpora, a small
trainable classification head, biometric metrics (DET/EER/operating points),
and the zero-shot / fine-tune / leave-one-out experiment protocols.
"""

__version__ = "0.1.0"

from . import cli, embedstore, errors, head, metrics, protocols, quality  # noqa: F401
