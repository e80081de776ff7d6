"""Continuous lead-time-to-initiation prediction for spoken dialogue.

Library + CLI for predicting, from one speaker's audio and incremental
transcript, how many seconds remain until the dialogue partner next starts
speaking. Ships the mixture-density predictor, classical baselines, a
synthetic-corpus generator, and bucketed mean-absolute-error evaluation.
"""

__version__ = "0.1.0"
