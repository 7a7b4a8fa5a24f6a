"""Cross-view action recognition pipeline.

Dense optical flow, a fixed 3D convolutional feature extractor, small
trainable classifier heads, and an evaluation harness over view-transfer
protocols.
"""

__version__ = "0.1.0"
