"""mpcaug - sensitivity-based data augmentation for approximate MPC."""

__version__ = "0.1.0"
