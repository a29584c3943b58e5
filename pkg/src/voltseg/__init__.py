"""Real-time neuron segmentation pipeline for voltage-imaging video."""

from voltseg.video_io import MaskImage, Video, load_video, save_video

__version__ = "0.1.0"

__all__ = ["Video", "MaskImage", "load_video", "save_video", "__version__"]
