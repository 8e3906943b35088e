"""scenegrasp: synthesis and evaluation of scene-aware full-body grasping data."""

__version__ = "0.1.0"
