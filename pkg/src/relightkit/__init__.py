"""Ray-traced relighting toolkit: meshes, environment lighting, G-buffer
rendering, compositing and image metrics."""

__version__ = "0.1.0"
