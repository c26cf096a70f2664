"""One-shot geometric affordance detection for 3D scenes.

Train a compact interaction descriptor from a single (posed body, scene,
reference point) example, then detect locations in unseen scenes that
support the same interaction and place the body there.
"""

__version__ = "0.1.0"
