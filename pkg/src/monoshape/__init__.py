"""Monocular shape sensing for tendon-driven continuum robots.

End-to-end pipeline: a Cosserat-rod static simulator and software rasterizer
generate labeled image datasets; an encoder/three-decoder convolutional
network with a differentiable weighted least-squares curve-fitting head
regresses the robot's 3D centerline from a single RGB image; a benchmark
harness reports shape/tip errors and throughput.
"""

__version__ = "0.1.0"


def __getattr__(name):
    # Lazy: keeps `import monoshape` light for CLI startup and avoids
    # importing sklearn unless the estimator facade is actually used.
    if name == "CenterlineRegressor":
        from .estimator import CenterlineRegressor

        return CenterlineRegressor
    raise AttributeError(name)


__all__ = ["CenterlineRegressor", "__version__"]
