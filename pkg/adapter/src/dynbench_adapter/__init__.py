"""Reference external predictor for the dynbench wire protocol."""

from .models import ConstantVelocityModel, KalmanConstantVelocityModel, NeuralModelSkeleton
from .server import AdapterConfig, serve, serve_stream

__version__ = "0.1.0"
