"""Local stochastic intensity models: calibration, Cox simulation and checks."""

__version__ = "0.1.0"
