"""System identification of a self-propelled swarm: simulator, baselines and a physics-informed Neural ODE."""
from .state import InitRanges, SwarmParams, SwarmState, Trajectory
from .simulator import simulate, run_from_seed
from .regime import Regime, classify_regime
from .metrics import mfe, mfe_series

__version__ = "0.1.0"
