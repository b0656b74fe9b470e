"""Networks with Hebbian-plastic connections trained end to end by gradient descent."""
from .core import (FIXED_SOFTMAX, FIXED_TANH, PLASTIC_TANH, FixedLayerParams, HebbianState,
                   LayerActivation, Network, NetworkSpec, PlasticLayerParams, ShapeError,
                   fixed_forward, hebb_update, network_forward, plastic_forward, reset_traces)
from .engine import BACKEND, EpisodeResult, run_episode_arrays
from .grad import (EpisodeGradient, GradientAccumulator, ParamId, accumulate_episode_gradient,
                   grad_reset, param_ids, plastic_grad_step, upper_backprop)
from .tasks import EpisodeScript, TaskConfig, generate

__version__ = "0.1.0"
