"""Training and activation-export companion for the complexity profiler."""

from .data import load_mnist_dir, mnist_dir_from_env, synthetic_dataset
from .export import export_reference_activations, export_resnet_activations
from .model import LeNet5, params_to_model, state_to_params
from .train import TrainSpec, eval_error, train_and_export

__version__ = "0.1.0"
