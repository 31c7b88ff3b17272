"""Photo orientation classification (0/90/180/270 degrees) on a small numpy CNN engine,
with guided-backpropagation saliency maps."""
from .checkpoint import Checkpoint, load_checkpoint, load_params, save_checkpoint
from .config import LayerSpec, NetworkConfig
from .data import (
    DatasetManifest,
    Record,
    augment_with_rotations,
    fit_and_pad,
    generate_synthetic_dataset,
    rotate90,
    split_dataset,
    to_input_tensor,
)
from .errors import ConfigMismatchError, FormatError, OrientError, ShapeError, ValidationError
from .evaluate import EvalReport, evaluate, format_report
from .guided import SaliencyMap, guided_backward, render_saliency, select_explained_output
from .imageio import Image, read_image, write_gray, write_image
from .nn import TrainConfig, backward, cross_entropy_loss, fit, forward, init_params, train_epoch
from .zoo import build_model, count_params

__version__ = "0.1.0"
