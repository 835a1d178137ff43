"""Information rates of a deletion channel followed by a finite-state channel."""
from .channel_model import ChannelSpec, concat_law, embedding_count, random_channel_spec
from .exact_info import exact_cn, joint_law, mi_with_block_side_info, mutual_information
from .input_models import MarkovInputSpec, lift, uniform_markov
from .io import builtin_spec, load_spec, save_spec
from .trellis_estimator import RateEstimate, estimate_rate

__all__ = [
    "ChannelSpec",
    "MarkovInputSpec",
    "RateEstimate",
    "builtin_spec",
    "concat_law",
    "embedding_count",
    "estimate_rate",
    "exact_cn",
    "joint_law",
    "lift",
    "load_spec",
    "mi_with_block_side_info",
    "mutual_information",
    "random_channel_spec",
    "save_spec",
    "uniform_markov",
]
__version__ = "0.1.0"
