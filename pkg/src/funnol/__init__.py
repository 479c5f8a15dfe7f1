"""Nonlinear representation learning for (multivariate) functional data.

Recurrent encoder/decoder networks with a classifier head, trained jointly
on reconstruction and classification losses, plus a discretised FPCA
baseline and repeated-split evaluation protocols.
"""

from funnol.corruption import CorruptionConfig, corrupt
from funnol.dataset import (Dataset, FunctionalSample, SplitSpec, downsample, load_ucr,
                            split, standardize, write_ucr)
from funnol.eval import (ProtocolConfig, ProtocolResult, bound_diagnostic,
                         empirical_margin_loss, logreg_fit, logreg_predict,
                         run_sparsity_experiment, run_split_protocol)
from funnol.fpca import FpcaModel, fpc_scores, fpca_fit, fpca_reconstruct, impute_linear
from funnol.model import FunnolParams, forward, init_params
from funnol.train import TrainConfig, TrainReport, backward, clip_gradients, fit

__version__ = "0.1.0"
