"""Dual attention-gated U-Net segmentation on a numpy autodiff engine."""

from .autodiff import (Tensor, add, amax, backward, clip, div, log, matmul, mul,
                       neg, no_grad, relu, reshape, sigmoid, sub, tmean, topo_order,
                       tsum)
from .blocks import (AGResidual, ChannelAttention, GatingSignal, MKRC,
                     MKRC_KERNELS, SEASPP, SEASPP_DILATIONS, SEBlock,
                     SpatialAttention, TAG, TAM)
from .errors import (ConfigurationError, TrainingDiverged, ZeroVarianceError)
from .gradcheck import GradCheckReport, grad_check
from .kernels import (batch_norm, concat_channels, conv2d, global_avg_pool,
                      global_max_pool, maxpool2d, upsample_bilinear2x)
from .losses import bce, dice, hybrid, total_loss
from .metrics import (ConfusionCounts, MetricsReport, all_metrics, confusion,
                      dsc, iou, precision, recall, report_for_pairs)
from .model import (DoubleUNetPlus, ModelOutputs, NetworkConfig,
                    load_checkpoint, save_checkpoint)
from .nn import BatchNorm2d, Conv2d, ConvSpec, Linear, Module, ModuleList, Parameter
from .stats import TTestResult, paired_t_test
from .train import (ABLATION_GRID, Adam, EpochLog, ReduceOnPlateau, TrainConfig,
                    TrainResult, ablate, ablation_csv, epochs_csv, evaluate, train)

__version__ = "0.1.0"
