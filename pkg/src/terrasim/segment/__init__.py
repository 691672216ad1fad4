from ..kernels import batchnorm_infer, conv3d, maxpool3d, upsample_concat
from .baseline import BaselineLabeler, BaselineParams, baseline_geometric_label, planarity_residual
from .labelers import ImportLabeler, UNetLabeler, VoxelLabeler, segment_cloud
from .unet import UNetConfig, WeightBundle, conv_layers, init_weights, tensor_shapes, unet_forward
