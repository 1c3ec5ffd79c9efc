from .checkpoint import load_checkpoint, save_checkpoint
from .encoders import (HotVectorEncoder, SpectrogramEncoder, VectorInput, VideoEncoder,
                       encoder_forward)
from .layers import (GRU, Attention, AvgPool3d, Conv3d, Dense, GlobalMeanPool, Sequential, Tanh,
                     attention_apply, conv3d_forward, gru_sequence, gru_step)
from .model import ClassifierHead, FusionModel, ModalitySpec, ModelConfig, classify, fuse
from .train import Dataset, TrainConfig, predict, train
