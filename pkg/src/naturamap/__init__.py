"""naturamap: pixel-wise land-naturalness regression with coordinate and
context fusion, trainable end-to-end on a built-in synthetic dataset."""

__version__ = "0.1.0"

from .errors import (AllWaterError, ConfigError, CorruptFileError, FormatError,
                     FusionError, InvalidCoordinateError, NaturamapError,
                     NumericalError, ShapeError)
from .geo import GeoPoint, build_geo_grid, encode_latitude, encode_longitude
from .ntsr import read_tensor, write_tensor
from .synth import Sample, SynthParams, generate_sample, center_crop
from .dataset import (DatasetManifest, augment, compute_sample_weights,
                      generate_dataset, load_manifest, load_split)
from .model import (ArchConfig, ModelBundle, ae_decoder_forward,
                    ae_encoder_forward, fuse_latents, freeze,
                    geo_encoder_forward, init_parameters, load_bundle,
                    paper_arch, predict, save_bundle, unet_decoder_forward,
                    unet_encoder_forward)
from .optim import (TrainConfig, adam_step, early_stop, lr_at, masked_mae_loss,
                    reconstruction_loss)
from .train import TrainReport, train_autoencoder, train_model
from .metrics import EvalReport, evaluate, masked_mae, masked_mse, mssim
