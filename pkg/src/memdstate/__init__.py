"""Relax/Working EEG state classification from multivariate EMD features."""
from .errors import (ChannelMismatch, InsufficientExtrema, InvalidBand, SegmentationError,
                     ValidationError)
from .signal_model import (ClassLabel, MultichannelFrame, MultichannelRecording, StateInterval,
                           bandpass_filter, load_dataset, load_recording, segment)
from .memd import DirectionSet, ImfStack, SiftConfig, decompose, generate_directions
from .nonlinear_features import FeatureVector, ImfFeatureSet, extract_memd_features
from .spectral_features import extract_dft_features, extract_dwt_features
from .ensemble import BoostedEnsemble, BoostParams, ForestParams, train_boosted
from .pipeline import (CvConfig, CvReport, ExperimentConfig, FeatureMode, LabeledSample,
                       build_dataset, cross_validate, evaluate_regions, export_psd)
from .selection import pearson, rank_features, rank_imfs

__version__ = "0.1.0"

__all__ = [
    "ChannelMismatch", "InsufficientExtrema", "InvalidBand", "SegmentationError", "ValidationError",
    "ClassLabel", "MultichannelFrame", "MultichannelRecording", "StateInterval",
    "bandpass_filter", "load_dataset", "load_recording", "segment",
    "DirectionSet", "ImfStack", "SiftConfig", "decompose", "generate_directions",
    "FeatureVector", "ImfFeatureSet", "extract_memd_features",
    "extract_dft_features", "extract_dwt_features",
    "BoostedEnsemble", "BoostParams", "ForestParams", "train_boosted",
    "CvConfig", "CvReport", "ExperimentConfig", "FeatureMode", "LabeledSample",
    "build_dataset", "cross_validate", "evaluate_regions", "export_psd",
    "pearson", "rank_features", "rank_imfs",
]
