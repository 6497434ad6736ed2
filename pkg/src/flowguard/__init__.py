"""Flow-metadata anomaly detection for encrypted SCADA traffic."""
from .detector import DetectionModel, DetectionResult, build_model, classify, load_model, save_model
from .flowmetrics import FEATURE_NAMES, SegmenterConfig, extract, extract_pcap
from .ingest import PcapReader, read_pcap
from .preprocess import ScalerParams

__version__ = "0.1.0"

__all__ = [
    "DetectionModel", "DetectionResult", "FEATURE_NAMES", "PcapReader", "ScalerParams",
    "SegmenterConfig", "build_model", "classify", "extract", "extract_pcap", "load_model",
    "read_pcap", "save_model",
]
