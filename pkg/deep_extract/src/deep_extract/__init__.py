from .extract import (
    FEATURE_DIM,
    LAYERS,
    MODELS,
    ExtractError,
    ExtractSpec,
    extract_deep,
    extract_directory,
    read_manifest,
    write_feature_file,
)

__version__ = "0.1.0"

__all__ = [
    "FEATURE_DIM",
    "LAYERS",
    "MODELS",
    "ExtractError",
    "ExtractSpec",
    "extract_deep",
    "extract_directory",
    "read_manifest",
    "write_feature_file",
    "__version__",
]
