"""Multi-view text-guided face anti-spoofing toolkit."""

from .config import RunConfig
from .model import FasModel, build_model
from .text_bank import TextPairBank

__version__ = "0.1.0"

__all__ = ["RunConfig", "FasModel", "build_model", "TextPairBank", "__version__"]
