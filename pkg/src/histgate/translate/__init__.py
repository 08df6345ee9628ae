"""Source-to-target image translation backends behind one contract.

All backends preserve image shape and id alignment and never modify masks:
``cyclegan`` (trained generator pair), ``hist-match`` (monotone remap onto a
reference histogram), and ``fda`` (low-frequency amplitude swap).
"""

from .fda import fda_translate, low_freq_window, swap_low_freq_amplitude
from .gan import (
    BACKENDS,
    PatchDiscriminator,
    ResnetGenerator,
    TrainingDivergedError,
    TranslationConfig,
    TranslatorModel,
    apply_translator,
    cycle_loss,
    train_translator,
)
from .histmatch import hist_match, match_lut

__all__ = [
    "BACKENDS",
    "TranslationConfig",
    "TranslatorModel",
    "TrainingDivergedError",
    "ResnetGenerator",
    "PatchDiscriminator",
    "cycle_loss",
    "train_translator",
    "apply_translator",
    "hist_match",
    "match_lut",
    "fda_translate",
    "swap_low_freq_amplitude",
    "low_freq_window",
]
