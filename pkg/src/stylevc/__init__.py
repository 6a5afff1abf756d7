"""stylevc: style-transferable non-parallel voice conversion toolkit."""

__version__ = "0.1.0"

from .features import (  # noqa: F401
    AudioWaveform,
    F0Contour,
    FeatureConfig,
    MelSpectrogram,
    compute_log_mel,
    extract_f0,
    interpolate_f0,
    invert_mel,
    read_wav,
    utterance_mvn,
    write_wav,
)
