from typing import Any, Optional, TypedDict

from src.features import AudioClip, EnvelopeGram


class ConversionState(TypedDict, total=False):
    wav_path: str
    out_path: str
    direction: str
    trainer_state: Any
    clip: AudioClip
    source_gram: EnvelopeGram
    converted_gram: EnvelopeGram
    output_clip: AudioClip
    written: Optional[str]
    error: Optional[str]
