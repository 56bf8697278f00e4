from src.features import extract_gram, read_wav
from src.nodes.error_handler import guarded
from src.state import ConversionState


@guarded("input_handler")
def input_handler(state: ConversionState) -> dict:
    """Read the source WAV and extract its (raw) envelope gram."""
    wav_path = state.get("wav_path")
    if not wav_path:
        return {"error": "input_handler: no input file"}
    if state.get("trainer_state") is None:
        return {"error": "input_handler: no trained model"}
    clip = read_wav(wav_path)
    return {"clip": clip, "source_gram": extract_gram(clip, speaker="source")}
