from src.features import resynthesize
from src.nodes.error_handler import guarded
from src.state import ConversionState


@guarded("resynthesis")
def resynthesis(state: ConversionState) -> dict:
    """Apply the converted/source envelope ratio to the source STFT."""
    return {"output_clip": resynthesize(state["clip"], state["source_gram"], state["converted_gram"])}
