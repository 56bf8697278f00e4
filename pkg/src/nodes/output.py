import logging

from src.features import write_wav
from src.nodes.error_handler import guarded
from src.state import ConversionState

logger = logging.getLogger(__name__)


@guarded("output")
def output_node(state: ConversionState) -> dict:
    """Write the converted clip."""
    out_path = state.get("out_path")
    if not out_path:
        return {"error": "output: no output path"}
    path = write_wav(out_path, state["output_clip"])
    logger.info(f"[Pipeline] Wrote {path} ({state['output_clip'].duration:.2f}s)")
    return {"written": str(path)}
