from src.features import apply_norm
from src.nodes.error_handler import guarded
from src.state import ConversionState
from src.trainer import convert, source_stats


@guarded("conversion")
def conversion(state: ConversionState) -> dict:
    trainer_state = state["trainer_state"]
    direction = state.get("direction", "xy")
    normalized = apply_norm(state["source_gram"], source_stats(trainer_state, direction))
    return {"converted_gram": convert(trainer_state, normalized, direction)}
