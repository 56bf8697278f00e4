from __future__ import annotations

import logging
from typing import Optional

from langgraph.graph import END, START, StateGraph

from src.checkpoint import TrainerState
from src.nodes.conversion import conversion
from src.nodes.input_handler import input_handler
from src.nodes.output import output_node
from src.nodes.resynthesis import resynthesis
from src.state import ConversionState

logger = logging.getLogger(__name__)

# =========================
# PIPELINE CACHING
# =========================
_cached_graph = None
_cached_pipeline = None


def _build_graph() -> StateGraph:
    """WAV in -> envelope gram -> converted gram -> resynthesised WAV out."""
    graph = StateGraph(ConversionState)

    # Nodes
    graph.add_node("input_handler", input_handler)
    graph.add_node("conversion", conversion)
    graph.add_node("resynthesis", resynthesis)
    graph.add_node("output", output_node)

    # Edges
    graph.add_edge(START, "input_handler")
    graph.add_edge("input_handler", "conversion")
    graph.add_edge("conversion", "resynthesis")
    graph.add_edge("resynthesis", "output")
    graph.add_edge("output", END)

    return graph


def get_cached_pipeline():
    """
    Compiled conversion graph, built once per process.
    Runs carry everything in their input state, so no checkpointer is attached.
    """
    global _cached_graph, _cached_pipeline

    if _cached_pipeline is None:
        logger.info("[Pipeline] Building graph for the first time...")
        _cached_graph = _build_graph()
        _cached_pipeline = _cached_graph.compile()
    return _cached_pipeline


def run_conversion(
    trainer_state: TrainerState,
    wav_path: str,
    out_path: str,
    direction: str = "xy",
) -> ConversionState:
    """Convert one WAV file end to end; failures come back in the "error" field."""
    initial: ConversionState = {
        "wav_path": str(wav_path),
        "out_path": str(out_path),
        "direction": direction,
        "trainer_state": trainer_state,
        "error": None,
        "written": None,
    }
    final: Optional[ConversionState] = get_cached_pipeline().invoke(initial)
    return final or initial
