import logging
from functools import wraps
from typing import Callable

from src.errors import AdvGanError
from src.state import ConversionState

logger = logging.getLogger(__name__)

NodeFn = Callable[[ConversionState], dict]


def guarded(name: str) -> Callable[[NodeFn], NodeFn]:
    """
    Skip the node once an earlier one reported an error, and turn library/IO
    failures into an {"error": ...} update instead of raising across the graph.
    """

    def decorate(node: NodeFn) -> NodeFn:
        @wraps(node)
        def run(state: ConversionState) -> dict:
            if state.get("error"):
                return {}
            try:
                return node(state)
            except (AdvGanError, OSError) as e:
                logger.error(f"[Pipeline] {name} failed: {e}")
                return {"error": f"{name}: {e}"}

        return run

    return decorate
