import hashlib
import logging
import sys
import time

from models.graph import DirectedGraph, to_edge_list
from utils.graph_io import read_graph, read_partition

TOOL_VERSION = "0.3.0"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)


def setup_logging(verbosity: int = 0):
    level = logging.INFO
    if verbosity > 0:
        level = logging.DEBUG
    elif verbosity < 0:
        level = logging.WARNING
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def graph_digest(g: DirectedGraph) -> str:
    return hashlib.sha256(to_edge_list(g).encode()).hexdigest()


def load_graph(path) -> DirectedGraph:
    start_time = time.time()
    g = read_graph(path)
    logger.info("Loaded graph %s (n = %d, m = %d) in %.2fs", path, g.n, g.m, time.time() - start_time)
    return g


def load_partition(path, n: int):
    start_time = time.time()
    partition = read_partition(path, n)
    logger.info("Loaded partition %s (K = %d) in %.2fs", path, partition.n_blocks, time.time() - start_time)
    return partition
