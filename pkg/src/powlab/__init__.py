"""powlab: a desk-scale Proof-of-Work blockchain network for consensus demonstrations.

Multiple node processes mine SHA-256 blocks at throttled hashrates, gossip them
over configurable peer topologies with injectable outbound latency, and expose
their chain state over JSON-RPC. An orchestrator configures the nodes, runs
timed experiments, collects per-node event logs, and aggregates consensus
metrics (contributions, uncle rate, agreement/convergence).
"""

__version__ = "0.1.0"

from powlab.chain import (
    Block,
    BlockHeader,
    BlockTree,
    genesis_block,
    hash_header,
    meets_difficulty,
)

__all__ = [
    "Block",
    "BlockHeader",
    "BlockTree",
    "genesis_block",
    "hash_header",
    "meets_difficulty",
]
