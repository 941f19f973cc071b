"""Coded slotted ALOHA over massive MIMO: simulation and analysis toolkit.

Monte Carlo simulator for grant-free random access where users repeat
coded packets in randomly chosen slots with randomly chosen pilots, and a
large antenna array decodes singletons and cancels interference either in
the combining accumulators or directly on the received slot signals.
Companion analytics predict singleton failure rates and decoding
complexity; a logical benchmark strips away the physical layer to isolate
collision effects.
"""

__version__ = "0.1.0"
