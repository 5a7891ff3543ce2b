"""Dynamic accountable storage: IBLT sketches, an IBLT tree over a protected
Cartesian tree, and a client/server protocol that detects and recovers lost
or corrupted blocks."""
from .errors import (AuditRefused, BadTag, DASError, DuplicateKey, KeyNotFound, RecoveryFailure,
                     UnknownKey)
from .iblt import Iblt, IbltParams, PeelResult, Triple, cell_indices, peel
from .iblt_tree import ConstructStats, IbltTree
from .cartesian import PctTree, pct_init, protected_split
from .protocol import (AuditReport, ClientState, ServerState, accountability_challenge,
                       client_audit, delete, detect_corrupted, get, put, restore, server_audit,
                       setup)
from .store import BlockStore, FaultAction, FaultPlan, MemoryStore, inject
from .tags import (PublicParams, SecretKey, hash_to_group, keygen, make_tag, purity_secret,
                   verify_tag)

__version__ = "0.1.0"
