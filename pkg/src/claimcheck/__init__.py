"""claimcheck: verify statistical claims in text documents against relational tables.

The package turns text claims into candidate table queries, plans cheap
question sequences for human (or simulated) checkers, and schedules claim
batches to balance verification cost against classifier training value.
"""

__version__ = "0.1.0"
