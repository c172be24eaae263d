"""dcmgrid: dissipativity-based control and topology co-design for DC microgrids."""

__version__ = "0.1.0"
