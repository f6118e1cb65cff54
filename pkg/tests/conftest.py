import sys
from pathlib import Path

# Make test-local helper modules (astgen, oracles, xlsxbuild) importable
# regardless of how pytest was invoked.
sys.path.insert(0, str(Path(__file__).parent))
