import sys
from pathlib import Path

# let test modules import each other (the acceptance gate re-runs the
# property suites defined in test_properties)
sys.path.insert(0, str(Path(__file__).resolve().parent))
