import sys
from pathlib import Path

_root = Path(__file__).resolve().parents[1]
for p in (_root / "src", Path(__file__).resolve().parent):
    if str(p) not in sys.path:
        sys.path.insert(0, str(p))
