import glob
import os
import sys

# source-tree runs: pick up the python package and the built extension
_root = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
sys.path.insert(0, os.path.join(_root, "python"))
for pattern in ("build/bindings", "build*/bindings"):
    for d in glob.glob(os.path.join(_root, pattern)):
        if glob.glob(os.path.join(d, "_core*.so")):
            sys.path.insert(0, d)
            break
