import os
import sys

# keep BLAS single-threaded inside tests: the training-size GEMMs are small
# enough that thread sync costs more than it buys, and results stay identical
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

sys.path.insert(0, os.path.join(os.path.dirname(__file__)))
