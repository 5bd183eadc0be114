import os

os.environ['PYTHONIOENCODING'] = 'utf-8'
# BLAS thread counts default to 1 unless set by the caller
for _name in ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS'):
    os.environ.setdefault(_name, '1')
