import os
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# STORAGE
DATA_DIR = os.getenv('HRV_DATA_DIR', os.path.join(BASE_DIR, 'data'))
RUNS_DIR = os.getenv('HRV_RUNS_DIR', os.path.join(BASE_DIR, 'runs'))
PRESETS_DIR = os.path.join(BASE_DIR, 'configs')

# REPRODUCIBILITY
DEFAULT_SEED = int(os.getenv('HRV_SEED', '7'))
DETERMINISTIC = os.getenv('HRV_DETERMINISTIC', 'false').lower() in ('1', 'true', 'yes')

# LOGGING
LOG_LEVEL = os.getenv('HRV_LOG_LEVEL', 'INFO').upper()

# UTILS
THREAD_ENV_VARS = ['OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS', 'NUMEXPR_NUM_THREADS']
