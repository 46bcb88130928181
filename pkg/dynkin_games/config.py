"""
Runtime configuration for the Dynkin game toolkit
"""

import os
from dotenv import load_dotenv

load_dotenv()

# Exhaustive search limits
ENUMERATION_CAP = int(os.getenv('DYNKIN_ENUMERATION_CAP', '1000000'))
NODE_BUDGET = int(os.getenv('DYNKIN_NODE_BUDGET', '2000000'))
EXPANSION_MAX_STEPS = int(os.getenv('DYNKIN_EXPANSION_MAX_STEPS', '12'))
MAX_LISTED_EQUILIBRIA = int(os.getenv('DYNKIN_MAX_LISTED_EQUILIBRIA', '64'))

# Float-mode comparisons, scaled by max(1, |a|, |b|)
FLOAT_TOLERANCE = float(os.getenv('DYNKIN_FLOAT_TOLERANCE', '1e-9'))

# Worker processes for partitioned enumeration and study cells
WORKERS = int(os.getenv('DYNKIN_WORKERS', '1'))

# Run store
DATABASE_URL = os.getenv('DYNKIN_DATABASE_URL', 'sqlite:///dynkin_runs.db')

# Logging
LOG_LEVEL = os.getenv('DYNKIN_LOG_LEVEL', 'WARNING')
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Random game generator defaults
PAYOFF_RANGE = (-9, 9)
MAX_GENERATED_DEPTH = 4
MAX_GENERATED_BRANCHING = 3

# All emitted files carry this version
FORMAT_VERSION = 1

TOOL_VERSION = '1.0.0'
