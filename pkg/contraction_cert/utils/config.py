import os


def _int_env(var_name: str, default: int) -> int:
    value = os.getenv(var_name)
    if value is None:
        return default
    value = str(value).strip()
    if not value:
        return default
    try:
        return int(value)
    except ValueError:
        return default


def _float_env(var_name: str, default: float) -> float:
    value = (os.getenv(var_name) or "").strip()
    if not value:
        return default
    try:
        return float(value)
    except ValueError:
        return default


def _bool_env(var_name: str, default: bool = False) -> bool:
    value = (os.getenv(var_name) or "").strip().lower()
    if not value:
        return default
    return value in ("1", "true", "yes", "on")


# =========================
# Runtime
# =========================
THREADS = max(1, _int_env("CONTRACTION_CERT_THREADS", 1))
DEFAULT_SEED = _int_env("CONTRACTION_CERT_SEED", 0)
LOG_LEVEL = (os.getenv("CONTRACTION_CERT_LOG_LEVEL") or "WARNING").strip().upper()
REPORT_TIMESTAMPS = _bool_env("CONTRACTION_CERT_TIMESTAMPS", True)
REPORT_SCHEMA_VERSION = 1


# =========================
# Muestreo
# =========================
GRID_POINTS_PER_AXIS = _int_env("CONTRACTION_CERT_GRID_POINTS", 11)
LHS_COUNT = _int_env("CONTRACTION_CERT_LHS_COUNT", 2000)
GRID_MAX_DIM = 3
SCAN_MAX_DIM = 4
PAIR_COUNT = 500
SHORT_PAIR_COUNT = 500
SHORT_PAIR_SCALE = 1e-3
DIRECTION_COUNT = 2000


# =========================
# Tolerancias numéricas
# =========================
PSD_REL_TOL = 1e-9
TIE_REL_TOL = 1e-12
FD_REL_STEP = 1e-5
EIG_REL_TOL = 1e-10
LIMIT_ORACLE_STEPS = (1e-4, 1e-6, 1e-8)
WEAK_BAND = 1e-6
METZLER_OPT_TOL = 1e-8


# =========================
# Certificados
# =========================
LURE_LAMBDA_GRID = 25
LURE_LAMBDA_RANGE = (-3.0, 3.0)
BALL_SAFETY = 0.1
BALL_GROWTH = 1.5
BALL_CANDIDATES = 10


# =========================
# Discretización y simulación
# =========================
STEP_GRID_POINTS = 64
STEP_GRID_DECADES = 4
BANACH_WINDOW = 10
RATIO_CLAMP = (1e-6, 1.0 - 1e-9)
DEFAULT_DT = _float_env("CONTRACTION_CERT_DT", 1e-3)
FIXED_POINT_SOLVE_EVERY = 10
DISTANCE_FLOOR = 1e-10
PROBE_DIRECTIONS = 256
STRUCTURED_PAIR_POINTS = 50
L1_PROBE_EPS = 1e-9
