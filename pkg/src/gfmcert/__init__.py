"""Small-signal stability certificates for grid-forming droop converters.

Setting ``GFMCERT_THREADS`` caps the BLAS/OpenMP thread pools; it must be
set before numpy is first imported.
"""
import os as _os

_threads = _os.environ.get("GFMCERT_THREADS", "").strip()
if _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ[_var] = _threads

from .errors import (DegenerateOperatingPoint, GfmCertError, IllPosed, Level2Mismatch,  # noqa: E402
                     NotSimplePole, ParseError, PoleOnGrid, RhoZero, SingularInterior, ValidationError)
from .netmodel import NetworkLevel, NetworkSpec  # noqa: E402
from .devices import ConverterSpec, DetailedVscSpec  # noqa: E402
from .certificates import certify  # noqa: E402
from .closedloop import assemble, closed_loop_verdict, fvt_check, simulate_step  # noqa: E402
from .passivity import certificate_trace  # noqa: E402
from .scenario import parse_scenario, serialize_scenario  # noqa: E402

__version__ = "0.1.0"
