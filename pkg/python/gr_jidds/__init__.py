"""
GNU Radio Out-of-Tree Module: gr-jidds
Joint iterative detection and decoding of LDPC-coded pages over
two-dimensional interference channels
"""

__version__ = "0.1.0"

from .channel2d import ChannelMatrix, Mapping, load_channel
from .density_evolution import DeSettings, de_run, threshold_search
from .detector2d import detect, detect_windowed
from .jidds import IterationSchedule, JiddsReceiver, ber_sweep, build_link, run_frame
from .ldpc_code import CosetLdpcCode, DegreeDistribution, ParityCheckMatrix, load_code
from .spa_decoder import SpaDecoder

__all__ = [
    "ChannelMatrix",
    "Mapping",
    "load_channel",
    "DeSettings",
    "de_run",
    "threshold_search",
    "detect",
    "detect_windowed",
    "IterationSchedule",
    "JiddsReceiver",
    "ber_sweep",
    "build_link",
    "run_frame",
    "CosetLdpcCode",
    "DegreeDistribution",
    "ParityCheckMatrix",
    "load_code",
    "SpaDecoder",
]

try:
    from .jidds_decoder import jidds_decoder
    from .jidds_encoder import jidds_encoder
except ImportError:
    # GNU Radio is optional; the library works without the flowgraph blocks
    pass
else:
    __all__ += ["jidds_encoder", "jidds_decoder"]
